import time

import numpy as np
import pytest

from memprobe.autoencoder import Activation, build_deep_fc
from memprobe.io import records_to_array, synthetic_dataset
from memprobe.numerics import Rng
from memprobe.trainer import TrainConfig, train


@pytest.fixture(scope="session")
def desk_run():
    """Desk-scale perfect-fit run shared by the slow tests: n=20 grayscale
    16x16 images, 10-layer FC with latent width 64, trained with seed 42
    to checkpoints at 1e-4, 1e-6 and 1e-8."""
    data = records_to_array(synthetic_dataset(20, 16, 16, seed=42))
    nontrain = records_to_array(synthetic_dataset(20, 16, 16, seed=777))
    model = build_deep_fc(256, 64, Activation("leaky_relu", 0.2), Rng(42),
                          num_layers=10)
    config = TrainConfig(seed=42, loss_checkpoints=(1e-4, 1e-6, 1e-8),
                         max_epochs=60000)
    t0 = time.perf_counter()
    checkpoints, _ = train(model, data, config)
    train_seconds = time.perf_counter() - t0
    assert checkpoints and checkpoints[-1].threshold == 1e-8, \
        "desk-scale training failed to reach 1e-8"
    return {
        "model": model,
        "checkpoints": checkpoints,
        "data": data,
        "nontrain": nontrain,
        "train_seconds": train_seconds,
    }
