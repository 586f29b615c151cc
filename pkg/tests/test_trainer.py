import copy

import numpy as np
import pytest

from memprobe.autoencoder import (Activation, AutoencoderModel, DenseLayer,
                                  TiedAutoencoder, build_deep_fc, build_tied)
from memprobe.io import records_to_array, synthetic_dataset
from memprobe.numerics import Rng, power_iteration_sigma_max
from memprobe.trainer import (Checkpoint, TrainConfig, backprop_gradients,
                              mse_loss, project_spectral_norm, train)


def _param_ref(model, key):
    kind, i = key
    if isinstance(model, TiedAutoencoder):
        return model.weight if kind == "weight" else None
    if kind == "weight":
        return model.layers[i].weight
    if kind == "bias":
        return model.layers[i].bias
    return None


def finite_diff_check(model, batch, h=1e-6, rel_tol=1e-4, stride=1):
    grads = backprop_gradients(model, batch)
    worst = 0.0
    for key, g in grads.items():
        if key[0] == "slope":
            layer_act = (model.activation if isinstance(model, TiedAutoencoder)
                         else model.layers[key[1]].activation)
            orig = layer_act.param
            layer_act.param = orig + h
            lp = mse_loss(model, batch)
            layer_act.param = orig - h
            lm = mse_loss(model, batch)
            layer_act.param = orig
            fd = (lp - lm) / (2 * h)
            worst = max(worst, abs(fd - g) / max(abs(fd), 1e-10))
            continue
        arr = _param_ref(model, key)
        flat = arr.reshape(-1)
        for j in range(0, flat.shape[0], stride):
            orig = flat[j]
            flat[j] = orig + h
            lp = mse_loss(model, batch)
            flat[j] = orig - h
            lm = mse_loss(model, batch)
            flat[j] = orig
            fd = (lp - lm) / (2 * h)
            worst = max(worst, abs(fd - g.reshape(-1)[j]) / max(abs(fd), 1e-10))
    return worst


class TestMseLoss:
    def test_identity_model_zero(self):
        ae = TiedAutoencoder(np.eye(4), Activation("identity"))
        data = np.random.default_rng(0).uniform(size=(3, 4))
        assert mse_loss(ae, data) == 0.0

    def test_zero_model(self):
        ae = TiedAutoencoder(np.zeros((2, 4)), Activation("identity"))
        data = np.random.default_rng(1).uniform(size=(5, 4))
        expected = np.mean([np.sum(x * x) / 4 for x in data])
        assert mse_loss(ae, data) == pytest.approx(expected, rel=1e-12)

    def test_matches_direct_recomputation(self):
        model = build_deep_fc(6, 4, Activation("softplus", 1.0), Rng(2),
                              num_layers=2)
        data = Rng(3).uniform(size=(4, 6))
        outs = np.stack([model(x) for x in data])
        direct = float(np.mean((outs - data) ** 2))
        assert mse_loss(model, data) == pytest.approx(direct, rel=1e-15)

    def test_empty_dataset(self):
        ae = TiedAutoencoder(np.eye(2), Activation("identity"))
        with pytest.raises(ValueError):
            mse_loss(ae, np.zeros((0, 2)))


class TestBackprop:
    def test_zero_residual_gives_zero_gradients(self):
        ae = TiedAutoencoder(np.eye(3), Activation("identity"))
        grads = backprop_gradients(ae, np.random.default_rng(0).uniform(size=(2, 3)))
        assert np.max(np.abs(grads[("weight", 0)])) == 0.0

    @pytest.mark.parametrize("act_kind,param", [
        ("leaky_relu", 0.2), ("prelu", 0.25), ("softplus", 1.0), ("identity", 1.0),
    ])
    def test_deep_3layer_matches_finite_difference(self, act_kind, param):
        model = build_deep_fc(8, 5, Activation(act_kind, param), Rng(4),
                              num_layers=4, widths=[8, 6, 5, 6, 8])
        batch = Rng(5).uniform(size=(3, 8))
        assert finite_diff_check(model, batch, stride=7) <= 1e-4

    @pytest.mark.parametrize("act_kind,param", [
        ("leaky_relu", 0.2), ("prelu", 0.3), ("softplus", 1.5),
    ])
    def test_tied_matches_finite_difference(self, act_kind, param):
        ae = build_tied(8, 12, Activation(act_kind, param), Rng(6))
        batch = Rng(7).uniform(size=(3, 8))
        assert finite_diff_check(ae, batch, stride=5) <= 1e-4

    def test_tied_gradient_equals_untied_sum(self):
        # oracle: untied 2-layer model with matched weights; the tied W
        # gradient must equal d/dW_enc plus the transpose of d/dW_dec
        rng = Rng(8)
        ae = build_tied(6, 9, Activation("softplus", 1.0), rng)
        batch = rng.uniform(size=(4, 6))
        untied = AutoencoderModel([
            DenseLayer(ae.weight.copy(), None, copy.deepcopy(ae.activation)),
            DenseLayer(ae.weight.T.copy(), None, None),
        ])
        tied_grads = backprop_gradients(ae, batch)
        untied_grads = backprop_gradients(untied, batch)
        combined = untied_grads[("weight", 0)] + untied_grads[("weight", 1)].T
        assert np.allclose(tied_grads[("weight", 0)], combined, atol=1e-12)


class TestTrain:
    def test_single_image_reaches_perfect_fit(self):
        data = records_to_array(synthetic_dataset(1, 8, 8, seed=42))
        ae = build_tied(64, 4, Activation("leaky_relu", 0.2), Rng(42))
        config = TrainConfig(loss_checkpoints=(1e-4, 1e-6, 1e-8), max_epochs=20000)
        checkpoints, _ = train(ae, data, config)
        assert checkpoints[-1].threshold == 1e-8
        assert mse_loss(ae, data) <= 1e-8

    def test_checkpoints_strictly_decreasing(self):
        data = records_to_array(synthetic_dataset(2, 6, 6, seed=1))
        ae = build_tied(36, 4, Activation("softplus", 1.0), Rng(1))
        config = TrainConfig(loss_checkpoints=(1e-3, 1e-4, 1e-5), max_epochs=20000)
        checkpoints, _ = train(ae, data, config)
        losses = [c.loss for c in checkpoints]
        assert losses == sorted(losses, reverse=True)
        for ckpt in checkpoints:
            assert ckpt.loss <= ckpt.threshold
            assert mse_loss(ckpt.model, data) == pytest.approx(ckpt.loss, abs=1e-12)

    def test_same_seed_bitwise_identical(self):
        data = records_to_array(synthetic_dataset(2, 6, 6, seed=2))

        def run():
            ae = build_tied(36, 4, Activation("leaky_relu", 0.2), Rng(5))
            config = TrainConfig(loss_checkpoints=(1e-4,), max_epochs=20000, seed=5)
            checkpoints, _ = train(ae, data, config)
            return checkpoints[-1].model.weight

        assert np.array_equal(run(), run())

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            TrainConfig(loss_checkpoints=(1e-8, 1e-4))
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0.0)


class TestSpectralProjection:
    def test_already_small_unchanged(self):
        ae = TiedAutoencoder(0.5 * np.eye(3), Activation("identity"))
        out = project_spectral_norm(ae, 1.0)
        assert np.array_equal(out.weight, ae.weight)

    def test_scaled_identity(self):
        ae = TiedAutoencoder(2.0 * np.eye(3), Activation("identity"))
        out = project_spectral_norm(ae, 1.0)
        assert np.allclose(out.weight, np.eye(3), atol=1e-6)

    def test_random_projected_below_one(self):
        ae = build_tied(10, 14, Activation("softplus", 1.0), Rng(3), scale=3.0)
        out = project_spectral_norm(ae, 1.0)
        assert power_iteration_sigma_max(out.weight) <= 1 + 1e-6
