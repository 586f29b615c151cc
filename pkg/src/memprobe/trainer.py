"""Training to prescribed MSE loss levels with threshold checkpoints.

Backpropagation is hand-rolled over the dense stacks in
:mod:`memprobe.autoencoder`; the optimizer is Adam with full-batch
updates and a geometric learning-rate decay on stagnation, which is what
reliably drives small overparameterized FC nets down to 1e-8 MSE.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from .autoencoder import AutoencoderModel, TiedAutoencoder
from .numerics import Rng, power_iteration_sigma_max


class TrainingDiverged(RuntimeError):
    """Loss became NaN/Inf."""


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int | str = "full"
    seed: int = 42
    loss_checkpoints: tuple[float, ...] = (1e-4, 1e-5, 1e-6, 1e-7, 1e-8)
    max_epochs: int = 200000
    decay_patience: int = 200
    decay_factor: float = 0.5
    min_learning_rate: float = 1e-6
    log_every: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        cps = tuple(self.loss_checkpoints)
        if any(c <= 0 for c in cps) or any(a <= b for a, b in zip(cps, cps[1:])):
            raise ValueError("loss_checkpoints must be positive and strictly decreasing")
        self.loss_checkpoints = cps


@dataclass
class Checkpoint:
    model: AutoencoderModel | TiedAutoencoder
    threshold: float
    loss: float
    epoch: int


@dataclass
class TrainLogEntry:
    epoch: int
    loss: float
    learning_rate: float


def mse_loss(model, dataset: np.ndarray) -> float:
    """(1 / (n d)) sum_i ||f(x_i) - x_i||^2 over the (n, d) dataset."""
    dataset = np.atleast_2d(np.asarray(dataset, dtype=np.float64))
    if dataset.size == 0:
        raise ValueError("empty dataset")
    resid = model(dataset) - dataset
    return float(np.mean(resid * resid))


def _forward_deep(model: AutoencoderModel, x: np.ndarray):
    """Forward pass caching (input, pre-activation) per layer."""
    cache = []
    a = x
    for layer in model.layers:
        z = a @ layer.weight.T
        if layer.bias is not None:
            z = z + layer.bias
        cache.append((a, z))
        a = layer.activation.apply(z) if layer.activation is not None else z
    return a, cache


def backprop_gradients(model, batch: np.ndarray) -> dict:
    """Exact gradients of ``mse_loss`` over the batch.

    Keys: ``('weight', i)``, ``('bias', i)`` and ``('slope', i)`` for
    PReLU layers of a deep model; ``('weight', 0)`` for the tied model
    (encoder and decoder path contributions summed).
    """
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.size == 0:
        raise ValueError("empty batch")
    n, d = batch.shape
    scale = 2.0 / (n * d)

    if isinstance(model, TiedAutoencoder):
        w, act = model.weight, model.activation
        z = batch @ w.T
        a = act.apply(z)
        out = a @ w
        g_out = scale * (out - batch)
        # decoder path: d(a @ W)/dW, encoder path back through rho(Wx)
        grad_w = a.T @ g_out
        g_a = g_out @ w.T
        g_z = g_a * act.deriv(z)
        grad_w += g_z.T @ batch
        grads = {("weight", 0): grad_w}
        if act.kind == "prelu":
            grads[("slope", 0)] = float(np.sum(g_a * np.where(z < 0.0, z, 0.0)))
        return grads

    out, cache = _forward_deep(model, batch)
    grads = {}
    g = scale * (out - batch)
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        a_in, z = cache[i]
        if layer.activation is not None:
            if layer.activation.kind == "prelu":
                grads[("slope", i)] = float(np.sum(g * np.where(z < 0.0, z, 0.0)))
            g = g * layer.activation.deriv(z)
        grads[("weight", i)] = g.T @ a_in
        if layer.bias is not None:
            grads[("bias", i)] = g.sum(axis=0)
        g = g @ layer.weight
    return grads


def _params(model) -> dict:
    if isinstance(model, TiedAutoencoder):
        p = {("weight", 0): model.weight}
        if model.activation.kind == "prelu":
            p[("slope", 0)] = model.activation.param
        return p
    p = {}
    for i, layer in enumerate(model.layers):
        p[("weight", i)] = layer.weight
        if layer.bias is not None:
            p[("bias", i)] = layer.bias
        if layer.activation is not None and layer.activation.kind == "prelu":
            p[("slope", i)] = layer.activation.param
    return p


def _apply_step(model, deltas: dict):
    for key, delta in deltas.items():
        kind, i = key
        if isinstance(model, TiedAutoencoder):
            if kind == "weight":
                model.weight += delta
            else:
                model.activation.param += delta
        elif kind == "weight":
            model.layers[i].weight += delta
        elif kind == "bias":
            model.layers[i].bias += delta
        else:
            model.layers[i].activation.param += delta


def train(model, dataset: np.ndarray, config: TrainConfig):
    """Train in place; returns ``(checkpoints, log)``.

    One checkpoint is emitted the first time the full-dataset loss
    crosses each configured threshold; training stops at the last
    threshold or at ``max_epochs`` (unreached thresholds are simply
    absent from the result, not an error).
    """
    dataset = np.atleast_2d(np.asarray(dataset, dtype=np.float64))
    m_state = {k: np.zeros_like(v) if isinstance(v, np.ndarray) else 0.0
               for k, v in _params(model).items()}
    v_state = {k: np.zeros_like(v) if isinstance(v, np.ndarray) else 0.0
               for k, v in _params(model).items()}
    lr = config.learning_rate
    checkpoints: list[Checkpoint] = []
    log: list[TrainLogEntry] = []
    pending = list(config.loss_checkpoints)
    best = math.inf
    stall = 0
    step = 0

    rng = Rng(config.seed, spawn_key=(0x7A,))
    n = dataset.shape[0]
    batch = n if config.batch_size == "full" else min(int(config.batch_size), n)

    for epoch in range(1, config.max_epochs + 1):
        if batch == n:
            slices = [dataset]
        else:
            perm = np.argsort(rng.uniform(size=n), kind="stable")
            slices = [dataset[perm[j:j + batch]] for j in range(0, n, batch)]
        for chunk in slices:
            step += 1
            grads = backprop_gradients(model, chunk)
            bc1 = 1.0 - config.beta1 ** step
            bc2 = 1.0 - config.beta2 ** step
            deltas = {}
            for key, g in grads.items():
                m_state[key] = config.beta1 * m_state[key] + (1 - config.beta1) * g
                v_state[key] = config.beta2 * v_state[key] + (1 - config.beta2) * (g * g if isinstance(g, np.ndarray) else g * g)
                m_hat = m_state[key] / bc1
                v_hat = v_state[key] / bc2
                deltas[key] = -lr * m_hat / (np.sqrt(v_hat) + config.eps)
            _apply_step(model, deltas)

        loss = mse_loss(model, dataset)
        if not math.isfinite(loss):
            raise TrainingDiverged(f"loss diverged at epoch {epoch}")
        if config.log_every and epoch % config.log_every == 0:
            log.append(TrainLogEntry(epoch, loss, lr))

        while pending and loss < pending[0]:
            checkpoints.append(
                Checkpoint(copy.deepcopy(model), pending.pop(0), loss, epoch)
            )
        if not pending:
            break

        if loss < best * (1.0 - 1e-4):
            best = loss
            stall = 0
        else:
            stall += 1
            if stall >= config.decay_patience and lr > config.min_learning_rate:
                lr = max(lr * config.decay_factor, config.min_learning_rate)
                stall = 0
                log.append(TrainLogEntry(epoch, loss, lr))
    return checkpoints, log


def project_spectral_norm(ae: TiedAutoencoder, target: float = 1.0) -> TiedAutoencoder:
    """Rescale W by min(1, target / sigma_1(W))."""
    if target <= 0:
        raise ValueError("target must be positive")
    sigma = power_iteration_sigma_max(ae.weight)
    if sigma <= target:
        return TiedAutoencoder(ae.weight.copy(), copy.deepcopy(ae.activation))
    return TiedAutoencoder(ae.weight * (target / sigma), copy.deepcopy(ae.activation))
