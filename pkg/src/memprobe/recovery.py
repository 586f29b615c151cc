"""Training-image recovery from erased pixels.

The inner solver is plug-and-play ADMM: a closed-form data-fidelity step
for the diagonal 0/1 operator, the trained autoencoder applied as the
prior step, and a scaled dual update.  The outer loop alternates the
inner solve with a closed-form 0/1 mask re-estimate until successive
estimates stop moving.  The iterate-only baseline and the known-mask
variant live here too.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .degradation import ErasureMask
from .numerics import DimensionError, Rng


class SolverNumericalError(RuntimeError):
    """NaN/Inf appeared in an iterate."""


@dataclass
class RecoveryConfig:
    gamma: float = 0.5
    admm_iters: int = 40
    outer_tol: float = 1e-9
    patience: int = 3
    max_outer: int = 200
    mask_init: str = "bernoulli_half"  # zeros | bernoulli_half | from_mask
    init_mask: ErasureMask | None = None
    seed: int = 42

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.admm_iters < 1:
            raise ValueError("admm_iters must be >= 1")
        if self.outer_tol <= 0:
            raise ValueError("outer_tol must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.mask_init not in ("zeros", "bernoulli_half", "from_mask"):
            raise ValueError(f"unknown mask_init {self.mask_init!r}")
        if self.mask_init == "from_mask" and self.init_mask is None:
            raise ValueError("mask_init=from_mask needs init_mask")


@dataclass
class RecoveryResult:
    estimate: np.ndarray
    mask_estimate: ErasureMask | None
    outer_iters_used: int
    converged: bool
    step_mse_trace: list[float] = field(default_factory=list)
    truth_mse_trace: list[float] | None = None

    @property
    def final_mse(self) -> float | None:
        return self.truth_mse_trace[-1] if self.truth_mse_trace else None


def default_gamma(architecture: str = "fc10", activation_kind: str = "leaky_relu") -> float:
    """Penalty defaults per architecture/activation family."""
    if architecture == "fc10" and activation_kind == "leaky_relu":
        return 0.5
    if architecture == "fc20" or activation_kind == "prelu":
        return 0.1
    return 1.0


def data_fidelity_update(y: np.ndarray, v_tilde: np.ndarray, theta: ErasureMask,
                         gamma: float) -> np.ndarray:
    """Exact minimizer of ||Theta x - y||^2 + (gamma/2) ||x - v_tilde||^2.

    Componentwise: kept coordinates blend y with v_tilde, erased ones
    pass v_tilde through.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    y = np.asarray(y, dtype=np.float64)
    v_tilde = np.asarray(v_tilde, dtype=np.float64)
    if y.shape != v_tilde.shape or y.shape[0] != len(theta):
        raise DimensionError("y, v_tilde and theta lengths must agree")
    g2 = gamma / 2.0
    kept = (y + g2 * v_tilde) / (1.0 + g2)
    return np.where(theta.diag == 1.0, kept, v_tilde)


def _check_finite(v: np.ndarray, k: int):
    if not np.all(np.isfinite(v)):
        raise SolverNumericalError(f"non-finite iterate at ADMM iteration {k}")


def admm_solve(f, y: np.ndarray, theta: ErasureMask, config: RecoveryConfig) -> np.ndarray:
    """Fixed-count ADMM with the autoencoder as the prior step.

    Per iteration k: v_tilde = v - u; xi = data-fidelity step;
    v = f(xi + u); u += xi - v.  Returns the last xi.
    """
    y = np.asarray(y, dtype=np.float64)
    d = y.shape[0]
    v_hat = np.zeros(d)
    u = np.zeros(d)
    xi_hat = y
    for k in range(1, config.admm_iters + 1):
        v_tilde = v_hat - u
        xi_hat = data_fidelity_update(y, v_tilde, theta, config.gamma)
        v_hat = np.asarray(f(xi_hat + u), dtype=np.float64)
        _check_finite(v_hat, k)
        u = u + (xi_hat - v_hat)
    return xi_hat


def mask_update(x_hat: np.ndarray, y: np.ndarray) -> ErasureMask:
    """Closed-form re-estimate of the 0/1 diagonal: a coordinate is
    declared erased when the estimate overshoots 2 y_i or goes negative;
    boundaries count as kept."""
    x_hat = np.asarray(x_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x_hat.shape != y.shape:
        raise DimensionError("x_hat and y lengths must agree")
    erased = (x_hat > 2.0 * y) | (x_hat < 0.0)
    return ErasureMask(np.where(erased, 0.0, 1.0))


def _init_mask(d: int, config: RecoveryConfig, sample_index: int = 0) -> ErasureMask:
    if config.mask_init == "zeros":
        return ErasureMask(np.zeros(d))
    if config.mask_init == "from_mask":
        return config.init_mask
    rng = Rng(config.seed, spawn_key=(0xB0, sample_index))
    return ErasureMask((rng.uniform(size=d) < 0.5).astype(np.float64))


def recover_unknown_H(f, y: np.ndarray, config: RecoveryConfig,
                      truth: np.ndarray | None = None,
                      sample_index: int = 0) -> RecoveryResult:
    """Alternating minimization: inner ADMM solve for x, closed-form mask
    re-estimate, until the per-coordinate step MSE stays below
    ``outer_tol`` for ``patience`` consecutive iterations."""
    y = np.asarray(y, dtype=np.float64)
    d = y.shape[0]
    h_hat = _init_mask(d, config, sample_index)
    x_prev = None
    step_trace: list[float] = []
    truth_trace: list[float] | None = [] if truth is not None else None
    streak = 0
    converged = False
    t = 0
    for t in range(1, config.max_outer + 1):
        x_hat = admm_solve(f, y, h_hat, config)
        h_hat = mask_update(x_hat, y)
        if x_prev is not None:
            step = float(np.mean((x_hat - x_prev) ** 2))
            step_trace.append(step)
            streak = streak + 1 if step < config.outer_tol else 0
        else:
            step_trace.append(float("inf"))
        if truth_trace is not None:
            truth_trace.append(float(np.mean((x_hat - truth) ** 2)))
        x_prev = x_hat
        if streak >= config.patience:
            converged = True
            break
    return RecoveryResult(x_prev, h_hat, t, converged, step_trace, truth_trace)


def recover_known_H(f, y: np.ndarray, h: ErasureMask, config: RecoveryConfig,
                    noiseless: bool = False,
                    truth: np.ndarray | None = None) -> RecoveryResult:
    """Single inner solve with the true mask; in the noiseless case the
    kept coordinates of the estimate are overwritten with y."""
    y = np.asarray(y, dtype=np.float64)
    x_hat = admm_solve(f, y, h, config)
    if noiseless:
        x_hat = (1.0 - h.diag) * x_hat + h.diag * y
    truth_trace = [float(np.mean((x_hat - truth) ** 2))] if truth is not None else None
    return RecoveryResult(x_hat, ErasureMask(h.diag.copy()), 1, True, [0.0], truth_trace)


def baseline_iterate(f, y: np.ndarray, max_iters: int = 1000, tol: float = 1e-12,
                     truth: np.ndarray | None = None) -> RecoveryResult:
    """Plain repeated application of the autoencoder starting from y."""
    x = np.asarray(y, dtype=np.float64)
    step_trace: list[float] = []
    truth_trace: list[float] | None = [] if truth is not None else None
    converged = False
    k = 0
    for k in range(1, max_iters + 1):
        x_next = np.asarray(f(x), dtype=np.float64)
        if not np.all(np.isfinite(x_next)):
            raise SolverNumericalError(f"non-finite iterate at step {k}")
        step = float(np.mean((x_next - x) ** 2))
        step_trace.append(step)
        if truth_trace is not None:
            truth_trace.append(float(np.mean((x_next - truth) ** 2)))
        x = x_next
        if step < tol:
            converged = True
            break
    return RecoveryResult(x, None, k, converged, step_trace, truth_trace)
