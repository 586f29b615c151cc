"""Fully connected autoencoder models.

Two model families live here: the generic deep encoder/decoder stack
(``AutoencoderModel``) and the tied 2-layer specialization
``TiedAutoencoder`` with f(x) = W.T @ rho(W x), whose Jacobian
W.T @ diag(rho'(Wx)) @ W is available in closed form.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .numerics import DimensionError, Matrix, Rng, Vector, as_matrix, as_vector

ACTIVATION_KINDS = ("identity", "leaky_relu", "prelu", "softplus")


@dataclass
class Activation:
    """Componentwise activation; ``param`` is the slope (LReLU/PReLU)
    or the sharpness beta (Softplus)."""

    kind: str = "identity"
    param: float = 1.0

    def __post_init__(self):
        if self.kind not in ACTIVATION_KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}")
        if self.kind in ("leaky_relu", "prelu") and not (0.0 < self.param <= 1.0):
            raise ValueError(f"{self.kind} slope must be in (0, 1], got {self.param}")
        if self.kind == "softplus" and self.param <= 0.0:
            raise ValueError(f"softplus sharpness must be positive, got {self.param}")

    @property
    def differentiable(self) -> bool:
        # LReLU/PReLU have a kink at 0
        return self.kind in ("identity", "softplus")

    @property
    def derivative_range(self) -> tuple[float, float]:
        """Closed-form range of the scalar derivative over all of R."""
        if self.kind == "identity":
            return (1.0, 1.0)
        if self.kind == "softplus":
            return (0.0, 1.0)
        return (self.param, 1.0)

    def apply(self, z):
        z = np.asarray(z, dtype=np.float64)
        if self.kind == "identity":
            return z.copy()
        if self.kind in ("leaky_relu", "prelu"):
            return np.where(z >= 0.0, z, self.param * z)
        # softplus log(1+exp(b z))/b with an overflow-safe branch
        b = self.param
        bz = b * z
        return np.where(bz > 30.0, z, np.log1p(np.exp(np.minimum(bz, 30.0))) / b)

    def deriv(self, z):
        z = np.asarray(z, dtype=np.float64)
        if self.kind == "identity":
            return np.ones_like(z)
        if self.kind in ("leaky_relu", "prelu"):
            return np.where(z >= 0.0, 1.0, self.param)
        bz = np.clip(self.param * z, -500.0, 500.0)
        return 1.0 / (1.0 + np.exp(-bz))


def activation_apply(act: Activation, z: Vector) -> Vector:
    return act.apply(as_vector(z))


def activation_deriv(act: Activation, z: Vector) -> Vector:
    return act.deriv(as_vector(z))


@dataclass
class DenseLayer:
    """weight is (out x in); activation is None on the last decoder layer."""

    weight: Matrix
    bias: Vector | None = None
    activation: Activation | None = None

    def __post_init__(self):
        self.weight = as_matrix(self.weight)
        if self.bias is not None:
            self.bias = as_vector(self.bias, length=self.weight.shape[0])

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def __call__(self, x):
        z = x @ self.weight.T
        if self.bias is not None:
            z = z + self.bias
        return self.activation.apply(z) if self.activation is not None else z


@dataclass
class AutoencoderModel:
    layers: list[DenseLayer] = field(default_factory=list)

    def __post_init__(self):
        if not self.layers:
            raise ValueError("model needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise DimensionError(
                    f"layer widths mismatch: {prev.out_dim} -> {nxt.in_dim}"
                )
        if self.layers[0].in_dim != self.layers[-1].out_dim:
            raise DimensionError("autoencoder must map R^d to R^d")

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def latent_dim(self) -> int:
        return min(layer.out_dim for layer in self.layers)

    def __call__(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


@dataclass
class TiedAutoencoder:
    """f(x) = W.T @ rho(W x); the decoder weight is the stored transpose."""

    weight: Matrix
    activation: Activation = field(default_factory=Activation)

    def __post_init__(self):
        self.weight = as_matrix(self.weight)

    @property
    def input_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def latent_dim(self) -> int:
        return self.weight.shape[0]

    def __call__(self, x):
        return self.activation.apply(x @ self.weight.T) @ self.weight


def forward(model, x: Vector) -> Vector:
    """Deterministic f(x); no clipping."""
    x = as_vector(x, length=model.input_dim)
    return model(x)


def tied_jacobian(ae: TiedAutoencoder, x: Vector) -> Matrix:
    """Analytic Jacobian W.T @ diag(rho'(Wx)) @ W; symmetric by construction.

    Returns ``(jacobian, kink_warning)`` where the warning flags an
    activation that is not differentiable at 0 (the formula then uses the
    one-sided derivative convention of ``Activation.deriv``).
    """
    x = as_vector(x, length=ae.input_dim)
    z = ae.weight @ x
    dz = ae.activation.deriv(z)
    jac = (ae.weight.T * dz) @ ae.weight
    return jac, not ae.activation.differentiable


def deep_fc_widths(d: int, m: int, num_layers: int = 10) -> list[int]:
    """Default width schedule: geometric taper d -> m over the encoder
    half, mirrored back up by the decoder.  ``num_layers`` counts weight
    layers and must be even."""
    if num_layers % 2 != 0 or num_layers < 2:
        raise ValueError("num_layers must be even and >= 2")
    half = num_layers // 2
    enc = np.geomspace(d, m, half + 1)
    widths = [int(round(w)) for w in enc]
    widths[0], widths[-1] = d, m
    return widths + widths[-2::-1]


def build_deep_fc(
    d: int,
    m: int,
    activation: Activation,
    rng: Rng,
    num_layers: int = 10,
    widths: list[int] | None = None,
) -> AutoencoderModel:
    """Deep FC autoencoder with biases; activation on all but the last layer.

    Weight init is He-style fan-in scaled uniform from the seeded stream.
    """
    if widths is None:
        widths = deep_fc_widths(d, m, num_layers)
    if widths[0] != d or widths[-1] != d:
        raise ValueError("width schedule must start and end at d")
    layers = []
    n_layers = len(widths) - 1
    for i, (w_in, w_out) in enumerate(zip(widths, widths[1:])):
        bound = np.sqrt(6.0 / w_in)
        weight = rng.uniform(size=(w_out, w_in), low=-bound, high=bound)
        bias = np.zeros(w_out)
        # each layer owns its activation so a PReLU slope is per-layer
        act = copy.deepcopy(activation) if i < n_layers - 1 else None
        layers.append(DenseLayer(weight, bias, act))
    return AutoencoderModel(layers)


def build_tied(d: int, m: int, activation: Activation, rng: Rng, scale: float = 1.0) -> TiedAutoencoder:
    bound = scale * np.sqrt(3.0 / d)
    weight = rng.uniform(size=(m, d), low=-bound, high=bound)
    return TiedAutoencoder(weight, activation)
