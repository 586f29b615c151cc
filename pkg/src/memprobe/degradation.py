"""Pixel-erasure masks and the degradation y = H x + eps.

A mask is the diagonal of H: a length-d 0/1 vector where 1 keeps the
pixel and 0 erases it.  For multi-channel layouts a "pixel" means all of
its channels, so the per-pixel pattern is replicated across channels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import DimensionError, Rng, gaussian_vector

MASK_PATTERNS = ("uniform_random", "center_block", "stripes", "half", "from_file")


def _validate_mask(diag) -> np.ndarray:
    diag = np.asarray(diag, dtype=np.float64)
    if diag.ndim != 1:
        raise DimensionError(f"mask diagonal must be 1-D, got shape {diag.shape}")
    if not np.all((diag == 0.0) | (diag == 1.0)):
        raise ValueError("mask entries must be 0 or 1")
    return diag


@dataclass
class ErasureMask:
    diag: np.ndarray

    def __post_init__(self):
        self.diag = _validate_mask(self.diag)

    def __len__(self) -> int:
        return self.diag.shape[0]

    @property
    def kept_fraction(self) -> float:
        return float(np.mean(self.diag))

    def hamming_error(self, other: "ErasureMask") -> int:
        if len(self) != len(other):
            raise DimensionError("mask lengths differ")
        return int(np.sum(self.diag != other.diag))


@dataclass
class DegradationSpec:
    mask: ErasureMask
    sigma_eps: float = 0.0
    seed: int = 42
    noise_on_kept_only: bool = False

    def __post_init__(self):
        if self.sigma_eps < 0:
            raise ValueError("sigma_eps must be nonnegative")


def _pixel_geometry(d=None, geometry=None):
    if geometry is not None:
        h, w, c = geometry
        return h, w, c
    if d is None:
        raise ValueError("need d or (h, w, channels)")
    return 1, int(d), 1


def generate_mask(pattern: str, params: dict, d=None, geometry=None,
                  rng: Rng | None = None) -> ErasureMask:
    """Build a mask over the pixel grid; channels share the pixel pattern.

    Patterns and params:
      uniform_random: p_erase in [0, 1]
      center_block:   fraction of the pixel area erased by a centered block
      stripes:        period (pixels), duty (erased fraction per period)
      half:           side in {left, right, top, bottom}
      from_file:      path to a mask file (see memprobe.io)
    """
    h, w, c = _pixel_geometry(d, geometry)
    if pattern == "uniform_random":
        p = float(params["p_erase"])
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p_erase must be in [0,1], got {p}")
        if rng is None:
            raise ValueError("uniform_random needs an rng")
        pix = (rng.uniform(size=h * w) >= p).astype(np.float64)
    elif pattern == "center_block":
        frac = float(params["fraction"])
        if not 0.0 <= frac <= 1.0:
            raise ValueError(f"fraction must be in [0,1], got {frac}")
        side = np.sqrt(frac)
        bh, bw = int(round(h * side)), int(round(w * side))
        pix = np.ones((h, w))
        r0, c0 = (h - bh) // 2, (w - bw) // 2
        pix[r0:r0 + bh, c0:c0 + bw] = 0.0
        pix = pix.ravel()
    elif pattern == "stripes":
        period = int(params["period"])
        duty = float(params["duty"])
        if period < 1 or not 0.0 <= duty <= 1.0:
            raise ValueError("stripes needs period >= 1 and duty in [0,1]")
        erased_cols = (np.arange(w) % period) < round(duty * period)
        pix = np.tile(~erased_cols, (h, 1)).astype(np.float64).ravel()
    elif pattern == "half":
        side = params["side"]
        pix = np.ones((h, w))
        if side == "left":
            pix[:, : w // 2] = 0.0
        elif side == "right":
            pix[:, w // 2:] = 0.0
        elif side == "top":
            pix[: h // 2, :] = 0.0
        elif side == "bottom":
            pix[h // 2:, :] = 0.0
        else:
            raise ValueError(f"unknown side {side!r}")
        pix = pix.ravel()
    elif pattern == "from_file":
        from .io import load_mask

        mask = load_mask(params["path"])
        if len(mask) == h * w * c:
            return mask
        if len(mask) == h * w:
            pix = mask.diag
        else:
            raise DimensionError(
                f"mask file length {len(mask)} does not match geometry"
            )
    else:
        raise ValueError(f"unknown mask pattern {pattern!r}")
    return ErasureMask(np.repeat(pix, c))


def degrade(x: np.ndarray, spec: DegradationSpec, rng: Rng | None = None) -> np.ndarray:
    """y = mask * x + eps with eps ~ N(0, sigma^2 I) on all coordinates.

    No clipping is applied; the mask-update rule downstream relies on raw
    out-of-range values.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != len(spec.mask):
        raise DimensionError(f"image length {x.shape[0]} != mask length {len(spec.mask)}")
    if rng is None:
        rng = Rng(spec.seed, spawn_key=(0xDE,))
    y = spec.mask.diag * x
    if spec.sigma_eps > 0:
        eps = gaussian_vector(rng, x.shape[0], spec.sigma_eps)
        if spec.noise_on_kept_only:
            eps = eps * spec.mask.diag
        y = y + eps
    return y
