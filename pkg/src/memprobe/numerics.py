"""Dense linear algebra helpers and a seeded deterministic random stream.

All arithmetic is float64.  Vectors are 1-D numpy arrays, matrices 2-D
row-major numpy arrays; the validators below are the entry points that
enforce shape and finiteness at module boundaries.
"""

from __future__ import annotations

import numpy as np

Vector = np.ndarray
Matrix = np.ndarray


class DimensionError(ValueError):
    """Shapes of the operands are incompatible."""


class ConvergenceError(RuntimeError):
    """An iterative routine exhausted its iteration cap."""


def as_vector(v, length: int | None = None) -> Vector:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"expected 1-D vector, got shape {v.shape}")
    if length is not None and v.shape[0] != length:
        raise DimensionError(f"expected length {length}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector contains non-finite values")
    return v


def as_matrix(m, rows: int | None = None, cols: int | None = None) -> Matrix:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"expected 2-D matrix, got shape {m.shape}")
    if rows is not None and m.shape[0] != rows:
        raise DimensionError(f"expected {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise DimensionError(f"expected {cols} cols, got {m.shape[1]}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains non-finite values")
    return m


class Rng:
    """Deterministic random stream backed by numpy's PCG64.

    PCG64 is a documented counter-based generator with a platform
    independent stream: the same seed (and optional spawn key) yields
    bit-identical draws everywhere.
    """

    def __init__(self, seed: int, spawn_key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.spawn_key = tuple(int(k) for k in spawn_key)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.spawn_key)
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def derive(self, *key: int) -> "Rng":
        """Independent child stream, e.g. per-sample from a global seed."""
        return Rng(self.seed, self.spawn_key + tuple(key))

    def uniform(self, size=None, low: float = 0.0, high: float = 1.0):
        return self._gen.uniform(low, high, size=size)

    def normal(self, size=None):
        return self._gen.standard_normal(size=size)

    def integers(self, low, high, size=None):
        return self._gen.integers(low, high, size=size)


def matvec(m: Matrix, v: Vector) -> Vector:
    m = as_matrix(m)
    v = as_vector(v, length=m.shape[1])
    return m @ v


def gaussian_vector(rng: Rng, length: int, sigma: float) -> Vector:
    """I.i.d. zero-mean Gaussian entries with standard deviation sigma."""
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0.0:
        return np.zeros(length)
    return sigma * rng.normal(size=length)


def _symmetry_defect(m: Matrix) -> float:
    return float(np.max(np.abs(m - m.T))) if m.size else 0.0


def sym_eig(m: Matrix, tol: float = 1e-10, max_sweeps: int = 100) -> Vector:
    """Eigenvalues (descending) of a symmetric matrix via cyclic Jacobi.

    The input is symmetrized as (m + m.T)/2 first; a symmetry defect
    above 1e-8 is rejected.  Each eigenpair residual satisfies
    ||M q - lam q|| <= tol * ||M||_F on exit.
    """
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"sym_eig needs a square matrix, got {m.shape}")
    if _symmetry_defect(m) > 1e-8 * (1.0 + np.linalg.norm(m)):
        raise ValueError("matrix is not symmetric within tolerance")
    a = (m + m.T) / 2.0
    n = a.shape[0]
    if n == 1:
        return a[0, :1].copy()
    fro = np.linalg.norm(a)
    if fro == 0.0:
        return np.zeros(n)
    # off(A) threshold scaled to the Frobenius norm; tol guards residuals
    thresh = min(tol, 1e-13) * fro
    off_mask = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(a[off_mask] ** 2))
        if off <= thresh:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(apq) <= 1e-18 * abs(diff):
                    # rotation angle below rounding; entry is negligible
                    a[p, q] = a[q, p] = 0.0
                    continue
                theta = diff / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                else:
                    t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0))
                c = 1.0 / np.hypot(t, 1.0)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
                a[p, q] = a[q, p] = 0.0
    else:
        raise ConvergenceError(f"Jacobi sweep cap ({max_sweeps}) exhausted")
    return np.sort(np.diag(a))[::-1].copy()


def power_iteration_sigma_max(m: Matrix, iters: int = 500, seed: int = 0) -> float:
    """Largest singular value of m via power iteration on m.T @ m."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    m = as_matrix(m)
    if not np.any(m):
        return 0.0
    rng = Rng(seed, spawn_key=(0x51,))
    v = rng.normal(size=m.shape[1])
    v /= np.linalg.norm(v)
    gram_vec = lambda x: m.T @ (m @ x)
    sigma_sq = 0.0
    for _ in range(iters):
        w = gram_vec(v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        sigma_sq = float(v @ gram_vec(v))
    return float(np.sqrt(max(sigma_sq, 0.0)))
