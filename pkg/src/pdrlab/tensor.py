"""Small float64 tensor helpers: stable softmax, seeded draws, matrix norms.

Everything operates on plain numpy arrays. Vectors are 1-D float64, matrices
2-D float64; batched variants act along the last axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(z: int) -> int:
    z = (z + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class RandomSource:
    """Value-typed randomness handle: a (seed, stream) pair.

    Draws are pure functions of the pair, so the same source always yields
    the same values. Independent substreams come from `split`, never from
    drawing twice; two draws from one source are identical by design.
    """

    seed: int
    stream: int = 0

    def split(self, *path: int) -> "RandomSource":
        """Derive an independent substream keyed by a tuple of integers."""
        s = self.stream
        for p in path:
            s = _splitmix64(s ^ ((p + 1) * _GOLDEN & _MASK64))
        return RandomSource(self.seed, s)

    def generator(self) -> np.random.Generator:
        # Philox is counter-based: keyed streams are independent and the
        # draw sequence is identical across platforms.
        key = np.array([self.seed & _MASK64, self.stream & _MASK64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


def gaussian_vec(rng: RandomSource, n: int, std: float = 1.0) -> np.ndarray:
    """Draw an n-vector of independent centered Gaussians with the given std."""
    if n < 1:
        raise ValueError(f"gaussian_vec needs n >= 1, got {n}")
    if not np.isfinite(std) or std < 0:
        raise ValueError(f"gaussian_vec needs finite std >= 0, got {std}")
    if std == 0.0:
        return np.zeros(n)
    return std * rng.generator().standard_normal(n)


def permutation(rng: RandomSource, n: int) -> np.ndarray:
    """Seeded permutation of range(n)."""
    if n < 0:
        raise ValueError(f"permutation needs n >= 0, got {n}")
    return rng.generator().permutation(n)


def as_vec(x, name: str = "vector") -> np.ndarray:
    """Coerce to a finite 1-D float64 array or raise."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


def as_mat(x, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array or raise."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def check_simplex(p: np.ndarray, name: str = "distribution", tol: float = 1e-12) -> np.ndarray:
    """Validate that p lies on the probability simplex (along the last axis)."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape[-1] < 1:
        raise ValueError(f"{name} must have at least one entry")
    if not np.all(np.isfinite(p)):
        raise ValueError(f"{name} has non-finite entries")
    if np.any(p < 0):
        raise ValueError(f"{name} has negative entries")
    if np.any(np.abs(p.sum(axis=-1) - 1.0) > tol):
        raise ValueError(f"{name} does not sum to 1 within {tol}")
    return p


def log_sum_exp(v: np.ndarray) -> np.ndarray:
    """log(sum(exp(v))) along the last axis, stable under large shifts."""
    v = np.asarray(v, dtype=np.float64)
    m = np.max(v, axis=-1, keepdims=True)
    out = m[..., 0] + np.log(np.sum(np.exp(v - m), axis=-1))
    return out if out.ndim else float(out)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Softmax along the last axis via the log-sum-exp shift.

    Output entries are strictly positive and sum to 1 to float64 accuracy;
    the result is invariant to adding a constant to all logits.
    """
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("softmax input has non-finite entries")
    e = np.exp(z - np.max(z, axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def frobenius_norm(mat: np.ndarray) -> float:
    """Square root of the sum of squared entries."""
    m = as_mat(mat, "frobenius_norm input")
    return float(np.sqrt(np.sum(m * m)))


def spectral_norm(mat: np.ndarray, iters: int = 200, tol: float = 1e-12) -> float:
    """Largest singular value by power iteration on mat^T mat.

    Starts from the normalized all-ones vector so repeated calls agree
    bit for bit. Accurate to ~tol relative error when the top singular
    values are separated; never exceeds the true value.
    """
    a = as_mat(mat, "spectral_norm input")
    n = a.shape[1]
    v = np.full(n, 1.0 / np.sqrt(n))
    sigma = 0.0
    for _ in range(iters):
        w = a.T @ (a @ v)
        nrm = float(np.linalg.norm(w))
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        new_sigma = float(np.linalg.norm(a @ v))
        if abs(new_sigma - sigma) <= tol * max(new_sigma, 1e-300):
            return new_sigma
        sigma = new_sigma
    return sigma
