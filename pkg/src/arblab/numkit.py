"""Dense linear algebra helpers and the seeded random source.

Matrices are plain 2-D ``float64`` numpy arrays in row-major order.  The
random source is PCG64 (numpy's ``Generator``); Gaussian variates are drawn
with the Box-Muller transform from its uniform doubles so the transform is
fixed and explicit.
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionError, RankError

RANK_TOL = 1e-12


def as_matrix(a, name="matrix"):
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {m.shape}")
    return m


def matmul(a, b):
    """Return ``a @ b`` after checking the inner dimensions agree."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


class Rng:
    """Single-owner seeded random stream.

    Children are derived with :meth:`child`, which mixes an integer tag into
    the seed sequence, so sub-streams never depend on how much the parent
    has been consumed.
    """

    def __init__(self, seed: int | np.random.SeedSequence):
        if isinstance(seed, np.random.SeedSequence):
            self._seq = seed
        else:
            self._seq = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)
        self.gen = np.random.Generator(np.random.PCG64(self._seq))

    def child(self, tag: int) -> "Rng":
        entropy = self._seq.entropy
        key = tuple(self._seq.spawn_key) + (int(tag),)
        return Rng(np.random.SeedSequence(entropy, spawn_key=key))

    def uniform(self, size=None):
        return self.gen.random(size)

    def normal(self, size):
        """Standard normal variates via Box-Muller on (0, 1] uniforms."""
        n = int(np.prod(size))
        m = (n + 1) // 2
        u1 = 1.0 - self.gen.random(m)  # (0, 1], keeps log finite
        u2 = self.gen.random(m)
        r = np.sqrt(-2.0 * np.log(u1))
        t = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(t), r * np.sin(t)])[:n]
        return z.reshape(size)

    def permutation(self, n):
        return self.gen.permutation(n)

    def choice(self, n, k):
        """``k`` distinct indices from ``range(n)``, in increasing order."""
        return np.sort(self.gen.choice(n, size=k, replace=False))

    def beta(self, a, b):
        return float(self.gen.beta(a, b))


def gaussian_matrix(rng: Rng, rows: int, cols: int) -> np.ndarray:
    if rows < 1 or cols < 1:
        raise DimensionError(f"shape must be positive, got {(rows, cols)}")
    return rng.normal((rows, cols))


def qr_orthonormal(a) -> np.ndarray:
    """Orthonormal basis for the column span of ``a``.

    Gram-Schmidt with one full re-orthogonalisation pass per column, which
    keeps ``Q.T @ Q`` at identity to machine precision.

    Raises
    ------
    RankError
        If a column is (numerically) inside the span of the previous ones.
    """
    a = as_matrix(a, "a")
    n, k = a.shape
    if n < k:
        raise DimensionError(f"need rows >= cols, got {a.shape}")
    q = np.zeros((n, k))
    for j in range(k):
        v = a[:, j].copy()
        scale = max(np.linalg.norm(v), 1.0)
        for _ in range(2):
            if j:
                v -= q[:, :j] @ (q[:, :j].T @ v)
        r = np.linalg.norm(v)
        if r < RANK_TOL * scale:
            raise RankError(f"column {j} is linearly dependent (pivot {r:.3e})")
        q[:, j] = v / r
    return q
