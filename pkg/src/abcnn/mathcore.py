"""Dense float64 matrix validation, vector similarities, and a seeded RNG.

All numeric code in the package operates on plain ``numpy`` float64 arrays.
This module owns construction-time validation (shape and finiteness) and
the two scalar kernels, Euclidean distance and cosine similarity, that the
rest of the code treats as ground truth.

Random numbers come from :class:`SeededRng`, a SplitMix64 generator.  The
algorithm is fixed so that serialized runs reproduce bit-identically on any
platform; see the class docstring for the exact recurrence.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError

__all__ = [
    "as_matrix",
    "require_finite",
    "euclidean_distance",
    "cosine_similarity",
    "SeededRng",
    "uniform_vector",
]

_MASK64 = (1 << 64) - 1


def require_finite(values: np.ndarray, what: str = "array") -> np.ndarray:
    """Raise ``ValueError`` if any entry is NaN or infinite."""
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what} contains non-finite entries")
    return values


def as_matrix(values, what: str = "matrix") -> np.ndarray:
    """Validate and return a 2-D float64 matrix.

    Rejects empty shapes and non-finite entries so every matrix in the
    system satisfies its invariants at construction time.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{what} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{what} must have at least one row and column")
    require_finite(arr, what)
    return arr


def _as_vector_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    xv = np.asarray(x, dtype=np.float64).reshape(-1)
    yv = np.asarray(y, dtype=np.float64).reshape(-1)
    if xv.shape != yv.shape:
        raise DimensionError(
            f"vectors have different lengths: {xv.size} vs {yv.size}"
        )
    return xv, yv


def euclidean_distance(x, y) -> float:
    """Euclidean distance between two equal-length vectors."""
    xv, yv = _as_vector_pair(x, y)
    d = xv - yv
    return float(np.sqrt(np.dot(d, d)))


def cosine_similarity(x, y) -> float:
    """Cosine similarity in [-1, 1].

    If either vector has zero norm the similarity is defined as 0: padded
    or empty sentences produce all-zero vectors, and 0 is the neutral
    value for them.
    """
    xv, yv = _as_vector_pair(x, y)
    nx = float(np.sqrt(np.dot(xv, xv)))
    ny = float(np.sqrt(np.dot(yv, yv)))
    if nx == 0.0 or ny == 0.0:
        return 0.0
    return float(np.dot(xv, yv) / (nx * ny))


class SeededRng:
    """Deterministic 64-bit generator (SplitMix64).

    State update and output mixing, with all arithmetic modulo 2**64::

        state += 0x9E3779B97F4A7C15
        z = state
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
        z = (z ^ (z >> 27)) * 0x94D049BB133111EB
        output = z ^ (z >> 31)

    Uniform doubles in [0, 1) take the top 53 bits: ``(u64 >> 11) * 2**-53``.
    The same seed yields the same sequence on every platform, which is what
    makes serialized training runs byte-identical.  Instances are cheap and
    single-owner; do not share one across threads.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._state = int(seed) & _MASK64

    def next_uint64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_float(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_uint64() >> 11) * 2.0**-53

    def uniform(self, lo: float, hi: float) -> float:
        """Uniform double in [lo, hi)."""
        if not lo < hi:
            raise ValueError(f"uniform bounds require lo < hi, got [{lo}, {hi})")
        return lo + (hi - lo) * self.next_float()

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n), bias-free via rejection sampling."""
        if n <= 0:
            raise ValueError("randrange needs n >= 1")
        bound = _MASK64 + 1 - (_MASK64 + 1) % n
        while True:
            x = self.next_uint64()
            if x < bound:
                return x % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randrange(i + 1)
            items[i], items[j] = items[j], items[i]


def uniform_vector(rng: SeededRng, n: int, lo: float, hi: float) -> np.ndarray:
    """Vector of ``n`` uniform draws in [lo, hi), reproducible per seed."""
    if n < 1:
        raise ValueError("uniform_vector needs n >= 1")
    if not lo < hi:
        raise ValueError(f"uniform_vector bounds require lo < hi, got [{lo}, {hi})")
    return np.array([rng.uniform(lo, hi) for _ in range(n)], dtype=np.float64)
