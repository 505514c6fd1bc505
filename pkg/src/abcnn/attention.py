"""Attention mechanisms over sentence-pair feature maps.

The attention matrix ``A`` holds pairwise match-scores between the unit
columns of the two maps, using ``1/(1 + euclidean distance)``.  Three
consumers build on it:

* input-side transforms: ``F0a = W0 . A^T`` and ``F1a = W1 . A`` produce
  attention feature maps stacked with the representations before
  convolution;
* output-side reweighting: row sums of ``A`` weight the left map's
  columns and column sums the right map's, used by windowed
  attention pooling after convolution;
* dynamic pooling: ``A`` chunked into a ``g x g`` grid of cell means,
  flattened into classifier features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .convpool import FeatureMap, window_sum_matrix
from .errors import DimensionError
from .mathcore import as_matrix, euclidean_distance

__all__ = [
    "match_score",
    "pairwise_distances",
    "match_scores",
    "attention_matrix",
    "AttnTransformParams",
    "abcnn1_maps",
    "abcnn2_weights",
    "attention_pool",
    "dynamic_pool",
    "dynamic_pool_features",
    "chunk_sizes",
]


def match_score(x, y) -> float:
    """``1 / (1 + euclidean_distance(x, y))``, in (0, 1]."""
    return 1.0 / (1.0 + euclidean_distance(x, y))


def pairwise_distances(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Column-pairwise Euclidean distances between two ``(d, c)`` arrays.

    Computed from explicit differences (no dot-product expansion) so that
    ``pairwise_distances(a, b).T`` equals ``pairwise_distances(b, a)``
    bit-exactly and zero distance is exact for equal columns.
    """
    if left.shape[0] != right.shape[0]:
        raise DimensionError(
            f"maps have different dims: {left.shape[0]} vs {right.shape[0]}"
        )
    diffs = left[:, :, None] - right[:, None, :]
    return np.sqrt(np.einsum("dij,dij->ij", diffs, diffs))


def match_scores(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Matrix of ``1/(1+distance)`` over all column pairs."""
    return 1.0 / (1.0 + pairwise_distances(left, right))


def attention_matrix(f0: FeatureMap, f1: FeatureMap) -> np.ndarray:
    """Attention matrix between two equally-shaped (padded) feature maps.

    Entry ``(i, j)`` is the match-score of column ``i`` of ``f0`` against
    column ``j`` of ``f1``; every entry lies in (0, 1] and equals 1 exactly
    when the columns are identical.
    """
    if f0.dim != f1.dim:
        raise DimensionError(f"maps have different dims: {f0.dim} vs {f1.dim}")
    if f0.width != f1.width:
        raise DimensionError(
            f"maps have different widths: {f0.width} vs {f1.width}"
        )
    return match_scores(f0.values, f1.values)


@dataclass
class AttnTransformParams:
    """The ``W0``/``W1`` transforms turning ``A`` into attention maps.

    When ``shared`` both names refer to the same array object, halving the
    parameter count; updates through either alias touch the one storage.
    """

    w0: np.ndarray
    w1: np.ndarray
    shared: bool = True

    def __post_init__(self):
        self.w0 = as_matrix(self.w0, "attention transform W0")
        if self.shared:
            self.w1 = self.w0
        else:
            self.w1 = as_matrix(self.w1, "attention transform W1")
            if self.w1.shape != self.w0.shape:
                raise DimensionError("W0 and W1 must have the same shape")

    @classmethod
    def shared_from(cls, w: np.ndarray) -> "AttnTransformParams":
        return cls(w0=w, w1=w, shared=True)


def abcnn1_maps(
    a: np.ndarray, params: AttnTransformParams
) -> tuple[FeatureMap, FeatureMap]:
    """Attention feature maps ``(W0 . A^T, W1 . A)`` for the two sentences."""
    a = as_matrix(a, "attention matrix")
    if params.w0.shape[1] != a.shape[0] or params.w1.shape[1] != a.shape[1]:
        raise DimensionError(
            f"transform width {params.w0.shape[1]} does not match "
            f"attention matrix side {a.shape}"
        )
    f0a = FeatureMap(params.w0 @ a.T, role="attention")
    f1a = FeatureMap(params.w1 @ a, role="attention")
    return f0a, f1a


def abcnn2_weights(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-unit attention weights: row sums for the left sentence's units,
    column sums for the right's.  All strictly positive."""
    a = as_matrix(a, "attention matrix")
    return a.sum(axis=1), a.sum(axis=0)


def attention_pool(fm: FeatureMap, weights: np.ndarray, w: int) -> FeatureMap:
    """Attention-weighted window pooling.

    Output column ``j`` is ``sum_{k=j..j+w-1} weights[k] * fm[:, k]``, the
    same windows as :func:`convpool.avg_pool_w` but weighted and
    unnormalized, shrinking a conv output of width ``s+w-1`` back to ``s``.
    """
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    if weights.size != fm.width:
        raise DimensionError(
            f"weight vector length {weights.size} does not match map width {fm.width}"
        )
    if fm.width < w:
        raise DimensionError(f"cannot pool width {fm.width} with window {w}")
    pooled = (fm.values * weights[None, :]) @ window_sum_matrix(fm.width, w)
    return FeatureMap(pooled, role="pool-output")


def chunk_sizes(n: int, g: int) -> list[int]:
    """Split ``n`` into ``g`` contiguous chunk lengths, larger chunks first."""
    base, rem = divmod(n, g)
    return [base + 1] * rem + [base] * (g - rem)


def dynamic_pool(a: np.ndarray, g: int) -> np.ndarray:
    """Chunked mean-pooling of a matrix into a ``g x g`` grid.

    Rows and columns are each partitioned into ``g`` contiguous chunks,
    the first ``side mod g`` chunks one element larger; each cell is the
    mean of its sub-block.
    """
    a = as_matrix(a, "attention matrix")
    rows, cols = a.shape
    if g < 1 or g > rows or g > cols:
        raise ValueError(f"grid size {g} out of range for matrix side {a.shape}")
    row_edges = np.cumsum([0] + chunk_sizes(rows, g))
    col_edges = np.cumsum([0] + chunk_sizes(cols, g))
    out = np.empty((g, g), dtype=np.float64)
    for i in range(g):
        for j in range(g):
            block = a[row_edges[i] : row_edges[i + 1], col_edges[j] : col_edges[j + 1]]
            out[i, j] = block.mean()
    return out


def dynamic_pool_features(a: np.ndarray, g: int) -> np.ndarray:
    """Row-major flattening of :func:`dynamic_pool` for classifier use."""
    return dynamic_pool(a, g).reshape(-1)
