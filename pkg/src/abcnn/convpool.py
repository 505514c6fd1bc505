"""Wide convolution and the two average-pooling operators of a conv block.

A feature map is a ``dim x width`` matrix whose columns represent units:
words at the lowest level, phrases higher up.  Wide convolution slides a
filter of width ``w`` over a map of width ``s`` including the positions
hanging off either edge (out-of-range columns count as zero), producing
``s + w - 1`` output columns.  ``avg_pool_w`` averages windows of ``w``
consecutive columns and restores width ``s``; ``all_ap`` averages all
columns into the block's sentence vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionError
from .mathcore import as_matrix, require_finite

__all__ = [
    "FeatureMap",
    "ConvParams",
    "wide_convolution",
    "avg_pool_w",
    "all_ap",
    "im2col",
    "col2im",
    "window_sum_matrix",
]

ROLE_TAGS = ("representation", "attention", "conv-output", "pool-output")


@dataclass
class FeatureMap:
    """A ``dim x width`` matrix of unit representations plus a role tag."""

    values: np.ndarray
    role: str = "representation"

    def __post_init__(self):
        self.values = as_matrix(self.values, "feature map")
        if self.role not in ROLE_TAGS:
            raise ValueError(f"unknown feature-map role {self.role!r}")

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass
class ConvParams:
    """Filter bank for one wide-convolution layer.

    ``weights`` has shape ``(d1, w * d_in * channels)``.  Its columns are
    ordered channel-major: for each input channel, the ``w`` window
    positions oldest-first, each a block of ``d_in`` values.  ``bias`` has
    length ``d1``.
    """

    w: int
    d_in: int
    channels: int
    d1: int
    weights: np.ndarray
    bias: np.ndarray = field(repr=False)

    def __post_init__(self):
        if min(self.w, self.d_in, self.channels, self.d1) < 1:
            raise DimensionError("all convolution dimensions must be >= 1")
        self.weights = as_matrix(self.weights, "convolution weights")
        expect = (self.d1, self.w * self.d_in * self.channels)
        if self.weights.shape != expect:
            raise DimensionError(
                f"convolution weights have shape {self.weights.shape}, expected {expect}"
            )
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.bias.shape != (self.d1,):
            raise DimensionError(
                f"convolution bias has length {self.bias.size}, expected {self.d1}"
            )
        require_finite(self.bias, "convolution bias")


def im2col(values: np.ndarray, w: int) -> np.ndarray:
    """Unfold a ``(d, s)`` map into the ``(w*d, s+w-1)`` wide-window matrix.

    Column ``i`` stacks the ``w`` input columns at positions
    ``i-w+1 .. i`` (oldest first), with out-of-range positions zero.
    """
    d, s = values.shape
    out_w = s + w - 1
    padded = np.zeros((d, s + 2 * (w - 1)), dtype=np.float64)
    padded[:, w - 1 : w - 1 + s] = values
    return np.vstack([padded[:, j : j + out_w] for j in range(w)])


def col2im(grad: np.ndarray, w: int, s: int) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter window gradients back to the map."""
    wd, out_w = grad.shape
    d = wd // w
    padded = np.zeros((d, s + 2 * (w - 1)), dtype=np.float64)
    for j in range(w):
        padded[:, j : j + out_w] += grad[j * d : (j + 1) * d]
    return padded[:, w - 1 : w - 1 + s]


def window_sum_matrix(c: int, w: int) -> np.ndarray:
    """0/1 matrix ``S`` of shape ``(c, c-w+1)`` with ``S[k, j] = 1`` iff
    ``j <= k <= j+w-1``; right-multiplying by it sums sliding windows."""
    if c < w:
        raise DimensionError(f"window width {w} exceeds map width {c}")
    out_w = c - w + 1
    s = np.zeros((c, out_w), dtype=np.float64)
    for j in range(out_w):
        s[j : j + w, j] = 1.0
    return s


def _as_channel_list(inputs) -> list[FeatureMap]:
    if isinstance(inputs, FeatureMap):
        return [inputs]
    maps = list(inputs)
    if not maps:
        raise DimensionError("wide_convolution needs at least one input map")
    return maps


def wide_convolution(inputs, params: ConvParams) -> FeatureMap:
    """Apply ``tanh(W . c_i + b)`` over every wide-window position.

    ``inputs`` is a single feature map or a sequence of channel maps that
    share dim and width (two channels when an attention map is stacked on
    the representation map).  Output width is ``s + w - 1``.
    """
    maps = _as_channel_list(inputs)
    if len(maps) != params.channels:
        raise DimensionError(
            f"got {len(maps)} input channels, parameters expect {params.channels}"
        )
    dim, width = maps[0].dim, maps[0].width
    for fm in maps:
        if fm.dim != dim or fm.width != width:
            raise DimensionError("all channel maps must share dim and width")
    if dim != params.d_in:
        raise DimensionError(
            f"input dim {dim} does not match convolution d_in {params.d_in}"
        )
    unfolded = np.vstack([im2col(fm.values, params.w) for fm in maps])
    out = np.tanh(params.weights @ unfolded + params.bias[:, None])
    return FeatureMap(out, role="conv-output")


def avg_pool_w(fm: FeatureMap, w: int) -> FeatureMap:
    """Mean over each window of ``w`` consecutive columns (width c-w+1)."""
    if fm.width < w:
        raise DimensionError(f"cannot pool width {fm.width} with window {w}")
    pooled = (fm.values @ window_sum_matrix(fm.width, w)) * (1.0 / w)
    return FeatureMap(pooled, role="pool-output")


def all_ap(fm: FeatureMap) -> np.ndarray:
    """Column-wise mean over all columns: the block's sentence vector."""
    c = fm.width
    return (fm.values @ np.ones((c, 1))).ravel() * (1.0 / c)
