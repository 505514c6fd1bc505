"""Model assembly: configuration, parameters, and forward passes.

A model is a stack of blocks applied in parallel to both sentences with
shared weights.  Block ``b1`` is the embedding map itself; each further
block is a wide convolution plus pooling.  Every block contributes one
pair of sentence vectors (column-wise average pooling over all units),
and from each pair the task's similarity scores are computed, so a model
with ``k`` blocks feeds ``k * n`` scores (plus task extras) into the final
logistic-regression layer.

Variants differ in where attention acts inside a conv block:

* ``BCNN``      - no attention: convolution, then uniform average pooling;
* ``ABCNN1``    - the match-score matrix over the block inputs is
  transformed into attention feature maps and stacked with the inputs as a
  second convolution channel;
* ``ABCNN2``    - the match-score matrix over the convolution outputs
  yields per-unit weights (row sums left, column sums right) used for
  attention-weighted pooling;
* ``ABCNN3``    - both mechanisms in the same block, input attention
  before the convolution and output attention after it.

Feature-order contract for the LR-layer input (and the external
classifier): per-block similarity scores first (block ``b1`` upward; for
TE each block contributes cosine then distance-based similarity, original
pipeline before the overlap-removed one), then for PI the dynamically
pooled attention-matrix grids of all blocks (level 0 upward, row-major),
then the task extras in the order documented in ``pipeline``.

The dynamically pooled grids are recomputed from the current maps on
every forward pass but enter the LR layer as constants: no gradient
flows through them into the convolution weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .attention import dynamic_pool_features, match_scores
from .autodiff import Tensor
from .convpool import FeatureMap, window_sum_matrix
from .errors import DimensionError
from .mathcore import SeededRng, uniform_vector
from .textdata import TASKS

__all__ = [
    "VARIANTS",
    "ModelConfig",
    "BlockParams",
    "ModelParams",
    "init_model_params",
    "PreparedPair",
    "PipelineTrace",
    "ForwardTrace",
    "forward",
    "te_dual_forward",
    "similarity_features",
    "addition_baseline",
]

VARIANTS = ("BCNN", "ABCNN1", "ABCNN2", "ABCNN3")

# Width of the task-specific extra feature vector; the composition is
# documented in `pipeline`.
EXTRA_WIDTHS = {"AS": 4, "PI": 20, "TE": 24}


@dataclass(frozen=True)
class ModelConfig:
    """Shape and wiring of one model; defaults follow the common setup."""

    task: str
    variant: str
    num_conv_layers: int = 1
    w: int = 3
    d0: int = 300
    d1: int = 50
    s_pad: int = 1
    s_pad_nonover: int = 0
    pool_groups: int = 3
    share_attn_weights: bool = True
    mask_padding: bool = False

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.num_conv_layers not in (1, 2):
            raise ValueError("num_conv_layers must be 1 or 2")
        if min(self.w, self.d0, self.d1, self.s_pad) < 1:
            raise ValueError("w, d0, d1, s_pad must all be >= 1")
        if self.task == "TE" and self.s_pad_nonover < 1:
            raise ValueError("TE models need s_pad_nonover >= 1")
        if self.pool_groups < 1:
            raise ValueError("pool_groups must be >= 1")

    @property
    def k(self) -> int:
        """Number of blocks (initialization block plus conv blocks)."""
        return self.num_conv_layers + 1

    @property
    def dual(self) -> bool:
        return self.task == "TE"

    @property
    def scores_per_block(self) -> int:
        return 2 if self.task == "TE" else 1

    @property
    def num_classes(self) -> int:
        return 3 if self.task == "TE" else 1

    @property
    def uses_input_attention(self) -> bool:
        return self.variant in ("ABCNN1", "ABCNN3")

    @property
    def uses_output_attention(self) -> bool:
        return self.variant in ("ABCNN2", "ABCNN3")

    @property
    def num_score_features(self) -> int:
        pipelines = 2 if self.dual else 1
        return self.k * self.scores_per_block * pipelines

    @property
    def num_dyn_features(self) -> int:
        if self.task != "PI":
            return 0
        return self.k * self.pool_groups * self.pool_groups

    @property
    def extras_width(self) -> int:
        return EXTRA_WIDTHS[self.task]

    @property
    def feature_width(self) -> int:
        return self.num_score_features + self.num_dyn_features + self.extras_width

    def pipeline_s_pad(self, pipeline: int) -> int:
        return self.s_pad if pipeline == 0 else self.s_pad_nonover

    def block_input_dim(self, layer: int) -> int:
        """Input dim of conv block ``layer`` (1-based)."""
        return self.d0 if layer == 1 else self.d1

    def conv_channels(self) -> int:
        return 2 if self.uses_input_attention else 1


@dataclass
class BlockParams:
    """Trainables of one conv block.

    ``attn_w0``/``attn_w1`` exist only for variants with input attention;
    when weights are shared both fields hold the same tensor object.
    """

    conv_w: Tensor
    conv_b: Tensor
    attn_w0: Optional[Tensor] = None
    attn_w1: Optional[Tensor] = None


@dataclass
class ModelParams:
    """All trainable weights: per-pipeline conv blocks plus the LR layer."""

    pipelines: list[list[BlockParams]]
    lr_w: Tensor
    lr_b: Tensor
    share_attn_weights: bool = True

    def named(self):
        """Yield (name, tensor) pairs in canonical serialization order."""
        for p, blocks in enumerate(self.pipelines):
            for layer, bp in enumerate(blocks, start=1):
                prefix = f"p{p}.conv{layer}"
                yield f"{prefix}.weights", bp.conv_w
                yield f"{prefix}.bias", bp.conv_b
                if bp.attn_w0 is not None:
                    yield f"{prefix}.attn_w0", bp.attn_w0
                    if not self.share_attn_weights:
                        yield f"{prefix}.attn_w1", bp.attn_w1
        yield "lr.weights", self.lr_w
        yield "lr.bias", self.lr_b

    def trainable(self):
        return [(name, t) for name, t in self.named() if t.requires_grad]

    def zero_grads(self) -> None:
        for _, t in self.named():
            t.grad = None

    def copy(self) -> "ModelParams":
        """Deep copy preserving requires_grad flags and weight sharing."""
        new_pipelines = []
        for blocks in self.pipelines:
            new_blocks = []
            for bp in blocks:
                attn0 = attn1 = None
                if bp.attn_w0 is not None:
                    attn0 = Tensor(bp.attn_w0.data.copy(), bp.attn_w0.requires_grad)
                    if bp.attn_w1 is bp.attn_w0:
                        attn1 = attn0
                    else:
                        attn1 = Tensor(bp.attn_w1.data.copy(), bp.attn_w1.requires_grad)
                new_blocks.append(
                    BlockParams(
                        conv_w=Tensor(bp.conv_w.data.copy(), bp.conv_w.requires_grad),
                        conv_b=Tensor(bp.conv_b.data.copy(), bp.conv_b.requires_grad),
                        attn_w0=attn0,
                        attn_w1=attn1,
                    )
                )
            new_pipelines.append(new_blocks)
        return ModelParams(
            pipelines=new_pipelines,
            lr_w=Tensor(self.lr_w.data.copy(), self.lr_w.requires_grad),
            lr_b=Tensor(self.lr_b.data.copy(), self.lr_b.requires_grad),
            share_attn_weights=self.share_attn_weights,
        )


def _draw(rng: SeededRng, shape: tuple[int, ...]) -> np.ndarray:
    return uniform_vector(rng, int(np.prod(shape)), -0.01, 0.01).reshape(shape)


def init_model_params(config: ModelConfig, rng: SeededRng) -> ModelParams:
    """Initialize all weights uniformly in [-0.01, 0.01), biases at zero.

    Draws happen in canonical parameter order (see ``ModelParams.named``),
    which makes initialization reproducible for a fixed seed.
    """
    channels = config.conv_channels()
    pipelines = []
    for p in range(2 if config.dual else 1):
        s_pad = config.pipeline_s_pad(p)
        blocks = []
        for layer in range(1, config.num_conv_layers + 1):
            d_in = config.block_input_dim(layer)
            conv_w = ad.parameter(_draw(rng, (config.d1, config.w * d_in * channels)))
            conv_b = ad.parameter(np.zeros((config.d1, 1)))
            attn0 = attn1 = None
            if config.uses_input_attention:
                attn0 = ad.parameter(_draw(rng, (d_in, s_pad)))
                if config.share_attn_weights:
                    attn1 = attn0
                else:
                    attn1 = ad.parameter(_draw(rng, (d_in, s_pad)))
            blocks.append(BlockParams(conv_w, conv_b, attn0, attn1))
        pipelines.append(blocks)
    lr_w = ad.parameter(_draw(rng, (config.num_classes, config.feature_width)))
    lr_b = ad.parameter(np.zeros((config.num_classes, 1)))
    return ModelParams(
        pipelines=pipelines,
        lr_w=lr_w,
        lr_b=lr_b,
        share_attn_weights=config.share_attn_weights,
    )


@dataclass
class PreparedPair:
    """One embedded example ready for the network.

    ``maps`` holds one (left, right) pair of embedding maps per pipeline
    (two pipelines for TE: original sentences and the overlap-removed
    copies); ``lengths`` are the unpadded token counts behind each map.
    """

    maps: list[tuple[FeatureMap, FeatureMap]]
    lengths: list[tuple[int, int]]
    extras: np.ndarray
    label: Optional[int] = None
    group_id: Optional[str] = None


@dataclass
class PipelineTrace:
    """Per-pipeline record of one forward pass (plain numpy views)."""

    sentence_vectors: list[tuple[np.ndarray, np.ndarray]]
    attention_levels: list[Optional[np.ndarray]]
    level_kinds: list[str]
    input_width: int
    conv_width: int
    pooled_width: int
    lengths: tuple[int, int]


@dataclass
class ForwardTrace:
    """Everything one forward pass produced."""

    pipelines: list[PipelineTrace]
    scores: np.ndarray
    dyn_features: np.ndarray
    extras: np.ndarray
    features: np.ndarray
    logits: np.ndarray
    probabilities: np.ndarray
    feature_tensor: Tensor = field(repr=False, default=None)
    logits_tensor: Tensor = field(repr=False, default=None)


class _PipelineRun:
    """Tensor-level intermediates of one pipeline (internal)."""

    def __init__(self):
        self.input_maps = None        # (Tensor, Tensor)
        self.block_vectors = []       # [(Tensor, Tensor)] per block
        self.conv_maps = []           # [(Tensor, Tensor)] per conv block
        self.pooled_maps = []         # [(Tensor, Tensor)] per conv block
        self.attn_out = []            # [Tensor | None] per conv block


def _padding_mask(length: int, width: int) -> np.ndarray:
    mask = np.zeros(width)
    mask[: min(length, width)] = 1.0
    return mask


def _mean_columns(t: Tensor, mask: Optional[np.ndarray]) -> Tensor:
    """Column mean as a (d, 1) tensor, optionally over unmasked columns."""
    width = t.data.shape[1]
    if mask is None:
        ones = ad.constant(np.ones((width, 1)))
        return ad.scale(ad.matmul(t, ones), 1.0 / width)
    count = float(mask.sum())
    col = ad.constant(mask.reshape(width, 1))
    return ad.scale(ad.matmul(t, col), 1.0 / count if count > 0 else 0.0)


def _run_pipeline(
    f0: np.ndarray,
    f1: np.ndarray,
    blocks: list[BlockParams],
    config: ModelConfig,
    s_pad: int,
    lengths: tuple[int, int],
    uniform_attention_override: Optional[float] = None,
) -> _PipelineRun:
    w = config.w
    conv_width = s_pad + w - 1
    run = _PipelineRun()
    cur0, cur1 = ad.constant(f0), ad.constant(f1)
    run.input_maps = (cur0, cur1)

    # With masking on, columns at or beyond the unpadded length are
    # excluded from pooling denominators; the effective length never grows
    # across blocks because pooled columns past it mix in padding.
    masks_in = masks_conv = (None, None)
    if config.mask_padding:
        masks_in = tuple(_padding_mask(n, s_pad) for n in lengths)
        masks_conv = tuple(_padding_mask(n + w - 1, conv_width) for n in lengths)

    run.block_vectors.append(
        (_mean_columns(cur0, masks_in[0]), _mean_columns(cur1, masks_in[1]))
    )

    window = ad.constant(window_sum_matrix(conv_width, w))
    ones_col = ad.constant(np.ones((conv_width, 1)))

    for bp in blocks:
        if config.uses_input_attention:
            a_in = ad.match_score_matrix(cur0, cur1)
            f0a = ad.matmul(bp.attn_w0, ad.transpose(a_in))
            f1a = ad.matmul(bp.attn_w1, a_in)
            x0 = ad.concat_rows([ad.unfold_windows(cur0, w), ad.unfold_windows(f0a, w)])
            x1 = ad.concat_rows([ad.unfold_windows(cur1, w), ad.unfold_windows(f1a, w)])
        else:
            x0 = ad.unfold_windows(cur0, w)
            x1 = ad.unfold_windows(cur1, w)
        c0 = ad.tanh(ad.add(ad.matmul(bp.conv_w, x0), bp.conv_b))
        c1 = ad.tanh(ad.add(ad.matmul(bp.conv_w, x1), bp.conv_b))
        run.conv_maps.append((c0, c1))

        if config.uses_output_attention:
            a_out = ad.match_score_matrix(c0, c1)
            run.attn_out.append(a_out)
            if uniform_attention_override is not None:
                flat = np.full((1, conv_width), float(uniform_attention_override))
                a0_row, a1_row = ad.constant(flat), ad.constant(flat)
            else:
                a0_row = ad.transpose(ad.matmul(a_out, ones_col))
                a1_row = ad.matmul(ad.constant(np.ones((1, conv_width))), a_out)
            if config.mask_padding:
                a0_row = ad.mul(a0_row, ad.constant(masks_conv[0].reshape(1, -1)))
                a1_row = ad.mul(a1_row, ad.constant(masks_conv[1].reshape(1, -1)))
            w0map = ad.mul(c0, a0_row)
            w1map = ad.mul(c1, a1_row)
            p0 = ad.matmul(w0map, window)
            p1 = ad.matmul(w1map, window)
            v0 = ad.div(ad.matmul(w0map, ones_col), ad.matmul(a0_row, ones_col))
            v1 = ad.div(ad.matmul(w1map, ones_col), ad.matmul(a1_row, ones_col))
        else:
            run.attn_out.append(None)
            if config.mask_padding:
                p0 = _masked_window_mean(c0, masks_conv[0], window)
                p1 = _masked_window_mean(c1, masks_conv[1], window)
            else:
                p0 = ad.scale(ad.matmul(c0, window), 1.0 / w)
                p1 = ad.scale(ad.matmul(c1, window), 1.0 / w)
            v0 = _mean_columns(c0, masks_conv[0])
            v1 = _mean_columns(c1, masks_conv[1])
        run.block_vectors.append((v0, v1))
        run.pooled_maps.append((p0, p1))
        cur0, cur1 = p0, p1
    return run


def _masked_window_mean(c: Tensor, mask: np.ndarray, window: Tensor) -> Tensor:
    """Window means over unmasked columns only (zero where none)."""
    counts = mask @ window.data
    inv = np.where(counts > 0, 1.0 / np.where(counts > 0, counts, 1.0), 0.0)
    masked = ad.mul(c, ad.constant(mask.reshape(1, -1)))
    return ad.mul(ad.matmul(masked, window), ad.constant(inv.reshape(1, -1)))


def _block_scores(run: _PipelineRun, config: ModelConfig) -> list[Tensor]:
    """Per-block similarity scores, block-major, as (1, 1) tensors."""
    scores = []
    for v0, v1 in run.block_vectors:
        if config.task == "AS":
            scores.append(ad.cosine_pair(v0, v1))
        elif config.task == "PI":
            scores.append(ad.eucsim_pair(v0, v1))
        else:
            scores.append(ad.cosine_pair(v0, v1))
            scores.append(ad.eucsim_pair(v0, v1))
    return scores


def _attention_feature_levels(run: _PipelineRun, config: ModelConfig):
    """One attention matrix per block: the raw-embedding matrix at level 0,
    then per conv block the conv-output matrix for output-attention
    variants or the pooled-output matrix otherwise.  Detached numpy."""
    f0, f1 = run.input_maps
    levels = [match_scores(f0.data, f1.data)]
    kinds = ["input"]
    for i in range(len(run.conv_maps)):
        if config.uses_output_attention:
            levels.append(run.attn_out[i].data)
            kinds.append("conv-output")
        else:
            p0, p1 = run.pooled_maps[i]
            levels.append(match_scores(p0.data, p1.data))
            kinds.append("pool-output")
    return levels, kinds


def _assemble(
    score_tensors: list[Tensor],
    dyn: np.ndarray,
    extras: np.ndarray,
    config: ModelConfig,
) -> Tensor:
    if extras.size != config.extras_width:
        raise DimensionError(
            f"task {config.task} expects {config.extras_width} extra features, "
            f"got {extras.size}"
        )
    parts = list(score_tensors)
    if dyn.size:
        parts.append(ad.constant(dyn.reshape(-1, 1)))
    if extras.size:
        parts.append(ad.constant(extras.reshape(-1, 1)))
    return ad.concat_rows(parts)


def _check_map(fm: FeatureMap, config: ModelConfig, s_pad: int) -> np.ndarray:
    if fm.dim != config.d0:
        raise DimensionError(f"map dim {fm.dim} does not match d0={config.d0}")
    if fm.width != s_pad:
        raise DimensionError(f"map width {fm.width} does not match s_pad={s_pad}")
    return fm.values


def forward(
    pair: PreparedPair,
    params: ModelParams,
    config: ModelConfig,
    collect_attention: bool = False,
    uniform_attention_override: Optional[float] = None,
    pinned_dyn_features: Optional[np.ndarray] = None,
) -> ForwardTrace:
    """Run the network on one prepared pair and record a full trace.

    ``uniform_attention_override`` replaces the output-attention weights
    of every unit with a constant; it exists for mechanism-ablation
    checks (``1/w`` reproduces plain average pooling) and is never used in
    training.  ``pinned_dyn_features`` substitutes precomputed dynamic
    pooling features; the finite-difference oracle uses it to hold these
    constant inputs fixed while perturbing parameters.
    """
    expected = 2 if config.dual else 1
    if len(pair.maps) != expected or len(params.pipelines) != expected:
        raise DimensionError(
            f"task {config.task} expects {expected} pipeline(s), got "
            f"{len(pair.maps)} inputs and {len(params.pipelines)} parameter sets"
        )
    extras = np.asarray(pair.extras, dtype=np.float64).reshape(-1)

    runs = []
    for p in range(expected):
        f0, f1 = pair.maps[p]
        s_pad = config.pipeline_s_pad(p)
        runs.append(
            _run_pipeline(
                _check_map(f0, config, s_pad),
                _check_map(f1, config, s_pad),
                params.pipelines[p],
                config,
                s_pad,
                pair.lengths[p],
                uniform_attention_override,
            )
        )

    score_tensors = []
    for run in runs:
        score_tensors.extend(_block_scores(run, config))

    need_levels = collect_attention or config.task == "PI"
    level_data = [None] * expected
    level_kinds = [None] * expected
    if need_levels:
        for p, run in enumerate(runs):
            level_data[p], level_kinds[p] = _attention_feature_levels(run, config)

    if config.task == "PI":
        if pinned_dyn_features is not None:
            dyn = np.asarray(pinned_dyn_features, dtype=np.float64).reshape(-1)
        else:
            dyn = np.concatenate(
                [
                    dynamic_pool_features(a, config.pool_groups)
                    for a in level_data[0]
                ]
            )
        if dyn.size != config.num_dyn_features:
            raise DimensionError(
                f"expected {config.num_dyn_features} dynamic-pool features, "
                f"got {dyn.size}"
            )
    else:
        dyn = np.empty(0)

    feats = _assemble(score_tensors, dyn, extras, config)
    logits = ad.add(ad.matmul(params.lr_w, feats), params.lr_b)

    logits_np = logits.data.reshape(-1)
    if config.num_classes == 1:
        p_pos = float(ad.sigmoid(logits_np)[0])
        probabilities = np.array([1.0 - p_pos, p_pos])
    else:
        probabilities = ad.softmax(logits_np)

    pipeline_traces = []
    for p, run in enumerate(runs):
        s_pad = config.pipeline_s_pad(p)
        pipeline_traces.append(
            PipelineTrace(
                sentence_vectors=[
                    (v0.data.reshape(-1).copy(), v1.data.reshape(-1).copy())
                    for v0, v1 in run.block_vectors
                ],
                attention_levels=(
                    [a.copy() for a in level_data[p]] if need_levels else [None] * config.k
                ),
                level_kinds=(
                    level_kinds[p]
                    if need_levels
                    else ["input"] + ["conv"] * config.num_conv_layers
                ),
                input_width=s_pad,
                conv_width=s_pad + config.w - 1,
                pooled_width=s_pad,
                lengths=pair.lengths[p],
            )
        )

    return ForwardTrace(
        pipelines=pipeline_traces,
        scores=np.array([float(t.data[0, 0]) for t in score_tensors]),
        dyn_features=dyn.copy(),
        extras=extras.copy(),
        features=feats.data.reshape(-1).copy(),
        logits=logits_np.copy(),
        probabilities=probabilities,
        feature_tensor=feats,
        logits_tensor=logits,
    )


def te_dual_forward(
    orig_maps: tuple[FeatureMap, FeatureMap],
    nonover_maps: tuple[FeatureMap, FeatureMap],
    params: ModelParams,
    config: ModelConfig,
    extras: np.ndarray,
    lengths: Optional[list[tuple[int, int]]] = None,
    **kwargs,
) -> ForwardTrace:
    """Run the two entailment pipelines into the single shared LR layer."""
    if config.task != "TE":
        raise ValueError("te_dual_forward requires a TE config")
    if lengths is None:
        lengths = [
            (orig_maps[0].width, orig_maps[1].width),
            (nonover_maps[0].width, nonover_maps[1].width),
        ]
    pair = PreparedPair(
        maps=[orig_maps, nonover_maps], lengths=lengths, extras=np.asarray(extras)
    )
    return forward(pair, params, config, **kwargs)


def similarity_features(trace: ForwardTrace, task: str, extras) -> np.ndarray:
    """Assemble the LR-layer input vector from a trace and extra features.

    Ordering: per-block similarity scores, dynamic-pooling grids (PI), then
    the task extras.  The extras width is fixed per task.
    """
    extras = np.asarray(extras, dtype=np.float64).reshape(-1)
    if extras.size != EXTRA_WIDTHS[task]:
        raise DimensionError(
            f"task {task} expects {EXTRA_WIDTHS[task]} extra features, got {extras.size}"
        )
    return np.concatenate([trace.scores, trace.dyn_features, extras])


def addition_baseline(
    f0: FeatureMap, f1: FeatureMap
) -> np.ndarray:
    """Concatenated element-wise sums of the two sentences' embeddings."""
    return np.concatenate([f0.values.sum(axis=1), f1.values.sum(axis=1)])
