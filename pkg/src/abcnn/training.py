"""Loss, gradients, Adagrad with L2, and the layerwise block regime.

The objective for a batch is mean cross-entropy plus ``l2 * sum ||theta||^2``
over all currently-trainable parameters.  Gradients are exact analytic
derivatives obtained by backpropagating through the whole graph: the LR
layer, both pooling forms, the attention matrices (through the match-score
and its Euclidean distance, with the zero-distance subgradient taken as
0), the wide convolution, and tanh.  The finite-difference suite in the
tests is the independent oracle for every one of these paths.

Updates are per-pair stochastic (batch size 1) in a seeded shuffled
order; Adagrad accumulates squared gradients and scales each coordinate
by ``lr / (sqrt(G) + eps)`` with ``eps = 1e-6``.  Early stopping watches
the dev-split loss with a configurable patience and the best-dev
parameters are returned.

Two-conv models train layerwise: the one-conv network is trained first,
then a fresh two-conv network is built whose first block is initialized
from (and frozen at) the stage-1 weights, and only the new block and the
new LR layer receive updates.  Frozen tensors are bit-identical before
and after the later stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import autodiff as ad
from .errors import DimensionError, NumericError
from .mathcore import SeededRng
from .network import (
    ForwardTrace,
    ModelConfig,
    ModelParams,
    PreparedPair,
    forward,
    init_model_params,
)

__all__ = [
    "TrainConfig",
    "AdagradState",
    "init_adagrad",
    "loss_and_gradients",
    "batch_loss",
    "adagrad_step",
    "train",
    "layerwise_train",
    "TrainResult",
]


@dataclass
class TrainConfig:
    lr: float = 0.08
    l2: float = 0.0004
    epochs: int = 200
    patience: int = 10
    seed: int = 13

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("learning rate must be >= 0")
        if self.l2 < 0:
            raise ValueError("l2 must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")


@dataclass
class AdagradState:
    """Per-parameter accumulated squared gradients; entries never shrink."""

    accumulators: dict[str, np.ndarray]
    epsilon: float = 1e-6


def init_adagrad(params: ModelParams, epsilon: float = 1e-6) -> AdagradState:
    return AdagradState(
        accumulators={name: np.zeros_like(t.data) for name, t in params.trainable()},
        epsilon=epsilon,
    )


def _example_loss_tensor(
    example: PreparedPair,
    params: ModelParams,
    config: ModelConfig,
    pinned_dyn: Optional[np.ndarray] = None,
) -> tuple[ad.Tensor, ForwardTrace]:
    trace = forward(example, params, config, pinned_dyn_features=pinned_dyn)
    if example.label is None:
        raise ValueError("training examples need labels")
    if config.num_classes == 1:
        loss = ad.sigmoid_cross_entropy(trace.logits_tensor, float(example.label))
    else:
        loss = ad.softmax_cross_entropy(trace.logits_tensor, int(example.label))
    return loss, trace


def batch_loss(
    examples: list[PreparedPair],
    params: ModelParams,
    config: ModelConfig,
    l2: float,
    pinned_dyn: Optional[list[np.ndarray]] = None,
) -> ad.Tensor:
    """Scalar loss tensor: mean cross-entropy plus the L2 penalty."""
    if not examples:
        raise ValueError("batch must be non-empty")
    total = None
    for i, example in enumerate(examples):
        pinned = pinned_dyn[i] if pinned_dyn is not None else None
        loss, _ = _example_loss_tensor(example, params, config, pinned)
        total = loss if total is None else ad.add(total, loss)
    total = ad.scale(total, 1.0 / len(examples))
    if l2 > 0:
        penalty = None
        for _, tensor in params.trainable():
            term = ad.sqsum(tensor)
            penalty = term if penalty is None else ad.add(penalty, term)
        if penalty is not None:
            total = ad.add(total, ad.scale(penalty, l2))
    return total


def loss_and_gradients(
    examples: list[PreparedPair],
    params: ModelParams,
    config: ModelConfig,
    l2: float,
    pinned_dyn: Optional[list[np.ndarray]] = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Batch loss value and exact gradients for every trainable tensor."""
    params.zero_grads()
    total = batch_loss(examples, params, config, l2, pinned_dyn)
    value = float(total.data[0, 0])
    if not math.isfinite(value):
        raise NumericError(
            f"non-finite training loss {value!r} "
            f"(task={config.task}, variant={config.variant})"
        )
    ad.backward(total)
    grads = {}
    for name, tensor in params.trainable():
        grads[name] = (
            tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        )
    return value, grads


def adagrad_step(
    params: ModelParams,
    grads: dict[str, np.ndarray],
    state: AdagradState,
    lr: float,
) -> tuple[ModelParams, AdagradState]:
    """In-place Adagrad update: ``G += g^2; theta -= lr * g / (sqrt(G)+eps)``."""
    for name, tensor in params.trainable():
        if name not in grads:
            continue
        g = grads[name]
        acc = state.accumulators[name]
        if g.shape != tensor.data.shape or acc.shape != tensor.data.shape:
            raise DimensionError(
                f"gradient shape {g.shape} does not match parameter "
                f"{name} shape {tensor.data.shape}"
            )
        acc += g * g
        tensor.data -= lr * g / (np.sqrt(acc) + state.epsilon)
    return params, state


def _example_ce(trace: ForwardTrace, label: int, config: ModelConfig) -> float:
    z = trace.logits
    if config.num_classes == 1:
        return float(np.logaddexp(0.0, z[0]) - float(label) * z[0])
    m = float(z.max())
    return m + float(np.log(np.sum(np.exp(z - m)))) - float(z[label])


def evaluate_loss(
    examples: list[PreparedPair],
    params: ModelParams,
    config: ModelConfig,
    l2: float,
) -> tuple[float, float]:
    """(objective, accuracy) over a dataset without touching gradients."""
    ce = 0.0
    correct = 0
    for example in examples:
        trace = forward(example, params, config)
        ce += _example_ce(trace, example.label, config)
        predicted = int(np.argmax(trace.probabilities))
        if config.num_classes == 1:
            predicted = int(trace.probabilities[1] >= 0.5)
        if predicted == example.label:
            correct += 1
    loss = ce / len(examples)
    if l2 > 0:
        loss += l2 * sum(
            float(np.sum(t.data * t.data)) for _, t in params.trainable()
        )
    return loss, correct / len(examples)


def _dev_metric(
    examples: list[PreparedPair],
    params: ModelParams,
    config: ModelConfig,
    accuracy: float,
) -> float:
    """MAP over ranking groups when group ids exist, accuracy otherwise."""
    if config.task != "AS" or not any(e.group_id for e in examples):
        return accuracy
    from .classifier import RankingGroup, mean_average_precision

    groups: dict[str, list[tuple[float, bool]]] = {}
    for example in examples:
        trace = forward(example, params, config)
        groups.setdefault(example.group_id, []).append(
            (float(trace.probabilities[1]), example.label == 1)
        )
    usable = [
        RankingGroup(gid, items)
        for gid, items in groups.items()
        if any(rel for _, rel in items)
    ]
    if not usable:
        return accuracy
    return mean_average_precision(usable)


@dataclass
class TrainResult:
    params: ModelParams
    log: list[str] = field(default_factory=list)
    best_epoch: int = 0
    best_dev_loss: float = math.inf


def train(
    examples: list[PreparedPair],
    params: ModelParams,
    config: ModelConfig,
    train_config: TrainConfig,
    dev_examples: Optional[list[PreparedPair]] = None,
    rng: Optional[SeededRng] = None,
) -> TrainResult:
    """Per-pair Adagrad training with early stopping on dev loss.

    Without a dev split the training set doubles as one, so stopping then
    watches the training objective.  The log holds one TSV line per epoch:
    epoch, train loss, dev loss, dev metric.
    """
    if not examples:
        raise ValueError("training set is empty")
    if rng is None:
        rng = SeededRng(train_config.seed)
    dev = dev_examples if dev_examples else examples
    state = init_adagrad(params)
    result = TrainResult(params=params.copy())
    bad_epochs = 0
    for epoch in range(1, train_config.epochs + 1):
        order = list(range(len(examples)))
        rng.shuffle(order)
        epoch_loss = 0.0
        for idx in order:
            loss, grads = loss_and_gradients(
                [examples[idx]], params, config, train_config.l2
            )
            adagrad_step(params, grads, state, train_config.lr)
            epoch_loss += loss
        train_loss = epoch_loss / len(examples)
        dev_loss, dev_acc = evaluate_loss(dev, params, config, train_config.l2)
        metric = _dev_metric(dev, params, config, dev_acc)
        result.log.append(
            f"{epoch}\t{train_loss:.17g}\t{dev_loss:.17g}\t{metric:.17g}"
        )
        if dev_loss < result.best_dev_loss:
            result.best_dev_loss = dev_loss
            result.best_epoch = epoch
            result.params = params.copy()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs > train_config.patience:
                break
    return result


def _copy_block_into(dst, src) -> None:
    dst.conv_w.data[...] = src.conv_w.data
    dst.conv_b.data[...] = src.conv_b.data
    if src.attn_w0 is not None:
        dst.attn_w0.data[...] = src.attn_w0.data
        if src.attn_w1 is not src.attn_w0:
            dst.attn_w1.data[...] = src.attn_w1.data


def _freeze_block(bp) -> None:
    bp.conv_w.requires_grad = False
    bp.conv_b.requires_grad = False
    if bp.attn_w0 is not None:
        bp.attn_w0.requires_grad = False
        bp.attn_w1.requires_grad = False


def layerwise_train(
    examples: list[PreparedPair],
    config: ModelConfig,
    train_config: TrainConfig,
    dev_examples: Optional[list[PreparedPair]] = None,
    rng: Optional[SeededRng] = None,
) -> TrainResult:
    """Train conv blocks one at a time, freezing previously learned ones.

    Stage 1 trains the one-conv network.  Each later stage builds a deeper
    network, initializes its lower blocks from the previous stage, freezes
    them, and trains only the new block and the (new, wider) LR layer.
    Lower-block weights are bit-identical before and after their stage, so
    the similarity scores of lower blocks stay unchanged once learned.
    """
    if rng is None:
        rng = SeededRng(train_config.seed)
    result = None
    prev_params = None
    for depth in range(1, config.num_conv_layers + 1):
        stage_config = replace(config, num_conv_layers=depth)
        stage_params = init_model_params(stage_config, rng)
        if prev_params is not None:
            for p, blocks in enumerate(stage_params.pipelines):
                for layer in range(depth - 1):
                    _copy_block_into(blocks[layer], prev_params.pipelines[p][layer])
                    _freeze_block(blocks[layer])
        stage_result = train(
            examples, stage_params, stage_config, train_config, dev_examples, rng
        )
        if result is None:
            result = stage_result
        else:
            result.log.extend(stage_result.log)
            result.params = stage_result.params
            result.best_epoch = stage_result.best_epoch
            result.best_dev_loss = stage_result.best_dev_loss
        prev_params = stage_result.params
    return result
