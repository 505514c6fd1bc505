"""Tokenization, embedding tables, sentence embedding, and dataset parsing.

Tokenization is deliberately simple: lowercase, split on whitespace, strip
leading/trailing characters that are not letters, digits, or apostrophes
(so "isn't" survives intact, which the negation feature depends on), drop
empty results.  Embeddings come from a whitespace-separated text file with
an optional ``count dim`` header line; every token absent from the file
maps to one shared unknown-word vector drawn once, uniformly from
[-0.01, 0.01).  Neither the embeddings nor the unknown vector change
during training.

Dataset files are UTF-8 TSV, one pair per line:

* answer selection (``AS``): ``group_id TAB question TAB candidate TAB label``
  with label 0 or 1; pairs sharing a group_id form one ranking group;
* paraphrase identification (``PI``): ``label TAB s0 TAB s1`` with label
  0 or 1;
* textual entailment (``TE``): ``label TAB s0 TAB s1`` with label one of
  ``entailment``, ``contradiction``, ``neutral``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .convpool import FeatureMap
from .errors import FormatError
from .mathcore import SeededRng, require_finite, uniform_vector

__all__ = [
    "TASKS",
    "TE_LABELS",
    "EMPTY_TOKEN",
    "tokenize",
    "EmbeddingTable",
    "load_embeddings",
    "embed_sentence",
    "SentencePair",
    "PairDataset",
    "parse_dataset",
    "augment_swap",
]

TASKS = ("AS", "PI", "TE")

# Fixed class ids for the three-way entailment labels.
TE_LABELS = {"entailment": 0, "contradiction": 1, "neutral": 2}

# Stand-in token for a sentence side emptied by the overlap-removal
# transform; it is deliberately out of vocabulary.
EMPTY_TOKEN = "<empty>"


def tokenize(text: str) -> list[str]:
    """Lowercase, whitespace-split, strip edge punctuation, drop empties."""
    tokens = []
    for raw in text.lower().split():
        start, end = 0, len(raw)
        while start < end and not (raw[start].isalnum() or raw[start] == "'"):
            start += 1
        while end > start and not (raw[end - 1].isalnum() or raw[end - 1] == "'"):
            end -= 1
        if end > start:
            tokens.append(raw[start:end])
    return tokens


@dataclass
class EmbeddingTable:
    """Frozen token -> vector table with one shared unknown-word vector."""

    dim: int
    vectors: dict[str, np.ndarray]
    unk_vector: np.ndarray

    def lookup(self, token: str) -> np.ndarray:
        return self.vectors.get(token, self.unk_vector)

    def __contains__(self, token: str) -> bool:
        return token in self.vectors


def load_embeddings(path, rng: SeededRng) -> EmbeddingTable:
    """Parse a text embedding file and draw the unknown-word vector.

    Format: an optional header line ``count dim`` (two integers), then one
    line per token: the token followed by ``dim`` reals, whitespace
    separated.  Inconsistent dimensionality raises :class:`FormatError`;
    unreadable files raise the underlying ``OSError``.
    """
    vectors: dict[str, np.ndarray] = {}
    dim: Optional[int] = None
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            fields = line.split()
            if not fields:
                continue
            if lineno == 1 and len(fields) == 2:
                try:
                    int(fields[0]), int(fields[1])
                except ValueError:
                    pass
                else:
                    continue  # header line
            token, values = fields[0], fields[1:]
            if not values:
                raise FormatError(f"{path}: line {lineno}: no vector values")
            try:
                vec = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError as exc:
                raise FormatError(f"{path}: line {lineno}: {exc}") from None
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise FormatError(
                    f"{path}: line {lineno}: vector has {vec.size} values, "
                    f"expected {dim}"
                )
            require_finite(vec, f"{path}: line {lineno}")
            vec.flags.writeable = False
            vectors[token] = vec
    if dim is None:
        raise FormatError(f"{path}: no embedding entries found")
    unk = uniform_vector(rng, dim, -0.01, 0.01)
    unk.flags.writeable = False
    return EmbeddingTable(dim=dim, vectors=vectors, unk_vector=unk)


def embed_sentence(
    tokens: list[str],
    table: EmbeddingTable,
    s_pad: int,
    max_len: Optional[int] = None,
) -> FeatureMap:
    """Embed tokens into a ``d0 x s_pad`` map, truncating and zero-padding.

    The first ``min(len(tokens), max_len)`` columns are the embeddings in
    order; the remaining columns are zero (the padding embedding).
    """
    if not tokens:
        raise ValueError("cannot embed an empty token sequence")
    kept = tokens if max_len is None else tokens[:max_len]
    if s_pad < len(kept):
        raise ValueError(
            f"s_pad={s_pad} is smaller than the truncated sentence length {len(kept)}"
        )
    values = np.zeros((table.dim, s_pad), dtype=np.float64)
    for i, token in enumerate(kept):
        values[:, i] = table.lookup(token)
    return FeatureMap(values, role="representation")


@dataclass
class SentencePair:
    """A labeled sentence pair; ``group_id`` marks ranking groups for AS."""

    s0_tokens: list[str]
    s1_tokens: list[str]
    label: int
    group_id: Optional[str] = None


@dataclass
class PairDataset:
    task: str
    pairs: list[SentencePair]
    sidecar: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.sidecar is not None and len(self.sidecar) != len(self.pairs):
            raise ValueError(
                f"sidecar has {len(self.sidecar)} rows for {len(self.pairs)} pairs"
            )

    def __len__(self) -> int:
        return len(self.pairs)


def _parse_binary_label(text: str, path, lineno: int) -> int:
    if text not in ("0", "1"):
        raise FormatError(f"{path}: line {lineno}: invalid label {text!r}")
    return int(text)


def _require_tokens(text: str, side: str, path, lineno: int) -> list[str]:
    tokens = tokenize(text)
    if not tokens:
        raise FormatError(f"{path}: line {lineno}: {side} has no tokens")
    return tokens


def parse_dataset(path, task: str) -> PairDataset:
    """Parse a task TSV file into tokenized sentence pairs."""
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    pairs: list[SentencePair] = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            fields = line.split("\t")
            if task == "AS":
                if len(fields) != 4:
                    raise FormatError(
                        f"{path}: line {lineno}: expected 4 tab-separated fields, "
                        f"got {len(fields)}"
                    )
                group, question, candidate, label_text = fields
                pairs.append(
                    SentencePair(
                        s0_tokens=_require_tokens(question, "question", path, lineno),
                        s1_tokens=_require_tokens(candidate, "candidate", path, lineno),
                        label=_parse_binary_label(label_text, path, lineno),
                        group_id=group,
                    )
                )
            else:
                if len(fields) != 3:
                    raise FormatError(
                        f"{path}: line {lineno}: expected 3 tab-separated fields, "
                        f"got {len(fields)}"
                    )
                label_text, s0, s1 = fields
                if task == "PI":
                    label = _parse_binary_label(label_text, path, lineno)
                else:
                    if label_text not in TE_LABELS:
                        raise FormatError(
                            f"{path}: line {lineno}: invalid label {label_text!r}"
                        )
                    label = TE_LABELS[label_text]
                pairs.append(
                    SentencePair(
                        s0_tokens=_require_tokens(s0, "s0", path, lineno),
                        s1_tokens=_require_tokens(s1, "s1", path, lineno),
                        label=label,
                    )
                )
    return PairDataset(task=task, pairs=pairs)


def augment_swap(dataset: PairDataset) -> PairDataset:
    """Double a PI dataset by appending ``(label, s1, s0)`` for every pair.

    Originals come first, swapped copies follow in the same order; sidecar
    feature rows are duplicated alongside their pairs.
    """
    if dataset.task != "PI":
        raise ValueError("swap augmentation applies to the PI task only")
    swapped = [
        replace(p, s0_tokens=list(p.s1_tokens), s1_tokens=list(p.s0_tokens))
        for p in dataset.pairs
    ]
    sidecar = dataset.sidecar
    if sidecar is not None and len(sidecar):
        sidecar = np.vstack([sidecar, sidecar])
    return PairDataset(
        task="PI", pairs=list(dataset.pairs) + swapped, sidecar=sidecar
    )
