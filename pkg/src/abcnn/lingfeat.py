"""Task-specific linguistic features.

Answer selection uses lexical-overlap counts: ``word_cnt`` is the number
of non-stopword question tokens (with multiplicity) that also occur in
the candidate, and ``wgt_word_cnt`` reweights each matched token by its
IDF.  IDF is built over the training candidates with the smoothed formula
``ln((N+1)/(df+1)) + 1``.

Paraphrase identification adds ROUGE-1/2/SU4, symmetric F1 scores over
clipped multiset overlap of unigrams, bigrams, and unigrams plus
skip-bigrams with at most four intervening words.

Textual entailment works on an overlap-removed (``nonover``) copy of each
pair: every token whose type occurs in the other sentence is dropped from
both sides (order and multiplicity otherwise preserved; a fully emptied
side becomes the single ``<empty>`` token).  On top of it: a negation
flag, synonym/hypernym counts against a lexicon file, antonym counts
against a mined set of potential antonym pairs, and the four sentence
lengths.

The 15 machine-translation metrics are ingested from a precomputed
sidecar file, never computed here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import FormatError
from .mathcore import cosine_similarity
from .textdata import EMPTY_TOKEN, EmbeddingTable, PairDataset, SentencePair

__all__ = [
    "STOPWORDS",
    "MT_FEATURE_WIDTH",
    "word_cnt",
    "wgt_word_cnt",
    "IdfTable",
    "build_idf",
    "rouge",
    "nonover_tokens",
    "nonover",
    "negation_feature",
    "NymLexicon",
    "load_nym_lexicon",
    "PapSet",
    "nym_features",
    "extract_pap",
    "load_mt_sidecar",
    "length_features",
]

MT_FEATURE_WIDTH = 15

NEGATION_TOKENS = frozenset({"no", "not", "nobody", "isn't"})

# Built-in English function-word list used by the overlap counts.
STOPWORDS = frozenset(
    """
    a about above after again against all am an and any are aren't as at
    be because been before being below between both but by can cannot
    could couldn't did didn't do does doesn't doing don't down during
    each few for from further had hadn't has hasn't have haven't having
    he her here hers herself him himself his how i if in into is isn't
    it its itself just me more most my myself no nor not of off on once
    only or other our ours ourselves out over own same she should
    shouldn't so some such than that the their theirs them themselves
    then there these they this those through to too under until up very
    was wasn't we were weren't what when where which while who whom why
    will with won't would wouldn't you your yours yourself yourselves
    """.split()
)


def word_cnt(question, answer, stopwords=STOPWORDS) -> int:
    """Non-stopword question tokens (with multiplicity) occurring in the answer."""
    answer_types = set(answer)
    return sum(1 for t in question if t not in stopwords and t in answer_types)


def wgt_word_cnt(question, answer, stopwords, idf: "IdfTable") -> float:
    """Like :func:`word_cnt` but each matched token contributes its IDF."""
    answer_types = set(answer)
    return float(
        sum(
            idf.value(t)
            for t in question
            if t not in stopwords and t in answer_types
        )
    )


@dataclass
class IdfTable:
    """Smoothed inverse document frequencies over a token-sequence corpus."""

    values: dict[str, float]
    n_documents: int

    def value(self, token: str) -> float:
        default = math.log(self.n_documents + 1.0) + 1.0
        return self.values.get(token, default)


def build_idf(corpus: list[list[str]]) -> IdfTable:
    """``idf(t) = ln((N+1)/(df(t)+1)) + 1`` with N documents."""
    if not corpus:
        raise ValueError("IDF corpus is empty")
    n = len(corpus)
    df: dict[str, int] = {}
    for doc in corpus:
        for token in set(doc):
            df[token] = df.get(token, 0) + 1
    values = {t: math.log((n + 1.0) / (c + 1.0)) + 1.0 for t, c in df.items()}
    return IdfTable(values=values, n_documents=n)


def _count_units(units) -> dict:
    counts: dict = {}
    for u in units:
        counts[u] = counts.get(u, 0) + 1
    return counts


def _rouge_units(tokens: list[str], kind: str) -> list:
    if kind == "1":
        return list(tokens)
    if kind == "2":
        return [(tokens[i], tokens[i + 1]) for i in range(len(tokens) - 1)]
    if kind == "su4":
        # Unigrams plus skip-bigrams with at most 4 intervening words.
        units: list = list(tokens)
        for i in range(len(tokens)):
            for j in range(i + 1, min(len(tokens), i + 6)):
                units.append((tokens[i], tokens[j]))
        return units
    raise ValueError(f"unknown rouge kind {kind!r}")


def rouge(s0: list[str], s1: list[str], kind) -> float:
    """Symmetric F1 over clipped multiset overlap of the unit type.

    Returns 0 when either side produces no units (e.g. bigrams of a
    one-token sentence).
    """
    kind = str(kind).lower()
    units0 = _rouge_units(list(s0), kind)
    units1 = _rouge_units(list(s1), kind)
    if not units0 or not units1:
        return 0.0
    counts0 = _count_units(units0)
    counts1 = _count_units(units1)
    overlap = sum(min(c, counts1[u]) for u, c in counts0.items() if u in counts1)
    if overlap == 0:
        return 0.0
    return 2.0 * overlap / (len(units0) + len(units1))


def nonover_tokens(
    s0: list[str], s1: list[str]
) -> tuple[list[str], list[str]]:
    """Drop from each side every token whose type occurs in the other side.

    Order and multiplicity of the surviving tokens are preserved; a fully
    emptied side becomes the single ``<empty>`` token.
    """
    types0, types1 = set(s0), set(s1)
    keep0 = [t for t in s0 if t not in types1]
    keep1 = [t for t in s1 if t not in types0]
    return keep0 or [EMPTY_TOKEN], keep1 or [EMPTY_TOKEN]


def nonover(pair: SentencePair) -> SentencePair:
    """Overlap-removed copy of a pair (label and group preserved)."""
    keep0, keep1 = nonover_tokens(pair.s0_tokens, pair.s1_tokens)
    return replace(pair, s0_tokens=keep0, s1_tokens=keep1)


def negation_feature(pair: SentencePair) -> int:
    """1 if either side contains one of: no, not, nobody, isn't."""
    if NEGATION_TOKENS & set(pair.s0_tokens) or NEGATION_TOKENS & set(pair.s1_tokens):
        return 1
    return 0


def _unordered(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


@dataclass
class NymLexicon:
    """Synonym / hypernym / antonym relations loaded from a lexicon file."""

    synonyms: set[tuple[str, str]]
    hypernyms: set[tuple[str, str]]  # (word, its hypernym)
    antonyms: set[tuple[str, str]]

    @classmethod
    def empty(cls) -> "NymLexicon":
        return cls(synonyms=set(), hypernyms=set(), antonyms=set())

    def is_syn(self, a: str, b: str) -> bool:
        return _unordered(a, b) in self.synonyms

    def has_hypernym(self, word: str, other: str) -> bool:
        return (word, other) in self.hypernyms

    def is_ant(self, a: str, b: str) -> bool:
        return _unordered(a, b) in self.antonyms

    def in_syn_or_hyp(self, a: str, b: str) -> bool:
        return (
            self.is_syn(a, b)
            or self.has_hypernym(a, b)
            or self.has_hypernym(b, a)
        )


def load_nym_lexicon(path) -> NymLexicon:
    """Parse ``relation TAB word1 TAB word2`` lines, relation in {syn, hyp, ant}.

    ``hyp`` means word2 is a hypernym of word1.  A word pair may appear in
    only one relation set.
    """
    lex = NymLexicon.empty()
    seen: dict[tuple[str, str], str] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise FormatError(
                    f"{path}: line {lineno}: expected 3 tab-separated fields"
                )
            relation, w1, w2 = fields
            if relation not in ("syn", "hyp", "ant"):
                raise FormatError(
                    f"{path}: line {lineno}: unknown relation {relation!r}"
                )
            if not w1 or not w2:
                raise FormatError(f"{path}: line {lineno}: empty word field")
            key = _unordered(w1, w2)
            if key in seen and seen[key] != relation:
                raise FormatError(
                    f"{path}: line {lineno}: pair {key} already in relation "
                    f"{seen[key]!r}"
                )
            seen[key] = relation
            if relation == "syn":
                lex.synonyms.add(key)
            elif relation == "ant":
                lex.antonyms.add(key)
            else:
                lex.hypernyms.add((w1, w2))
    return lex


@dataclass
class PapSet:
    """Mined potential antonym pairs with their training frequencies."""

    pairs: dict[tuple[str, str], int]

    @classmethod
    def empty(cls) -> "PapSet":
        return cls(pairs={})

    def __contains__(self, pair: tuple[str, str]) -> bool:
        return _unordered(*pair) in self.pairs

    def __len__(self) -> int:
        return len(self.pairs)


def nym_features(
    nonover_pair: SentencePair,
    lexicon: NymLexicon,
    pap: Optional[PapSet] = None,
) -> tuple[int, int, int, int]:
    """(syn, hyp0, hyp1, ant) counts over the overlap-removed token pairs.

    ``syn``/``ant`` count cross-sentence occurrence pairs in the synonym
    set / the mined antonym set; ``hyp0`` counts s0 tokens that have a
    hypernym in s1 and ``hyp1`` the reverse.
    """
    s0, s1 = nonover_pair.s0_tokens, nonover_pair.s1_tokens
    syn = sum(1 for a in s0 for b in s1 if lexicon.is_syn(a, b))
    hyp0 = sum(1 for a in s0 if any(lexicon.has_hypernym(a, b) for b in set(s1)))
    hyp1 = sum(1 for b in s1 if any(lexicon.has_hypernym(b, a) for a in set(s0)))
    ant = 0
    if pap is not None:
        ant = sum(1 for a in s0 for b in s1 if (a, b) in pap)
    return syn, hyp0, hyp1, ant


def extract_pap(
    train: PairDataset,
    table: EmbeddingTable,
    lexicon: Optional[NymLexicon] = None,
    n: int = 2,
    cos_min: float = 0.4,
) -> PapSet:
    """Mine potential antonym pairs from an entailment training set.

    Candidates are cross-sentence token-type pairs of the overlap-removed
    contradiction and neutral pairs, counted once per training pair.
    Pairs also produced by any entailment pair are removed, as are
    synonym/hypernym pairs from the lexicon.  Survivors need frequency
    >= ``n``, both words in the embedding table, and embedding cosine
    > ``cos_min``.
    """
    if train.task != "TE":
        raise ValueError("potential antonym pairs are mined from TE data")
    lexicon = lexicon or NymLexicon.empty()
    counts: dict[tuple[str, str], int] = {}
    entailed: set[tuple[str, str]] = set()
    for pair in train.pairs:
        keep0, keep1 = nonover_tokens(pair.s0_tokens, pair.s1_tokens)
        cross = {
            _unordered(a, b)
            for a in set(keep0) - {EMPTY_TOKEN}
            for b in set(keep1) - {EMPTY_TOKEN}
        }
        if pair.label == 0:  # entailment
            entailed.update(cross)
        else:
            for key in cross:
                counts[key] = counts.get(key, 0) + 1
    kept: dict[tuple[str, str], int] = {}
    for key, count in counts.items():
        a, b = key
        if count < n or key in entailed or lexicon.in_syn_or_hyp(a, b):
            continue
        if a not in table or b not in table:
            continue
        if cosine_similarity(table.vectors[a], table.vectors[b]) <= cos_min:
            continue
        kept[key] = count
    return PapSet(pairs=kept)


def load_mt_sidecar(path, expected_rows: int) -> np.ndarray:
    """Load the precomputed per-pair MT metrics: ``index TAB 15 reals``.

    Rows must appear in dataset order (index equal to line position) and
    the row count must match the dataset.
    """
    rows: list[np.ndarray] = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != MT_FEATURE_WIDTH + 1:
                raise FormatError(
                    f"{path}: line {lineno}: expected index plus "
                    f"{MT_FEATURE_WIDTH} values, got {len(fields)} fields"
                )
            try:
                index = int(fields[0])
                values = np.array([float(v) for v in fields[1:]], dtype=np.float64)
            except ValueError as exc:
                raise FormatError(f"{path}: line {lineno}: {exc}") from None
            if index != len(rows):
                raise FormatError(
                    f"{path}: line {lineno}: pair index {index} out of order, "
                    f"expected {len(rows)}"
                )
            rows.append(values)
    if len(rows) != expected_rows:
        raise FormatError(
            f"{path}: has {len(rows)} rows, dataset has {expected_rows} pairs"
        )
    return np.vstack(rows) if rows else np.zeros((0, MT_FEATURE_WIDTH))


def length_features(
    pair: SentencePair, nonover_pair: Optional[SentencePair] = None
) -> np.ndarray:
    """Token counts: (len0, len1), plus the overlap-removed pair's when given."""
    lens = [len(pair.s0_tokens), len(pair.s1_tokens)]
    if nonover_pair is not None:
        lens += [len(nonover_pair.s0_tokens), len(nonover_pair.s1_tokens)]
    return np.array(lens, dtype=np.float64)
