"""ROUGE-1/2/L F-measures and the copy-rate extractivity metric.

All comparisons are case-folded and run over the package tokenizer's
output; no stemming, no stopword removal, single reference. Corpus
scores are macro averages (per-example scores, then the arithmetic
mean of each field).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import EmptyCorpus

COPY_METRICS = ("f1", "precision")


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float

    def __post_init__(self):
        for v in (self.precision, self.recall, self.f1):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"score component {v} outside [0, 1]")

    @classmethod
    def from_pr(cls, precision: float, recall: float) -> "RougeScore":
        denom = precision + recall
        f1 = 2.0 * precision * recall / denom if denom > 0 else 0.0
        return cls(precision, recall, f1)

    @classmethod
    def from_f(cls, f1: float) -> "RougeScore":
        # P == R == F is consistent with the harmonic mean; handy for fixtures.
        return cls(f1, f1, f1)


@dataclass(frozen=True)
class EvalReport:
    """Corpus-averaged ROUGE scores plus mean copy percentage."""

    r1: RougeScore
    r2: RougeScore
    rl: RougeScore
    copy_pct: float | None = None

    def render_rouge(self) -> str:
        """Two-decimal `R1 / R2 / RL` row on the 0-100 scale."""
        return " / ".join(
            f"{100.0 * s.f1:.2f}" for s in (self.r1, self.r2, self.rl)
        )

    def render_copy(self) -> str:
        return "" if self.copy_pct is None else f"{self.copy_pct:.2f}"

    def to_dict(self) -> dict:
        return {
            "r1": round(100.0 * self.r1.f1, 2),
            "r2": round(100.0 * self.r2.f1, 2),
            "rl": round(100.0 * self.rl.f1, 2),
            "copy_pct": None if self.copy_pct is None else round(self.copy_pct, 2),
        }


def _fold(tokens: Sequence[str]) -> list[str]:
    return [t.lower() for t in tokens]


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(pred: Sequence[str], ref: Sequence[str], n: int) -> RougeScore:
    """Clipped n-gram multiset overlap between prediction and reference."""
    if n not in (1, 2):
        raise ValueError(f"n must be 1 or 2, got {n}")
    pred_grams = _ngram_counts(_fold(pred), n)
    ref_grams = _ngram_counts(_fold(ref), n)
    total_pred = sum(pred_grams.values())
    total_ref = sum(ref_grams.values())
    if total_pred == 0 or total_ref == 0:
        return RougeScore(0.0, 0.0, 0.0)
    matches = sum((pred_grams & ref_grams).values())
    return RougeScore.from_pr(matches / total_pred, matches / total_ref)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest common subsequence length, two-row dynamic program."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(pred: Sequence[str], ref: Sequence[str]) -> RougeScore:
    """LCS-based ROUGE with a plain harmonic-mean F."""
    if not pred or not ref:
        return RougeScore(0.0, 0.0, 0.0)
    lcs = lcs_length(_fold(pred), _fold(ref))
    return RougeScore.from_pr(lcs / len(pred), lcs / len(ref))


def copy_percent(pred: Sequence[str], src: Sequence[str], metric: str = "f1") -> float:
    """Share of the prediction copied from the source, on a 0-100 scale.

    Defined as unigram-overlap ROUGE between prediction and source; the
    F measure is the default, precision is available behind the flag.
    """
    if metric not in COPY_METRICS:
        raise ValueError(f"metric must be one of {COPY_METRICS}, got {metric!r}")
    score = rouge_n(pred, src, 1)
    return 100.0 * (score.f1 if metric == "f1" else score.precision)


def evaluate_corpus(
    examples: Iterable[tuple[Sequence[str], Sequence[str], Sequence[str] | None]],
    copy_metric: str = "f1",
) -> EvalReport:
    """Macro-averaged EvalReport over (prediction, reference, source) triples.

    Sources may be None; copy_pct then averages over the examples that
    have one, or is None if none do. Accumulation is index-ordered, so
    the result does not depend on any fan-out strategy.
    """
    sums = {"r1": [0.0, 0.0, 0.0], "r2": [0.0, 0.0, 0.0], "rl": [0.0, 0.0, 0.0]}
    copy_sum = 0.0
    copy_n = 0
    n = 0
    for pred, ref, src in examples:
        n += 1
        for key, score in (
            ("r1", rouge_n(pred, ref, 1)),
            ("r2", rouge_n(pred, ref, 2)),
            ("rl", rouge_l(pred, ref)),
        ):
            acc = sums[key]
            acc[0] += score.precision
            acc[1] += score.recall
            acc[2] += score.f1
        if src is not None:
            copy_sum += copy_percent(pred, src, copy_metric)
            copy_n += 1
    if n == 0:
        raise EmptyCorpus("no examples to evaluate")

    def mean(key: str) -> RougeScore:
        p, r, f = sums[key]
        return RougeScore(p / n, r / n, f / n)

    return EvalReport(
        r1=mean("r1"),
        r2=mean("r2"),
        rl=mean("rl"),
        copy_pct=(copy_sum / copy_n) if copy_n else None,
    )
