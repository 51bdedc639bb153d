"""Beam-search decoding with trigram repetition blocking.

The decoder is generic over a next-token scorer so the same machinery
drives the built-in n-gram stand-in model and any future neural scorer.
Blocking applies within the generated hypothesis only: a continuation
that would repeat one of the hypothesis' own trigrams is dropped from
the candidate set, so a fully blocked step falls back to end-of-sequence.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Protocol, Sequence

from .errors import SumforgeError

logger = logging.getLogger(__name__)

EOS = "</s>"


class Scorer(Protocol):
    """Next-token scoring contract.

    Given the source and the generated prefix, return finite
    log-probabilities for every candidate token including EOS; the
    distribution must be normalized (logsumexp == 0 within 1e-6).
    """

    def next_scores(
        self, source: Sequence[str], prefix: Sequence[str]
    ) -> Mapping[str, float]: ...


@dataclass(frozen=True)
class DecodeConfig:
    beam_size: int = 5
    max_len: int = 600
    block_trigrams: bool = True
    length_normalization_alpha: float = 0.0

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError(f"beam_size must be >= 1, got {self.beam_size}")
        if self.max_len < 1:
            raise ValueError(f"max_len must be >= 1, got {self.max_len}")
        if self.length_normalization_alpha < 0:
            raise ValueError("length_normalization_alpha must be >= 0")


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple[str, ...]
    score: float
    finished: bool


class BatchItemError(SumforgeError):
    """Failure on one item of a batch decode, tagged with its index."""

    def __init__(self, index: int, cause: Exception):
        self.index = index
        self.cause = cause
        super().__init__(f"item {index}: {cause}")


def _normalized(score: float, length: int, alpha: float) -> float:
    if alpha == 0.0:
        return score
    return score / (max(length, 1) ** alpha)


def beam_search_hypothesis(
    scorer: Scorer, source: Sequence[str], cfg: DecodeConfig
) -> Hypothesis:
    """Run beam search and return the winning hypothesis.

    The result is the finished hypothesis with the best
    length-normalized score; ties break on lexicographic token order.
    If nothing can finish (EOS scored -inf until max_len), the best
    unfinished hypothesis is returned with finished=False.
    """
    # beam items: (tokens, score, trigram set)
    beams: list[tuple[tuple[str, ...], float, frozenset]] = [((), 0.0, frozenset())]
    finished: list[tuple[tuple[str, ...], float]] = []

    for _ in range(cfg.max_len):
        candidates: list[tuple[float, tuple[str, ...], str, frozenset]] = []
        for tokens, score, trigrams in beams:
            for tok, logp in scorer.next_scores(source, tokens).items():
                if math.isinf(logp):
                    continue
                if tok == EOS:
                    finished.append((tokens, score + logp))
                    continue
                new_tri = None
                if cfg.block_trigrams and len(tokens) >= 2:
                    new_tri = (tokens[-2], tokens[-1], tok)
                    if new_tri in trigrams:
                        continue
                candidates.append((score + logp, tokens, tok, trigrams if new_tri is None else trigrams | {new_tri}))
        if not candidates:
            break
        candidates.sort(key=lambda c: (-c[0], c[1] + (c[2],)))
        beams = [
            (tokens + (tok,), score, tris)
            for score, tokens, tok, tris in candidates[: cfg.beam_size]
        ]
        # keep the finished pool bounded; prune under the final ordering
        if len(finished) > 4 * cfg.beam_size:
            finished.sort(
                key=lambda h: (
                    -_normalized(h[1], len(h[0]), cfg.length_normalization_alpha),
                    h[0],
                )
            )
            del finished[4 * cfg.beam_size :]

    # cap reached: force end-of-sequence where the scorer allows it
    for tokens, score, _ in beams:
        if len(tokens) == 0:
            continue
        eos_lp = scorer.next_scores(source, tokens).get(EOS, -math.inf)
        if not math.isinf(eos_lp):
            finished.append((tokens, score + eos_lp))

    alpha = cfg.length_normalization_alpha
    if finished:
        best = min(
            finished, key=lambda h: (-_normalized(h[1], len(h[0]), alpha), h[0])
        )
        return Hypothesis(tokens=best[0], score=best[1], finished=True)
    if not beams:
        return Hypothesis(tokens=(), score=-math.inf, finished=False)
    best_u = min(beams, key=lambda b: (-_normalized(b[1], len(b[0]), alpha), b[0]))
    return Hypothesis(tokens=best_u[0], score=best_u[1], finished=False)


def beam_search(scorer: Scorer, source: Sequence[str], cfg: DecodeConfig) -> list[str]:
    """Decode one source; returns the generated tokens (EOS excluded)."""
    hyp = beam_search_hypothesis(scorer, source, cfg)
    if not hyp.finished:
        logger.warning(
            "no hypothesis reached end-of-sequence within max_len=%d; "
            "returning best unfinished",
            cfg.max_len,
        )
    return list(hyp.tokens)


def batch_decode(
    scorer: Scorer, sources: Iterable[Sequence[str]], cfg: DecodeConfig
) -> Iterator[list[str]]:
    """Decode a stream of sources, output order matching input order.

    Each item equals the standalone beam_search result; per-item errors
    are re-raised as BatchItemError carrying the item index.
    """
    for i, source in enumerate(sources):
        try:
            yield beam_search(scorer, source, cfg)
        except Exception as e:
            raise BatchItemError(i, e) from e
