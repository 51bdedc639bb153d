"""Self-supervised denoising pairs from single reports.

Two noise functions are composed: sentence permutation (uniform shuffle
of sentence order) and text infilling (contiguous token spans, Poisson
lengths, each replaced by a single mask token; zero-length spans insert
a mask). The clean report is the reconstruction target.

Pair generation is keyed by (seed, example index), so building a corpus
is order-independent and embarrassingly parallel.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .errors import EmptyDocument, SpanOutOfRange
from .rng import keyed_rng
from .tokenizer import Document

_PLACEMENT_ATTEMPTS = 64

Span = tuple[int, int]


@dataclass(frozen=True)
class NoiseConfig:
    """Noising parameters: mask budget fraction, Poisson span length mean,
    sentence permutation switch, mask token, and the corpus seed."""

    infill_p: float = 0.3
    span_lambda: float = 3.0
    permute_sentences: bool = True
    mask_token: str = "<mask>"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.infill_p <= 1.0:
            raise ValueError(f"infill_p must be in [0, 1], got {self.infill_p}")
        if self.span_lambda < 0:
            raise ValueError(f"span_lambda must be >= 0, got {self.span_lambda}")
        if not self.mask_token or any(c.isspace() for c in self.mask_token):
            raise ValueError(f"bad mask token {self.mask_token!r}")


@dataclass(frozen=True)
class DenoisingPair:
    noisy: Document
    clean: Document


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def sample_spans(num_tokens: int, cfg: NoiseConfig, rng: np.random.Generator) -> list[Span]:
    """Draw non-overlapping (start, length) mask spans over a token range.

    Span lengths are i.i.d. Poisson(span_lambda); sampling stops once the
    covered token count reaches round(infill_p * num_tokens). The final
    span may overshoot the budget; lengths are truncated only by the
    document end, never by the budget, to keep the length distribution
    clean. Zero-length spans are pure insertion points. With
    span_lambda == 0 the budget is unreachable, so a single insertion
    span is emitted and sampling stops.

    Placement is uniform over valid starts via rejection sampling, with a
    deterministic enumeration fallback when the document gets crowded.
    """
    if num_tokens < 0:
        raise ValueError("num_tokens must be >= 0")
    budget = _round_half_up(cfg.infill_p * num_tokens)
    spans: list[Span] = []
    if budget <= 0:
        return spans

    intervals: list[Span] = []  # non-zero spans as (start, end)
    insertions: set[int] = set()
    covered = 0
    while covered < budget:
        length = int(rng.poisson(cfg.span_lambda))
        length = min(length, num_tokens)
        placed = _place_span(length, num_tokens, intervals, insertions, rng)
        if placed is not None:
            start, length = placed
            spans.append((start, length))
            if length > 0:
                intervals.append((start, start + length))
                covered += length
            else:
                insertions.add(start)
        if cfg.span_lambda == 0:
            break
    spans.sort()
    return spans


def _place_span(
    length: int,
    num_tokens: int,
    intervals: list[Span],
    insertions: set[int],
    rng: np.random.Generator,
) -> Span | None:
    hi = num_tokens - length if length > 0 else num_tokens
    for _ in range(_PLACEMENT_ATTEMPTS):
        start = int(rng.integers(0, hi + 1))
        if _fits(start, length, intervals, insertions):
            return (start, length)
    # Crowded document: enumerate valid starts, shrinking if nothing fits.
    while True:
        valid = [s for s in range(hi + 1) if _fits(s, length, intervals, insertions)]
        if valid:
            return (valid[int(rng.integers(0, len(valid)))], length)
        if length <= 1:
            return None
        gaps = _free_gaps(num_tokens, intervals)
        widest = max((e - s for s, e in gaps), default=0)
        if widest == 0:
            return None
        length = min(length - 1, widest)
        hi = num_tokens - length


def _fits(start: int, length: int, intervals: list[Span], insertions: set[int]) -> bool:
    if length > 0:
        end = start + length
        for s, e in intervals:
            if s < end and start < e:
                return False
        # A mask insertion strictly inside the span would be swallowed.
        for p in insertions:
            if start < p < end:
                return False
        return True
    if start in insertions:
        return False
    for s, e in intervals:
        if s < start < e:
            return False
    return True


def _free_gaps(num_tokens: int, intervals: list[Span]) -> list[Span]:
    gaps = []
    pos = 0
    for s, e in sorted(intervals):
        if s > pos:
            gaps.append((pos, s))
        pos = max(pos, e)
    if pos < num_tokens:
        gaps.append((pos, num_tokens))
    return gaps


def text_infill(doc: Document, spans: list[Span], cfg: NoiseConfig) -> Document:
    """Replace each span (zero-length included) with one mask token.

    Tokens outside spans keep their order; sentence boundaries are kept
    by flattened position, and sentences emptied entirely by masking are
    dropped.
    """
    flat = doc.flat_tokens()
    n = len(flat)
    ordered = sorted(spans)
    prev_end = -1
    for start, length in ordered:
        if start < 0 or length < 0 or start + length > n:
            raise SpanOutOfRange(f"span ({start}, {length}) outside 0..{n}")
        if length > 0:
            if start < prev_end:
                raise SpanOutOfRange(f"span ({start}, {length}) overlaps a previous span")
            prev_end = start + length
    if not ordered:
        return doc

    sent_of: list[int] = []
    for i, sent in enumerate(doc.sentences):
        sent_of.extend([i] * len(sent))
    last_sid = len(doc.sentences) - 1

    mask_at: dict[int, list[int]] = defaultdict(list)
    for start, length in ordered:
        mask_at[start].append(length)

    out: dict[int, list[str]] = defaultdict(list)
    skip_end = 0
    for p in range(n + 1):
        for length in mask_at.get(p, ()):
            sid = sent_of[p] if p < n else max(last_sid, 0)
            out[sid].append(cfg.mask_token)
            if length > 0:
                skip_end = p + length
        if p < n and p >= skip_end:
            out[sent_of[p]].append(flat[p])

    return Document.from_sentences(out[sid] for sid in sorted(out) if out[sid])


def sentence_permute(doc: Document, rng: np.random.Generator) -> Document:
    """Uniformly shuffle sentence order; token content is untouched."""
    k = len(doc.sentences)
    if k <= 1:
        return doc
    perm = rng.permutation(k)
    return Document.from_sentences(doc.sentences[i] for i in perm)


def make_denoising_pair(report: Document, cfg: NoiseConfig, example_index: int) -> DenoisingPair:
    """Build one (noisy, clean) training pair for a report.

    The random stream is derived from (cfg.seed, example_index) only, so
    the same pair comes out regardless of generation order or sharding.
    Permutation runs before infilling, keeping spans within
    post-permutation sentences.
    """
    if report.num_tokens == 0:
        raise EmptyDocument("cannot noise an empty report")
    rng = keyed_rng(cfg.seed, "noise", example_index)
    noisy = report
    if cfg.permute_sentences:
        noisy = sentence_permute(noisy, rng)
    spans = sample_spans(noisy.num_tokens, cfg, rng)
    noisy = text_infill(noisy, spans, cfg)
    return DenoisingPair(noisy=noisy, clean=report)
