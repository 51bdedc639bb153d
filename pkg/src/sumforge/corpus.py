"""Corpus I/O, direction swapping, weighted schedules, and statistics.

Aligned corpora live as JSONL, one `{"src", "tgt", "origin"}` object per
line; unaligned reports as `{"text"}` lines. Training-iteration ratios
between datasets are expressed as an explicit schedule (a manifest of
(dataset, example-index) entries) instead of materialized duplication,
so a multi-million-pair synthetic set never needs upsampling on disk.
"""

from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass
from typing import Iterable, Iterator

from .errors import EmptyCorpus, EmptyDataset, MalformedLine, MissingField
from .metrics import copy_percent
from .rng import keyed_rng
from .tokenizer import tokenize

_MANIFEST_HEADER_RE = re.compile(r"^#sumforge-manifest v1 seed=(-?\d+)$")

DEFAULT_SAMPLE_CAP = 10000


@dataclass(frozen=True)
class AlignedPair:
    """One (transcription, report) example with its dataset tag."""

    src: str
    tgt: str
    origin: str = ""

    def __post_init__(self):
        if not self.src.strip() or not self.tgt.strip():
            raise ValueError("src and tgt must be non-empty")


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    path: str
    weight: int

    def __post_init__(self):
        if self.weight < 1:
            raise ValueError(f"weight must be >= 1, got {self.weight}")
        if not self.name:
            raise ValueError("dataset name must be non-empty")


@dataclass(frozen=True)
class CorpusStats:
    n_pairs: int
    src_mean: float
    src_d1: int
    src_d9: int
    tgt_mean: float
    tgt_d1: int
    tgt_d9: int
    extractivity: float

    def to_dict(self) -> dict:
        return {
            "n_pairs": self.n_pairs,
            "src_mean": round(self.src_mean, 2),
            "src_d1": self.src_d1,
            "src_d9": self.src_d9,
            "tgt_mean": round(self.tgt_mean, 2),
            "tgt_d1": self.tgt_d1,
            "tgt_d9": self.tgt_d9,
            "extractivity": round(self.extractivity, 2),
        }


@dataclass(frozen=True)
class TrainingManifest:
    """Ordered (dataset name, example index) schedule for a trainer."""

    seed: int
    entries: tuple[tuple[str, int], ...]


def read_jsonl(path) -> Iterator[AlignedPair]:
    """Stream aligned pairs from a JSONL file.

    Raises MalformedLine for broken JSON or blank src/tgt, MissingField
    when a required key is absent. `origin` defaults to "".
    """
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            yield _parse_pair_line(line, line_no)


def _parse_pair_line(line: str, line_no: int) -> AlignedPair:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise MalformedLine(line_no, f"invalid JSON ({e.msg})") from e
    if not isinstance(obj, dict):
        raise MalformedLine(line_no, "record is not an object")
    for key in ("src", "tgt"):
        if key not in obj:
            raise MissingField(key, line_no)
        if not isinstance(obj[key], str):
            raise MalformedLine(line_no, f"field {key!r} is not a string")
    origin = obj.get("origin", "")
    if not isinstance(origin, str):
        raise MalformedLine(line_no, "field 'origin' is not a string")
    try:
        return AlignedPair(src=obj["src"], tgt=obj["tgt"], origin=origin)
    except ValueError as e:
        raise MalformedLine(line_no, str(e)) from e


def write_jsonl(pairs: Iterable[AlignedPair], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for pair in pairs:
            f.write(pair_to_json(pair) + "\n")


def pair_to_json(pair: AlignedPair) -> str:
    return json.dumps(
        {"src": pair.src, "tgt": pair.tgt, "origin": pair.origin},
        ensure_ascii=False,
    )


def read_reports(path) -> Iterator[str]:
    """Stream unaligned report texts from `{"text": ...}` JSONL lines."""
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedLine(line_no, f"invalid JSON ({e.msg})") from e
            if not isinstance(obj, dict):
                raise MalformedLine(line_no, "record is not an object")
            if "text" not in obj:
                raise MissingField("text", line_no)
            if not isinstance(obj["text"], str):
                raise MalformedLine(line_no, "field 'text' is not a string")
            yield obj["text"]


def write_reports(texts: Iterable[str], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for text in texts:
            f.write(json.dumps({"text": text}, ensure_ascii=False) + "\n")


def count_lines(path) -> int:
    n = 0
    with open(path, "rb") as f:
        for _ in f:
            n += 1
    return n


def swap_direction(pairs: Iterable[AlignedPair]) -> Iterator[AlignedPair]:
    """Exchange src and tgt; the origin tag gets a "-rev" suffix."""
    for pair in pairs:
        yield AlignedPair(src=pair.tgt, tgt=pair.src, origin=pair.origin + "-rev")


# ---------------------------------------------------------------------------
# Weighted interleaving
# ---------------------------------------------------------------------------


def interleave_schedule(
    datasets: list[tuple[str, int, int]],
    seed: int,
    cycles: int,
) -> TrainingManifest:
    """Schedule over (name, size, weight) datasets.

    Every cycle contains exactly `weight` entries per dataset, spread by
    ideal fractional position so low-weight datasets are not clustered.
    Within a dataset, examples follow one seeded shuffle and wrap around
    when exhausted, which keeps per-example visit counts within 1 of
    each other at any prefix.
    """
    if cycles < 1:
        raise ValueError(f"cycles must be >= 1, got {cycles}")
    names = [n for n, _, _ in datasets]
    if len(set(names)) != len(names):
        raise ValueError("dataset names must be unique")
    for name, size, weight in datasets:
        if size < 1:
            raise EmptyDataset(name)
        if weight < 1:
            raise ValueError(f"weight for {name!r} must be >= 1")

    # One cycle's slot order: dataset d owns ideal positions (i + 0.5) / w_d.
    slots = sorted(
        ((i + 0.5) / weight, name)
        for name, _, weight in datasets
        for i in range(weight)
    )

    orders = {}
    cursors = {}
    sizes = {name: size for name, size, _ in datasets}
    for name, size, _ in datasets:
        rng = keyed_rng(seed, "interleave", name)
        orders[name] = [int(i) for i in rng.permutation(size)]
        cursors[name] = 0

    entries: list[tuple[str, int]] = []
    for _ in range(cycles):
        for _, name in slots:
            k = cursors[name]
            entries.append((name, orders[name][k % sizes[name]]))
            cursors[name] = k + 1
    return TrainingManifest(seed=seed, entries=tuple(entries))


def weighted_interleave(
    datasets: list[DatasetSpec],
    seed: int,
    cycles: int | None = None,
) -> TrainingManifest:
    """Schedule over on-disk datasets; sizes come from line counts.

    With cycles unset, enough cycles are emitted for every dataset to
    visit each of its examples at least once.
    """
    sized = []
    for spec in datasets:
        size = count_lines(spec.path)
        if size == 0:
            raise EmptyDataset(spec.name)
        sized.append((spec.name, size, spec.weight))
    if cycles is None:
        cycles = max(-(-size // weight) for _, size, weight in sized)
    return interleave_schedule(sized, seed, cycles)


def save_manifest(manifest: TrainingManifest, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"#sumforge-manifest v1 seed={manifest.seed}\n")
        for name, idx in manifest.entries:
            f.write(f"{name}\t{idx}\n")


def load_manifest(path) -> TrainingManifest:
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        m = _MANIFEST_HEADER_RE.match(header)
        if not m:
            raise MalformedLine(1, f"bad manifest header {header!r}")
        entries = []
        for line_no, line in enumerate(f, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[1].isdigit():
                raise MalformedLine(line_no, f"bad manifest entry {line!r}")
            entries.append((parts[0], int(parts[1])))
    return TrainingManifest(seed=int(m.group(1)), entries=tuple(entries))


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


def _nearest_rank(sorted_values: list[int], pct: float) -> int:
    # smallest 1-based rank j with j >= pct * n
    n = len(sorted_values)
    rank = max(1, math.ceil(pct * n))
    return sorted_values[rank - 1]


def stats(
    pairs: Iterable[AlignedPair],
    sample_cap: int | None = DEFAULT_SAMPLE_CAP,
    seed: int = 0,
    copy_metric: str = "f1",
) -> CorpusStats:
    """Single-pass corpus statistics.

    Token lengths use the package tokenizer; d1/d9 are nearest-rank 10th
    and 90th percentiles. Extractivity (mean copy% of target against
    source) is computed on a uniform reservoir sample of at most
    sample_cap pairs, matching how huge synthetic sets are summarized.
    """
    rng = keyed_rng(seed, "stats-sample")
    src_lens: list[int] = []
    tgt_lens: list[int] = []
    sample: list[tuple[list[str], list[str]]] = []
    cap = sample_cap if sample_cap is not None else 0

    n = 0
    for pair in pairs:
        src_toks = tokenize(pair.src)
        tgt_toks = tokenize(pair.tgt)
        src_lens.append(len(src_toks))
        tgt_lens.append(len(tgt_toks))
        if cap:
            if len(sample) < cap:
                sample.append((src_toks, tgt_toks))
            else:
                j = int(rng.integers(0, n + 1))
                if j < cap:
                    sample[j] = (src_toks, tgt_toks)
        n += 1
    if n == 0:
        raise EmptyCorpus("no pairs to summarize")

    src_sorted = sorted(src_lens)
    tgt_sorted = sorted(tgt_lens)
    if cap:
        extractivity = sum(
            copy_percent(tgt, src, copy_metric) for src, tgt in sample
        ) / len(sample)
    else:
        extractivity = 0.0
    return CorpusStats(
        n_pairs=n,
        src_mean=sum(src_lens) / n,
        src_d1=_nearest_rank(src_sorted, 0.10),
        src_d9=_nearest_rank(src_sorted, 0.90),
        tgt_mean=sum(tgt_lens) / n,
        tgt_d1=_nearest_rank(tgt_sorted, 0.10),
        tgt_d9=_nearest_rank(tgt_sorted, 0.90),
        extractivity=extractivity,
    )


def atomic_write(path, write_fn) -> None:
    """Write via a temp file in the same directory, then rename."""
    tmp = f"{path}.tmp{os.getpid()}"
    try:
        with open(tmp, "w", encoding="utf-8") as f:
            write_fn(f)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)
