"""End-to-end recipes: denoising-corpus prep and the back-summarization loop.

Stages write their artifacts under a work directory, each stage
consuming files the previous one produced (or any externally supplied
equivalents). Neural training itself is exported as work orders
(prepared corpora plus training manifests) for an external backend.
All on-disk state transitions are write-temp-then-rename; transcription
synthesis checkpoints its progress so multi-million-item runs can be
killed and resumed without byte-level drift.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass
from typing import Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .backends import Backend, BackendSpec, build_backend
from .corpus import (
    AlignedPair,
    DatasetSpec,
    TrainingManifest,
    atomic_write,
    count_lines,
    interleave_schedule,
    pair_to_json,
    read_jsonl,
    read_reports,
    swap_direction,
)
from .decoding import DecodeConfig
from .errors import (
    BackendFailure,
    CheckpointCorruption,
    EmptyDataset,
    LengthMismatch,
    NoCandidates,
)
from .metrics import EvalReport, evaluate_corpus
from .noise import NoiseConfig, make_denoising_pair
from .tokenizer import Document, tokenize

DEFAULT_WEIGHTS = (2, 7, 100)
SYNTH_FLUSH_EVERY = 50


@dataclass(frozen=True)
class PipelineConfig:
    manual: str
    automatic: str
    reports: str
    workdir: str
    noise: NoiseConfig = NoiseConfig()
    decode: DecodeConfig = DecodeConfig()
    weights: tuple[int, int, int] = DEFAULT_WEIGHTS
    backend: BackendSpec = BackendSpec(kind="noisy_clone")
    seed: int = 0

    def __post_init__(self):
        if any(w < 1 for w in self.weights):
            raise ValueError(f"weights must all be >= 1, got {self.weights}")
        for label, path in (
            ("manual", self.manual),
            ("automatic", self.automatic),
            ("reports", self.reports),
        ):
            if not os.path.exists(path):
                raise FileNotFoundError(f"{label} dataset not found: {path}")

    def path(self, name: str) -> str:
        return os.path.join(self.workdir, name)


def load_config(path) -> PipelineConfig:
    """Read a pipeline TOML file; unset keys fall back to the defaults
    above (noising p/lambda, beam size, dataset weights)."""
    with open(path, "rb") as f:
        raw = tomllib.load(f)
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p: str) -> str:
        return p if os.path.isabs(p) else os.path.join(base, p)

    datasets = raw.get("datasets", {})
    for key in ("manual", "automatic", "reports"):
        if key not in datasets:
            raise KeyError(f"config is missing datasets.{key}")
    noise_raw = dict(raw.get("noise", {}))
    decode_raw = dict(raw.get("decode", {}))
    weights_raw = raw.get("weights", {})
    weights = (
        int(weights_raw.get("manual", DEFAULT_WEIGHTS[0])),
        int(weights_raw.get("automatic", DEFAULT_WEIGHTS[1])),
        int(weights_raw.get("back", DEFAULT_WEIGHTS[2])),
    )
    backend_raw = dict(raw.get("backend", {"kind": "noisy_clone"}))
    backend = BackendSpec(
        kind=backend_raw.get("kind", "noisy_clone"),
        parameters=backend_raw.get("parameters", {}),
        seed=int(backend_raw.get("seed", raw.get("seed", 0))),
    )
    return PipelineConfig(
        manual=resolve(datasets["manual"]),
        automatic=resolve(datasets["automatic"]),
        reports=resolve(datasets["reports"]),
        workdir=resolve(raw.get("workdir", "work")),
        noise=NoiseConfig(**noise_raw),
        decode=DecodeConfig(**decode_raw),
        weights=weights,
        backend=backend,
        seed=int(raw.get("seed", 0)),
    )


def _ensure_workdir(cfg: PipelineConfig) -> None:
    os.makedirs(cfg.workdir, exist_ok=True)


# ---------------------------------------------------------------------------
# Stage: self-supervised pre-training data
# ---------------------------------------------------------------------------


def run_selfsup_prep(cfg: PipelineConfig) -> tuple[str, str]:
    """Turn every report into one denoising pair; returns (pairs, manifest).

    The pair for report i depends only on (noise seed, i), so reruns are
    byte-identical. A single-dataset manifest stub covering one shuffled
    epoch accompanies the corpus for the trainer.
    """
    _ensure_workdir(cfg)
    reports = list(read_reports(cfg.reports))
    if not reports:
        raise EmptyDataset("reports")

    pairs_path = cfg.path("selfsup.jsonl")
    manifest_path = cfg.path("selfsup.manifest")

    def write(f):
        for i, text in enumerate(reports):
            doc = Document.from_text(text)
            pair = make_denoising_pair(doc, cfg.noise, i)
            record = AlignedPair(
                src=pair.noisy.text(), tgt=pair.clean.text(), origin="selfsup"
            )
            f.write(pair_to_json(record) + "\n")

    atomic_write(pairs_path, write)
    manifest = interleave_schedule(
        [("selfsup", len(reports), 1)], cfg.seed, cycles=len(reports)
    )
    atomic_write(manifest_path, lambda f: _write_manifest_to(f, manifest))
    return pairs_path, manifest_path


def _write_manifest_to(f, manifest: TrainingManifest) -> None:
    f.write(f"#sumforge-manifest v1 seed={manifest.seed}\n")
    for name, idx in manifest.entries:
        f.write(f"{name}\t{idx}\n")


# ---------------------------------------------------------------------------
# Stage: backward training corpus
# ---------------------------------------------------------------------------


def run_backward_prep(cfg: PipelineConfig) -> str:
    """Concatenate manual+automatic with src/tgt swapped; counts preserved."""
    _ensure_workdir(cfg)
    out_path = cfg.path("backward.jsonl")
    for label, path in (("manual", cfg.manual), ("automatic", cfg.automatic)):
        if count_lines(path) == 0:
            raise EmptyDataset(label)

    def write(f):
        for path in (cfg.manual, cfg.automatic):
            for pair in swap_direction(read_jsonl(path)):
                f.write(pair_to_json(pair) + "\n")

    atomic_write(out_path, write)
    return out_path


# ---------------------------------------------------------------------------
# Stage: backward-model selection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CandidateModel:
    """A trained backward model's validation metrics (0-100 scales)."""

    name: str
    valid_rouge1_f: float
    valid_copy_pct: float

    def __post_init__(self):
        if not 0.0 <= self.valid_rouge1_f <= 100.0:
            raise ValueError(f"valid_rouge1_f out of range: {self.valid_rouge1_f}")
        if not 0.0 <= self.valid_copy_pct <= 100.0:
            raise ValueError(f"valid_copy_pct out of range: {self.valid_copy_pct}")


@dataclass(frozen=True)
class SelectionResult:
    model: CandidateModel
    degraded: bool


def select_backward_model(
    candidates: Sequence[CandidateModel],
    ref_copy_pct: float,
    copy_margin: float = 0.0,
) -> SelectionResult:
    """Best validation ROUGE among models that do not copy too much.

    A candidate qualifies when its copy rate is within copy_margin of
    the reference copy rate; the qualifying candidate with the highest
    ROUGE-1 F wins (ties: lexicographic name). If nothing qualifies, the
    lowest-copy candidate is returned with the degraded flag set.
    """
    if not candidates:
        raise NoCandidates("empty candidate list")
    if copy_margin < 0:
        raise ValueError("copy_margin must be >= 0")
    cap = ref_copy_pct + copy_margin
    qualifying = [c for c in candidates if c.valid_copy_pct <= cap]
    if qualifying:
        best = min(qualifying, key=lambda c: (-c.valid_rouge1_f, c.name))
        return SelectionResult(model=best, degraded=False)
    fallback = min(
        candidates, key=lambda c: (c.valid_copy_pct, -c.valid_rouge1_f, c.name)
    )
    return SelectionResult(model=fallback, degraded=True)


def load_candidates(path) -> list[CandidateModel]:
    """Candidates file: JSONL `{"name", "valid_rouge1_f", "valid_copy_pct"}`."""
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out.append(
                CandidateModel(
                    name=str(obj["name"]),
                    valid_rouge1_f=float(obj["valid_rouge1_f"]),
                    valid_copy_pct=float(obj["valid_copy_pct"]),
                )
            )
    return out


# ---------------------------------------------------------------------------
# Stage: transcription synthesis (checkpointed)
# ---------------------------------------------------------------------------


def _synthesis_fingerprint(cfg: PipelineConfig) -> str:
    h = hashlib.sha256()
    with open(cfg.reports, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    h.update(
        json.dumps(
            {
                "kind": cfg.backend.kind,
                "parameters": sorted(
                    (k, str(v)) for k, v in cfg.backend.parameters.items()
                ),
                "backend_seed": cfg.backend.seed,
                "decode": [
                    cfg.decode.beam_size,
                    cfg.decode.max_len,
                    cfg.decode.block_trigrams,
                    cfg.decode.length_normalization_alpha,
                ],
            },
            sort_keys=True,
        ).encode()
    )
    return h.hexdigest()


def run_synthesis(
    cfg: PipelineConfig,
    backend: Backend | None = None,
    flush_every: int = SYNTH_FLUSH_EVERY,
) -> str:
    """Generate one synthetic source per report with the backward backend.

    Output pairs are `{"src": synthetic, "tgt": report, "origin": "back"}`
    in report order. Progress is checkpointed (workdir/synth.ckpt records
    the last flushed index plus a fingerprint of inputs and config); a
    killed run resumes to a byte-identical file. The checkpoint and the
    partial output are discarded once the final file lands.
    """
    _ensure_workdir(cfg)
    if backend is None:
        backend = build_backend(cfg.backend, cfg.decode)
    reports = list(read_reports(cfg.reports))
    if not reports:
        raise EmptyDataset("reports")

    out_path = cfg.path("back.jsonl")
    part_path = out_path + ".part"
    ckpt_path = cfg.path("synth.ckpt")
    fingerprint = _synthesis_fingerprint(cfg)

    start = 0
    bytes_done = 0
    if os.path.exists(ckpt_path):
        try:
            with open(ckpt_path, encoding="utf-8") as f:
                ckpt = json.load(f)
            start = int(ckpt["next_index"])
            bytes_done = int(ckpt["bytes_written"])
            stored = str(ckpt["fingerprint"])
        except (ValueError, KeyError, json.JSONDecodeError) as e:
            raise CheckpointCorruption(f"unreadable checkpoint {ckpt_path}: {e}")
        if stored != fingerprint:
            raise CheckpointCorruption(
                "checkpoint fingerprint does not match current inputs/config; "
                "remove it to restart synthesis"
            )
        if not os.path.exists(part_path) or os.path.getsize(part_path) < bytes_done:
            raise CheckpointCorruption(
                "partial output is shorter than the checkpoint claims"
            )
        if not 0 <= start <= len(reports):
            raise CheckpointCorruption(f"checkpoint index {start} out of range")
        with open(part_path, "r+b") as f:
            f.truncate(bytes_done)
    else:
        with open(part_path, "wb"):
            pass

    def save_ckpt(next_index: int, nbytes: int) -> None:
        tmp = ckpt_path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(
                {
                    "version": 1,
                    "next_index": next_index,
                    "bytes_written": nbytes,
                    "fingerprint": fingerprint,
                },
                f,
            )
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, ckpt_path)

    with open(part_path, "ab") as out:
        buffer: list[bytes] = []
        for i in range(start, len(reports)):
            report = reports[i]
            try:
                synthetic = backend.summarize(report)
            except Exception as e:
                # everything before the failed item is durable
                _flush(out, buffer)
                save_ckpt(i, out.tell())
                raise BackendFailure(str(e), item_index=i) from e
            record = AlignedPair(src=synthetic, tgt=report, origin="back")
            buffer.append((pair_to_json(record) + "\n").encode("utf-8"))
            if len(buffer) >= flush_every:
                _flush(out, buffer)
                save_ckpt(i + 1, out.tell())
                buffer.clear()
        _flush(out, buffer)
    os.replace(part_path, out_path)
    if os.path.exists(ckpt_path):
        os.remove(ckpt_path)
    return out_path


def _flush(f, buffer: list[bytes]) -> None:
    if buffer:
        f.write(b"".join(buffer))
        f.flush()
        os.fsync(f.fileno())


# ---------------------------------------------------------------------------
# Stage: forward training bundle
# ---------------------------------------------------------------------------


def run_forward_prep(cfg: PipelineConfig, cycles: int | None = None) -> tuple[str, str]:
    """Weighted schedule over manual/automatic/back; returns (manifest, bundle).

    With cycles unset, the schedule runs until the largest dataset is
    covered once, which upsamples the aligned sets by roughly
    size_back / (weight_back * size_aligned / weight_aligned).
    """
    _ensure_workdir(cfg)
    back_path = cfg.path("back.jsonl")
    if not os.path.exists(back_path):
        raise EmptyDataset("back")
    datasets = [
        DatasetSpec("manual", cfg.manual, cfg.weights[0]),
        DatasetSpec("automatic", cfg.automatic, cfg.weights[1]),
        DatasetSpec("back", back_path, cfg.weights[2]),
    ]
    sized = []
    for spec in datasets:
        size = count_lines(spec.path)
        if size == 0:
            raise EmptyDataset(spec.name)
        sized.append((spec.name, size, spec.weight))
    if cycles is None:
        cycles = max(math.ceil(size / weight) for _, size, weight in sized)
    manifest = interleave_schedule(sized, cfg.seed, cycles)

    manifest_path = cfg.path("forward.manifest")
    bundle_path = cfg.path("forward.bundle.json")
    atomic_write(manifest_path, lambda f: _write_manifest_to(f, manifest))
    bundle = {
        "datasets": [
            {"name": name, "path": spec.path, "weight": spec.weight, "size": size}
            for spec, (name, size, _) in zip(datasets, sized)
        ],
        "manifest": manifest_path,
        "seed": cfg.seed,
        "cycles": cycles,
    }
    atomic_write(
        bundle_path,
        lambda f: f.write(json.dumps(bundle, ensure_ascii=False, indent=2) + "\n"),
    )
    return manifest_path, bundle_path


# ---------------------------------------------------------------------------
# Stage: evaluation
# ---------------------------------------------------------------------------


def run_eval(
    predictions: Sequence[str],
    references: Sequence[str],
    sources: Sequence[str] | None = None,
    copy_metric: str = "f1",
) -> EvalReport:
    """Score aligned prediction/reference (and optional source) texts."""
    if len(predictions) != len(references):
        raise LengthMismatch(
            f"{len(predictions)} predictions vs {len(references)} references"
        )
    if sources is not None and len(sources) != len(predictions):
        raise LengthMismatch(
            f"{len(predictions)} predictions vs {len(sources)} sources"
        )

    def triples():
        for i, (pred, ref) in enumerate(zip(predictions, references)):
            src = tokenize(sources[i]) if sources is not None else None
            yield tokenize(pred), tokenize(ref), src

    return evaluate_corpus(triples(), copy_metric=copy_metric)
