"""Pluggable summarizer backends.

Built-ins exist so every pipeline stage can run end-to-end at desk
scale without a trained model: `identity` and `lead_k` for smoke tests,
`noisy_clone` to fake transcription-like sources for back-summarization
plumbing, and `ngram_lm`, a small add-k-smoothed language model decoded
with the package beam search. `external` shells out to any real trainer
through a file-based JSONL protocol.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import shlex
import subprocess
import tempfile
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .corpus import AlignedPair
from .decoding import EOS, DecodeConfig, beam_search
from .errors import BackendFailure, EmptyCorpus
from .noise import NoiseConfig, make_denoising_pair
from .tokenizer import Document, split_sentences, tokenize

TIMEOUT_ENV_VAR = "SUMFORGE_BACKEND_TIMEOUT_SECS"

BOS = "<s>"

KINDS = ("identity", "lead_k", "noisy_clone", "ngram_lm", "external")

_PARAM_KEYS = {
    "identity": set(),
    "lead_k": {"k"},
    "noisy_clone": {"infill_p", "span_lambda", "permute", "mask_token"},
    "ngram_lm": {"train", "order", "smoothing"},
    "external": {"command", "workdir"},
}


@dataclass(frozen=True)
class BackendSpec:
    """Declarative backend description; parameters checked per kind."""

    kind: str
    parameters: Mapping[str, object] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown backend kind {self.kind!r}")
        unknown = set(self.parameters) - _PARAM_KEYS[self.kind]
        if unknown:
            raise ValueError(
                f"unknown parameters for {self.kind!r}: {sorted(unknown)}"
            )
        p = self.parameters
        if self.kind == "lead_k":
            k = p.get("k", 1)
            if not isinstance(k, int) or k < 1:
                raise ValueError(f"lead_k needs integer k >= 1, got {k!r}")
        elif self.kind == "ngram_lm":
            if "train" not in p:
                raise ValueError("ngram_lm needs a 'train' corpus path")
            order = p.get("order", 3)
            if not isinstance(order, int) or order < 1:
                raise ValueError(f"ngram order must be >= 1, got {order!r}")
            smoothing = p.get("smoothing", 0.01)
            if not isinstance(smoothing, (int, float)) or smoothing <= 0:
                raise ValueError(f"smoothing must be > 0, got {smoothing!r}")
        elif self.kind == "external":
            cmd = p.get("command")
            if not isinstance(cmd, str) or "{in}" not in cmd or "{out}" not in cmd:
                raise ValueError(
                    "external backend needs a 'command' template with "
                    "{in} and {out} placeholders"
                )


# ---------------------------------------------------------------------------
# N-gram language model (test fixture scorer, not a contribution)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NgramLm:
    order: int
    smoothing: float
    counts: Mapping[tuple, Mapping[str, int]]
    context_totals: Mapping[tuple, int]
    events: tuple[str, ...]  # vocabulary plus EOS, sorted


def train_ngram(
    pairs: Iterable[AlignedPair], order: int = 3, smoothing: float = 0.01
) -> NgramLm:
    """Count target-side n-grams with add-k smoothing.

    Contexts are BOS-padded; EOS closes every target. Deterministic for
    a given stream.
    """
    counts: dict[tuple, Counter] = defaultdict(Counter)
    totals: dict[tuple, int] = defaultdict(int)
    vocab: set[str] = set()
    n = 0
    for pair in pairs:
        n += 1
        toks = Document.from_text(pair.tgt).flat_tokens()
        vocab.update(toks)
        seq = toks + [EOS]
        history = [BOS] * (order - 1)
        for tok in seq:
            ctx = tuple(history[-(order - 1) :]) if order > 1 else ()
            counts[ctx][tok] += 1
            totals[ctx] += 1
            history.append(tok)
    if n == 0:
        raise EmptyCorpus("no pairs to train on")
    events = tuple(sorted(vocab | {EOS}))
    return NgramLm(
        order=order,
        smoothing=smoothing,
        counts={k: dict(v) for k, v in counts.items()},
        context_totals=dict(totals),
        events=events,
    )


class NgramScorer:
    """Scorer adapter: normalized next-token log-probabilities."""

    def __init__(self, lm: NgramLm):
        self.lm = lm

    def next_scores(
        self, source: Sequence[str], prefix: Sequence[str]
    ) -> dict[str, float]:
        lm = self.lm
        if lm.order > 1:
            history = [BOS] * (lm.order - 1) + list(prefix)
            ctx = tuple(history[-(lm.order - 1) :])
        else:
            ctx = ()
        ctx_counts = lm.counts.get(ctx, {})
        total = lm.context_totals.get(ctx, 0)
        k = lm.smoothing
        denom = total + k * len(lm.events)
        return {
            ev: math.log((ctx_counts.get(ev, 0) + k) / denom) for ev in lm.events
        }


# ---------------------------------------------------------------------------
# Backend implementations
# ---------------------------------------------------------------------------


class Backend:
    """Common surface: summarize one text or an ordered batch."""

    def summarize(self, src: str) -> str:
        raise NotImplementedError

    def summarize_batch(self, srcs: Sequence[str], jobs: int = 1) -> list[str]:
        return [self.summarize(s) for s in srcs]


class IdentityBackend(Backend):
    def summarize(self, src: str) -> str:
        return src


class LeadKBackend(Backend):
    def __init__(self, k: int):
        self.k = k

    def summarize(self, src: str) -> str:
        return " ".join(split_sentences(src)[: self.k])


class NoisyCloneBackend(Backend):
    """Degrade a report into a transcription-like source.

    Output depends only on (seed, input text), so batches are
    order-independent and resumable synthesis stays byte-stable.
    """

    def __init__(self, cfg: NoiseConfig):
        self.cfg = cfg

    def summarize(self, src: str) -> str:
        doc = Document.from_text(src)
        if doc.num_tokens == 0:
            return src
        digest = int.from_bytes(
            hashlib.sha256(src.encode("utf-8")).digest()[:8], "big"
        )
        return make_denoising_pair(doc, self.cfg, digest).noisy.text()


class NgramBackend(Backend):
    def __init__(self, lm: NgramLm, decode_cfg: DecodeConfig):
        self.scorer = NgramScorer(lm)
        self.decode_cfg = decode_cfg

    def summarize(self, src: str) -> str:
        return " ".join(beam_search(self.scorer, tokenize(src), self.decode_cfg))


class ExternalBackend(Backend):
    """File-protocol wrapper around an external command.

    The command template gets {in} and {out} substituted per batch;
    input is JSONL `{"id", "src"}`, output must be JSONL `{"id", "pred"}`
    with ids matching the input bijectively. Nonzero exit, timeout
    (SUMFORGE_BACKEND_TIMEOUT_SECS) or any id mismatch raises
    BackendFailure; misalignment never passes silently.
    """

    def __init__(self, command: str, workdir: str | None = None):
        self.command = command
        self.workdir = workdir

    def summarize(self, src: str) -> str:
        return self.summarize_batch([src])[0]

    def summarize_batch(self, srcs: Sequence[str], jobs: int = 1) -> list[str]:
        if not srcs:
            return []
        jobs = max(1, min(jobs, len(srcs)))
        if jobs == 1:
            return self._run_chunk(srcs)
        # shard across instances; one process per shard at a time
        bounds = [round(i * len(srcs) / jobs) for i in range(jobs + 1)]
        chunks = [srcs[bounds[i] : bounds[i + 1]] for i in range(jobs)]
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(self._run_chunk, chunks))
        return [pred for chunk in results for pred in chunk]

    def _run_chunk(self, srcs: Sequence[str]) -> list[str]:
        timeout = None
        raw = os.environ.get(TIMEOUT_ENV_VAR)
        if raw:
            timeout = float(raw)
        with tempfile.TemporaryDirectory(prefix="sumforge-ext-") as tmp:
            in_path = os.path.join(tmp, "in.jsonl")
            out_path = os.path.join(tmp, "out.jsonl")
            with open(in_path, "w", encoding="utf-8") as f:
                for i, src in enumerate(srcs):
                    f.write(json.dumps({"id": i, "src": src}, ensure_ascii=False) + "\n")
            argv = [
                a.format(**{"in": in_path, "out": out_path})
                for a in shlex.split(self.command)
            ]
            try:
                proc = subprocess.run(
                    argv,
                    cwd=self.workdir,
                    capture_output=True,
                    text=True,
                    timeout=timeout,
                )
            except subprocess.TimeoutExpired:
                raise BackendFailure(f"command timed out after {timeout}s")
            except OSError as e:
                raise BackendFailure(f"could not run command: {e}")
            if proc.returncode != 0:
                tail = proc.stderr.strip().splitlines()[-3:]
                raise BackendFailure(
                    f"command exited {proc.returncode}: {' | '.join(tail)}"
                )
            return self._read_preds(out_path, len(srcs))

    @staticmethod
    def _read_preds(out_path: str, n: int) -> list[str]:
        preds: dict[int, str] = {}
        try:
            f = open(out_path, encoding="utf-8")
        except OSError:
            raise BackendFailure("command produced no output file")
        with f:
            for line_no, line in enumerate(f, start=1):
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError:
                    raise BackendFailure(f"output line {line_no} is not JSON")
                if not isinstance(obj, dict) or "id" not in obj or "pred" not in obj:
                    raise BackendFailure(f"output line {line_no} missing id/pred")
                if obj["id"] in preds:
                    raise BackendFailure(f"duplicate output id {obj['id']}")
                if not isinstance(obj["pred"], str):
                    raise BackendFailure(f"output line {line_no}: pred is not a string")
                preds[obj["id"]] = obj["pred"]
        if set(preds) != set(range(n)):
            raise BackendFailure(
                f"output ids do not match input: expected 0..{n - 1}, "
                f"got {sorted(preds)[:5]}..."
            )
        return [preds[i] for i in range(n)]


def build_backend(spec: BackendSpec, decode_cfg: DecodeConfig | None = None) -> Backend:
    """Instantiate a backend from its spec; trains the n-gram LM eagerly."""
    p = spec.parameters
    if spec.kind == "identity":
        return IdentityBackend()
    if spec.kind == "lead_k":
        return LeadKBackend(int(p.get("k", 1)))
    if spec.kind == "noisy_clone":
        cfg = NoiseConfig(
            infill_p=float(p.get("infill_p", 0.3)),
            span_lambda=float(p.get("span_lambda", 3.0)),
            permute_sentences=bool(p.get("permute", True)),
            mask_token=str(p.get("mask_token", "<mask>")),
            seed=spec.seed,
        )
        return NoisyCloneBackend(cfg)
    if spec.kind == "ngram_lm":
        from .corpus import read_jsonl

        lm = train_ngram(
            read_jsonl(str(p["train"])),
            order=int(p.get("order", 3)),
            smoothing=float(p.get("smoothing", 0.01)),
        )
        return NgramBackend(lm, decode_cfg or DecodeConfig())
    if spec.kind == "external":
        workdir = p.get("workdir")
        return ExternalBackend(str(p["command"]), str(workdir) if workdir else None)
    raise ValueError(f"unknown backend kind {spec.kind!r}")


def summarize(spec: BackendSpec, src: str, decode_cfg: DecodeConfig | None = None) -> str:
    """One-shot convenience wrapper; builds the backend and runs it."""
    return build_backend(spec, decode_cfg).summarize(src)
