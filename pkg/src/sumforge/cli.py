"""Single `sumforge` binary exposing every operation as a subcommand.

Machine output is JSON (`--format json`, the default where ambiguous);
every subcommand that draws randomness takes `--seed`. Invoked as
`sumforge decode --backend ... --in {in} --out {out}`, the binary is
itself a conforming external backend.
"""

from __future__ import annotations

import argparse
import json
import sys
from contextlib import nullcontext

from . import __version__
from .backends import BackendSpec, build_backend
from .corpus import (
    DatasetSpec,
    read_jsonl,
    read_reports,
    save_manifest,
    stats,
    weighted_interleave,
)
from .decoding import DecodeConfig
from .errors import SumforgeError
from .metrics import COPY_METRICS
from .noise import NoiseConfig, make_denoising_pair
from .pipeline import (
    load_candidates,
    load_config,
    run_backward_prep,
    run_eval,
    run_forward_prep,
    run_selfsup_prep,
    run_synthesis,
    select_backward_model,
)
from .tokenizer import (
    Document,
    bpe_apply,
    bpe_decode,
    bpe_learn,
    iter_corpus_documents,
    load_bpe_model,
    save_bpe_model,
)
from .toy import gen_toy_corpus

DEFAULT_BPE_MERGES = 16000


def _open_in(path: str):
    # std streams are borrowed, never closed
    if path == "-":
        return nullcontext(sys.stdin)
    return open(path, encoding="utf-8")


def _open_out(path: str | None):
    if path is None or path == "-":
        return nullcontext(sys.stdout)
    return open(path, "w", encoding="utf-8")


def parse_backend_arg(text: str, seed: int = 0) -> BackendSpec:
    """Parse `kind` or `kind:key=val,key=val` into a BackendSpec."""
    kind, _, rest = text.partition(":")
    params: dict[str, object] = {}
    if rest:
        for item in rest.split(","):
            key, sep, val = item.partition("=")
            if not sep:
                raise ValueError(f"bad backend parameter {item!r} (expected key=val)")
            params[key.strip()] = _coerce(val.strip())
    return BackendSpec(kind=kind.strip(), parameters=params, seed=seed)


def _coerce(val: str) -> object:
    low = val.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(val)
    except ValueError:
        pass
    try:
        return float(val)
    except ValueError:
        pass
    return val


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_tokenize(args) -> int:
    with _open_in(args.infile) as f:
        text = f.read()
    doc = Document.from_text(text)
    with _open_out(args.out) as out:
        if args.format == "json":
            out.write(
                json.dumps(
                    {"sentences": [list(s) for s in doc.sentences]},
                    ensure_ascii=False,
                )
                + "\n"
            )
        else:
            for sent in doc.sentences:
                out.write(" ".join(sent) + "\n")
    return 0


def _cmd_bpe_learn(args) -> int:
    with _open_in(args.infile) as f:
        model = bpe_learn(iter_corpus_documents(f), args.merges, marker=args.marker)
    save_bpe_model(model, args.out)
    print(f"learned {len(model.merges)} merges -> {args.out}", file=sys.stderr)
    return 0


def _cmd_bpe_apply(args) -> int:
    model = load_bpe_model(args.model)
    with _open_in(args.infile) as f, _open_out(args.out) as out:
        for line in f:
            tokens = line.split()
            out.write(" ".join(bpe_apply(tokens, model)) + "\n")
    return 0


def _cmd_bpe_decode(args) -> int:
    model = load_bpe_model(args.model)
    with _open_in(args.infile) as f, _open_out(args.out) as out:
        for line in f:
            pieces = line.split()
            out.write(" ".join(bpe_decode(pieces, model)) + "\n")
    return 0


def _cmd_noise(args) -> int:
    cfg = NoiseConfig(
        infill_p=args.p,
        span_lambda=args.span_lambda,
        permute_sentences=args.permute,
        mask_token=args.mask_token,
        seed=args.seed,
    )
    bpe = load_bpe_model(args.bpe_model) if args.bpe_model else None
    with _open_out(args.out) as out:
        for i, text in enumerate(read_reports(args.infile)):
            doc = Document.from_text(text)
            if bpe is not None:
                # subword-level noising: mask after BPE segmentation
                doc = Document.from_sentences(
                    bpe_apply(sent, bpe) for sent in doc.sentences
                )
            pair = make_denoising_pair(doc, cfg, i)
            record = {
                "src": pair.noisy.text(),
                "tgt": pair.clean.text(),
                "origin": "selfsup",
            }
            out.write(json.dumps(record, ensure_ascii=False) + "\n")
    return 0


def _cmd_stats(args) -> int:
    result = stats(
        read_jsonl(args.infile),
        sample_cap=args.sample,
        seed=args.seed,
        copy_metric=args.copy_metric,
    )
    if args.format == "table":
        d = result.to_dict()
        print(f"pairs        {d['n_pairs']}")
        print(f"src tokens   {d['src_mean']:.2f} [{d['src_d1']}, {d['src_d9']}]")
        print(f"tgt tokens   {d['tgt_mean']:.2f} [{d['tgt_d1']}, {d['tgt_d9']}]")
        print(f"extractivity {d['extractivity']:.2f}")
    else:
        print(json.dumps(result.to_dict(), ensure_ascii=False))
    return 0


def _cmd_interleave(args) -> int:
    if sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    with open(args.spec, "rb") as f:
        raw = tomllib.load(f)
    specs = [
        DatasetSpec(name=d["name"], path=d["path"], weight=int(d["weight"]))
        for d in raw.get("dataset", [])
    ]
    if not specs:
        raise SumforgeError(f"no [[dataset]] entries in {args.spec}")
    manifest = weighted_interleave(specs, seed=args.seed, cycles=args.cycles)
    if args.out:
        save_manifest(manifest, args.out)
    else:
        sys.stdout.write(f"#sumforge-manifest v1 seed={manifest.seed}\n")
        for name, idx in manifest.entries:
            sys.stdout.write(f"{name}\t{idx}\n")
    return 0


def _read_lines(path: str) -> list[str]:
    with open(path, encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f]


def _cmd_score(args) -> int:
    preds = _read_lines(args.pred)
    refs = _read_lines(args.ref)
    srcs = _read_lines(args.src) if args.src else None
    report = run_eval(preds, refs, srcs, copy_metric=args.copy_metric)
    if args.format == "table":
        line = f"R1 / R2 / RL: {report.render_rouge()}"
        if report.copy_pct is not None:
            line += f"   copy%: {report.render_copy()}"
        print(line)
    else:
        print(json.dumps(report.to_dict(), ensure_ascii=False))
    return 0


def _cmd_decode(args) -> int:
    decode_cfg = DecodeConfig(
        beam_size=args.beam,
        max_len=args.max_len,
        block_trigrams=args.block_trigrams,
        length_normalization_alpha=args.alpha,
    )
    spec = parse_backend_arg(args.backend, seed=args.seed)
    backend = build_backend(spec, decode_cfg)

    items: list[tuple[int, str]] = []
    with _open_in(args.infile) as f:
        for line_no, line in enumerate(f):
            obj = json.loads(line)
            if "src" in obj:
                items.append((int(obj.get("id", line_no)), obj["src"]))
            elif "text" in obj:
                items.append((line_no, obj["text"]))
            else:
                raise SumforgeError(
                    f"decode input line {line_no + 1} has neither 'src' nor 'text'"
                )
    preds = backend.summarize_batch([s for _, s in items], jobs=args.jobs)
    with _open_out(args.out) as out:
        for (item_id, _), pred in zip(items, preds):
            out.write(json.dumps({"id": item_id, "pred": pred}, ensure_ascii=False) + "\n")
    return 0


def _cmd_gen_toy(args) -> int:
    paths = gen_toy_corpus(args.pairs, args.seed, args.out)
    for name, path in paths.items():
        print(f"{name}\t{path}")
    return 0


def _cmd_pipeline(args) -> int:
    stage = args.stage
    if stage == "select":
        candidates = load_candidates(args.candidates)
        result = select_backward_model(
            candidates, ref_copy_pct=args.ref_copy, copy_margin=args.margin
        )
        print(
            json.dumps(
                {
                    "name": result.model.name,
                    "valid_rouge1_f": result.model.valid_rouge1_f,
                    "valid_copy_pct": result.model.valid_copy_pct,
                    "degraded": result.degraded,
                },
                ensure_ascii=False,
            )
        )
        return 2 if result.degraded else 0

    cfg = load_config(args.config)
    if stage == "selfsup":
        pairs_path, manifest_path = run_selfsup_prep(cfg)
        print(f"pairs\t{pairs_path}")
        print(f"manifest\t{manifest_path}")
    elif stage == "backward":
        out = run_backward_prep(cfg)
        print(f"backward\t{out}")
    elif stage == "synth":
        out = run_synthesis(cfg, flush_every=args.flush_every)
        print(f"back\t{out}")
    elif stage == "forward":
        manifest_path, bundle_path = run_forward_prep(cfg, cycles=args.cycles)
        print(f"manifest\t{manifest_path}")
        print(f"bundle\t{bundle_path}")
    elif stage == "eval":
        preds = _read_lines(args.pred)
        refs = _read_lines(args.ref)
        srcs = _read_lines(args.src) if args.src else None
        report = run_eval(preds, refs, srcs, copy_metric=args.copy_metric)
        print(json.dumps(report.to_dict(), ensure_ascii=False))
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sumforge",
        description="Corpus tooling for semi-supervised meeting summarization.",
    )
    parser.add_argument("--version", action="version", version=f"sumforge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tokenize", help="sentence-split and tokenize raw text")
    p.add_argument("--in", dest="infile", default="-", help="input text file or -")
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(fn=_cmd_tokenize)

    p = sub.add_parser("bpe-learn", help="learn BPE merges from plain text")
    p.add_argument("--merges", type=int, default=DEFAULT_BPE_MERGES)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--marker", default="@@")
    p.set_defaults(fn=_cmd_bpe_learn)

    p = sub.add_parser("bpe-apply", help="split whitespace tokens into subwords")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="infile", default="-")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_bpe_apply)

    p = sub.add_parser("bpe-decode", help="rejoin subword pieces into tokens")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="infile", default="-")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_bpe_decode)

    p = sub.add_parser("noise", help="build denoising pairs from reports")
    p.add_argument("--in", dest="infile", required=True, help="reports JSONL")
    p.add_argument("--out", default=None)
    p.add_argument("--p", type=float, default=0.3, help="mask budget fraction")
    p.add_argument("--lambda", dest="span_lambda", type=float, default=3.0,
                   help="Poisson mean span length")
    p.add_argument("--permute", action=argparse.BooleanOptionalAction, default=True,
                   help="shuffle sentence order")
    p.add_argument("--mask-token", default="<mask>")
    p.add_argument("--bpe-model", default=None,
                   help="noise at the subword level using this model")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_noise)

    p = sub.add_parser("stats", help="corpus statistics (lengths, extractivity)")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--sample", type=int, default=10000,
                   help="extractivity sample cap")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--copy-metric", choices=COPY_METRICS, default="f1")
    p.add_argument("--format", choices=("json", "table"), default="json")
    p.set_defaults(fn=_cmd_stats)

    p = sub.add_parser("interleave", help="weighted training schedule")
    p.add_argument("--spec", required=True, help="TOML with [[dataset]] entries")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cycles", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_interleave)

    p = sub.add_parser("score", help="ROUGE-1/2/L and copy%% of predictions")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--src", default=None)
    p.add_argument("--copy-metric", choices=COPY_METRICS, default="f1")
    p.add_argument("--format", choices=("json", "table"), default="json")
    p.set_defaults(fn=_cmd_score)

    p = sub.add_parser("decode", help="batch summarize with a backend")
    p.add_argument("--backend", required=True,
                   help="kind[:key=val,...], e.g. lead_k:k=2")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--max-len", type=int, default=600)
    p.add_argument("--block-trigrams", action=argparse.BooleanOptionalAction,
                   default=True)
    p.add_argument("--alpha", type=float, default=0.0,
                   help="length normalization exponent")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(fn=_cmd_decode)

    p = sub.add_parser("gen-toy", help="write a deterministic toy corpus")
    p.add_argument("--pairs", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_gen_toy)

    p = sub.add_parser("pipeline", help="run one pipeline stage")
    stage_sub = p.add_subparsers(dest="stage", required=True)
    for stage in ("selfsup", "backward", "synth", "forward", "eval", "select"):
        sp = stage_sub.add_parser(stage)
        if stage != "select":
            sp.add_argument("--config", required=True)
        if stage == "synth":
            sp.add_argument("--flush-every", type=int, default=50)
        if stage == "forward":
            sp.add_argument("--cycles", type=int, default=None)
        if stage == "eval":
            sp.add_argument("--pred", required=True)
            sp.add_argument("--ref", required=True)
            sp.add_argument("--src", default=None)
            sp.add_argument("--copy-metric", choices=COPY_METRICS, default="f1")
        if stage == "select":
            sp.add_argument("--candidates", required=True)
            sp.add_argument("--ref-copy", type=float, required=True)
            sp.add_argument("--margin", type=float, default=0.0)
        sp.set_defaults(fn=_cmd_pipeline)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse uses exit code 2 for usage errors; 2 is reserved for
        # degraded pipeline outcomes here
        return 0 if e.code == 0 else 1
    try:
        return args.fn(args)
    except SumforgeError as e:
        print(f"sumforge: error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"sumforge: error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    except (ValueError, KeyError) as e:
        print(f"sumforge: error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
