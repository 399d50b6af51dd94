"""``visrag`` command line.

Exit codes: 0 ok, 2 usage/validation, 3 provider failure, 4 data mismatch.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from visrag.config import CliConfig, load_config
from visrag.documents import DocumentBundle, find_bundles, parse_bundle
from visrag.errors import (
    BundleError,
    CorpusMismatchError,
    DimensionMismatchError,
    EmptyRunError,
    IndexFormatError,
    IndexIOError,
    ProviderUnavailableError,
    UnknownSchemeError,
    VisragError,
)
from visrag.evaluation import (
    EvalRun,
    improvements_vs,
    load_queries,
    load_score_table,
    render_report,
    run_eval,
    run_from_jsonl,
    run_to_jsonl,
    summarize,
)
from visrag.fixtures import write_fixture
from visrag.index import (
    VectorIndex,
    build_index,
    corpus_digest,
    deduplicate_diversify,
    describe_build,
    load_index,
    persist_index,
    search,
)
from visrag.scoring import format_score, rerank

log = logging.getLogger("visrag")

EXIT_OK, EXIT_USAGE, EXIT_PROVIDER, EXIT_MISMATCH = 0, 2, 3, 4
LOCK_NAME = "corpus.lock.json"


class CommandError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def _load_corpus(corpus_dir: str | Path) -> list[DocumentBundle]:
    paths = find_bundles(corpus_dir)
    if not paths:
        raise CommandError(f"no bundles found in {corpus_dir}")
    bundles, problems = [], []
    for p in paths:
        try:
            bundles.append(parse_bundle(p))
        except BundleError as exc:
            problems.append(f"{p.name}: {type(exc).__name__}: {exc}")
    if problems:
        raise CommandError("invalid bundles:\n  " + "\n  ".join(problems))
    ids = [b.doc_id for b in bundles]
    if len(set(ids)) != len(ids):
        raise CommandError("duplicate doc_id values in corpus")
    return bundles


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(args, cfg: CliConfig) -> int:
    bundles = _load_corpus(args.corpus)
    lock = {
        "corpus_sha256": corpus_digest(bundles),
        "bundles": [
            {
                "doc_id": b.doc_id,
                "path": b.root.name,
                "pages": len(b.pages),
                "images": [{"image_id": i.image_id, "content_hash": i.content_hash} for i in b.images],
            }
            for b in sorted(bundles, key=lambda b: b.doc_id)
        ],
    }
    out = Path(args.output) if args.output else Path(args.corpus) / LOCK_NAME
    _write_atomic(out, _dump(lock))
    images = sum(len(b.images) for b in bundles)
    print(f"{len(bundles)} bundles valid, {images} images -> {out}")
    return EXIT_OK


def _build(bundles, scheme_name: str, cfg: CliConfig, providers=None) -> VectorIndex:
    providers = providers or cfg.provider_set()
    return build_index(bundles, cfg.scheme(scheme_name), providers, cfg.window_chars, workers=cfg.workers)


def cmd_index(args, cfg: CliConfig) -> int:
    try:
        scheme = cfg.scheme(args.scheme)
    except UnknownSchemeError as exc:
        raise CommandError(str(exc)) from exc
    bundles = _load_corpus(args.corpus)
    index = _build(bundles, scheme.name, cfg)
    path = persist_index(index, args.output)
    print(f"indexed {len(index)} records with scheme {scheme.name} -> {path}")
    print(_dump({"build_config": index.build_config}), end="")
    return EXIT_OK


def _snippet(text: str, width: int = 100) -> str:
    text = " ".join(text.split())
    return text if len(text) <= width else text[: width - 3] + "..."


def cmd_query(args, cfg: CliConfig) -> int:
    question = args.question.strip()
    if not question:
        raise CommandError("question must be non-empty")
    index = load_index(args.index)
    scheme = index.scheme or cfg.scheme(index.scheme_name)
    providers = cfg.provider_set()
    if providers.text_embed.dim != index.dim:
        raise CommandError(
            f"index dim {index.dim} does not match text embedder dim {providers.text_embed.dim}", EXIT_MISMATCH
        )
    k = args.k or cfg.k
    qvec = providers.text_embed.embed_text(question)
    coarse = search(index, qvec, k) if len(index) else []
    ranked = rerank(question, qvec, deduplicate_diversify(coarse, cfg.sim_threshold, cfg.max_per_doc), scheme, providers)

    if args.json:
        rows = [
            {
                "rank": i,
                "record_id": s.record.record_id,
                "score01": s.hybrid.value01,
                "score100": format_score(s.hybrid.value01),
                "cosine": s.candidate.score,
                "components": s.hybrid.components.to_json() if s.hybrid.components else {},
                "caption": s.record.caption,
                "ocr_text": s.record.ocr_text,
            }
            for i, s in enumerate(ranked, 1)
        ]
        print(json.dumps({"question": question, "scheme": scheme.name, "results": rows}, indent=2, ensure_ascii=False))
        return EXIT_OK
    if not ranked:
        print("no results")
        return EXIT_OK
    for i, s in enumerate(ranked, 1):
        comps = s.hybrid.components.to_json() if s.hybrid.components else {}
        parts = " ".join(f"{name}={value:.4f}" for name, value in comps.items())
        print(f"{i}. {s.record.record_id}  score {format_score(s.hybrid.value01)}  [{parts}]")
        if s.record.caption:
            print(f"   caption: {_snippet(s.record.caption)}")
        if s.record.ocr_text:
            print(f"   ocr: {_snippet(s.record.ocr_text)}")
    return EXIT_OK


def _write_eval_outputs(out: Path, runs: list[EvalRun], baseline: str) -> str:
    summaries = [summarize(r) for r in runs]
    gains = improvements_vs(summaries, baseline)
    for run in runs:
        _write_atomic(out / "runs" / f"{run.method}.jsonl", run_to_jsonl(run))
    meta = {
        "methods": [r.method for r in runs],
        "baseline": baseline,
        "summaries": [s.__dict__ for s in summaries],
        "improvements": [g.__dict__ for g in gains],
        "configs": {r.method: r.config for r in runs},
    }
    _write_atomic(out / "summaries.json", _dump(meta))
    report_md = render_report(runs, summaries, gains, "md")
    _write_atomic(out / "report.md", report_md)
    _write_atomic(out / "report.csv", render_report(runs, summaries, gains, "csv"))
    return report_md


def cmd_eval(args, cfg: CliConfig) -> int:
    out = Path(args.output)
    if args.from_scores:
        if not Path(args.from_scores).is_file():
            raise CommandError(f"score table not found: {args.from_scores}")
        _, runs = load_score_table(args.from_scores)
        if args.methods:
            wanted = args.methods.split(",")
            missing = [m for m in wanted if m not in {r.method for r in runs}]
            if missing:
                raise CommandError(f"methods not in score table: {missing}")
            runs = [r for r in runs if r.method in wanted]
        baseline = args.baseline or runs[0].method
        print(_write_eval_outputs(out, runs, baseline), end="")
        return EXIT_OK

    if not args.corpus:
        raise CommandError("a corpus directory is required unless --from-scores is given")
    if not args.queries or not Path(args.queries).is_file():
        raise CommandError(f"queries file not found: {args.queries}")
    queries = load_queries(args.queries)
    methods = args.methods.split(",") if args.methods else list(cfg.schemes)
    try:
        schemes = {m: cfg.scheme(m) for m in methods}
    except UnknownSchemeError as exc:
        raise CommandError(str(exc)) from exc
    bundles = _load_corpus(args.corpus)
    providers = cfg.provider_set()

    indexes = {}
    for method, scheme in schemes.items():
        path = out / "indexes" / f"{method}.jsonl"
        expected = json.loads(json.dumps(describe_build(bundles, scheme, providers, cfg.window_chars)))
        cached = None
        if path.is_file():
            try:
                cached = load_index(path)
            except (IndexFormatError, IndexIOError):
                cached = None
        if cached is not None and cached.build_config == expected:
            log.info("reusing cached index %s", path)
            indexes[method] = cached
        else:
            indexes[method] = _build(bundles, method, cfg, providers)
            persist_index(indexes[method], path)

    runs = run_eval(
        indexes, queries, providers, cfg.k, cfg.sim_threshold, cfg.max_per_doc, schemes=cfg.custom_schemes
    )
    baseline = args.baseline or ("text_only" if "text_only" in methods else methods[0])
    print(_write_eval_outputs(out, runs, baseline), end="")
    return EXIT_OK


def cmd_report(args, cfg: CliConfig) -> int:
    run_dir = Path(args.run_dir)
    meta_path = run_dir / "summaries.json"
    meta = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.is_file() else {}
    if meta.get("methods"):
        files = [run_dir / "runs" / f"{m}.jsonl" for m in meta["methods"]]
    else:
        files = sorted((run_dir / "runs").glob("*.jsonl"))
    runs = [run_from_jsonl(f.read_text(encoding="utf-8"), f.stem) for f in files if f.is_file()]
    runs = [r for r in runs if r.rows]
    if not runs:
        raise EmptyRunError(f"no run rows under {run_dir}")
    summaries = [summarize(r) for r in runs]
    baseline = meta.get("baseline") or runs[0].method
    text = render_report(runs, summaries, improvements_vs(summaries, baseline), args.format)
    if args.output:
        _write_atomic(Path(args.output), text)
    print(text, end="")
    return EXIT_OK


def cmd_fixture(args, cfg: CliConfig) -> int:
    out = write_fixture(args.output, dim=args.dim)
    print(f"fixture written to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (default: $VISRAG_CONFIG)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="visrag", description="Multimodal document-image retrieval and evaluation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="validate bundles and write corpus.lock.json")
    p.add_argument("corpus")
    p.add_argument("-o", "--output", help="lock file path (default: <corpus>/corpus.lock.json)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("index", parents=[common], help="build and persist an index for one scheme")
    p.add_argument("corpus")
    p.add_argument("--scheme", default="full")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("query", parents=[common], help="search an index")
    p.add_argument("index")
    p.add_argument("question")
    p.add_argument("-k", type=int, default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval", parents=[common], help="run a query set against one index per method")
    p.add_argument("corpus", nargs="?")
    p.add_argument("--queries")
    p.add_argument("--methods", help="comma-separated scheme names")
    p.add_argument("--baseline", help="method the improvements are measured against")
    p.add_argument("-o", "--output", default="eval-out")
    p.add_argument("--from-scores", help="CSV of per-question scores (qid,question,<method>...)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", parents=[common], help="render a report from a run directory")
    p.add_argument("run_dir")
    p.add_argument("--format", choices=["md", "csv"], default="md")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("fixture", parents=[common], help="write the synthetic demo corpus")
    p.add_argument("output")
    p.add_argument("--dim", type=int, default=512)
    p.set_defaults(func=cmd_fixture)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ProviderUnavailableError as exc:
        print(f"provider failure: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except (DimensionMismatchError, CorpusMismatchError, IndexFormatError) as exc:
        print(f"data mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (VisragError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
