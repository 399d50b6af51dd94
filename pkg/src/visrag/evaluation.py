"""Evaluation harness: per-method query runs, summary statistics, improvement report."""

from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from visrag.errors import CorpusMismatchError, EmptyRunError, SchemaError, UnknownFormatError, ZeroBaselineError
from visrag.fusion import WeightScheme, get_scheme
from visrag.index import (
    DEFAULT_K,
    DEFAULT_MAX_PER_DOC,
    DEFAULT_SIM_THRESHOLD,
    VectorIndex,
    deduplicate_diversify,
    search,
)
from visrag.providers.base import ProviderSet
from visrag.scoring import ComponentScores, HybridScore, rerank, round_half_even

# Sample (n-1) standard deviation reproduces the published per-method std rows;
# population std lands ~0.0014 low on the text-only column.
STD_CONVENTION = "sample"


@dataclass(frozen=True)
class EvalQuery:
    qid: str
    question: str


@dataclass(frozen=True)
class EvalRow:
    qid: str
    score: HybridScore
    top_record: str | None = None

    @property
    def score01(self) -> float:
        return self.score.value01


@dataclass
class EvalRun:
    method: str
    rows: list[EvalRow]
    config: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class EvalSummary:
    method: str
    avg: float
    median: float
    std: float
    count: int


@dataclass(frozen=True)
class ImprovementReport:
    baseline_method: str
    variant_method: str
    baseline_avg: float
    variant_avg: float
    improvement_pct: float

    def display(self) -> str:
        return f"{round_half_even(self.improvement_pct, 1)}%"


# ---------------------------------------------------------------------------
# queries and run files


def load_queries(path: str | Path) -> list[EvalQuery]:
    queries: list[EvalQuery] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                qid, question = obj["qid"], obj["question"]
            except (ValueError, KeyError, TypeError) as exc:
                raise SchemaError(f"{path}:{lineno}: expected {{'qid', 'question'}} ({exc})") from exc
            if not isinstance(qid, str) or not isinstance(question, str) or not question.strip():
                raise SchemaError(f"{path}:{lineno}: qid and question must be non-empty strings")
            if qid in seen:
                raise SchemaError(f"{path}:{lineno}: duplicate qid {qid!r}")
            seen.add(qid)
            queries.append(EvalQuery(qid, question))
    return queries


def run_to_jsonl(run: EvalRun) -> str:
    lines = []
    for row in sorted(run.rows, key=lambda r: r.qid):
        comps = row.score.components.to_json() if row.score.components else {}
        lines.append(
            json.dumps(
                {"qid": row.qid, "method": run.method, "score01": row.score01, "components": comps},
                sort_keys=True,
            )
        )
    return "".join(line + "\n" for line in lines)


def run_from_jsonl(text: str, method: str | None = None) -> EvalRun:
    rows = []
    for line in text.splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        method = method or obj["method"]
        comps = ComponentScores.from_json(obj["components"]) if obj.get("components") else None
        rows.append(EvalRow(obj["qid"], HybridScore(float(obj["score01"]), obj["method"], comps)))
    if method is None:
        raise EmptyRunError("run file has no rows")
    return EvalRun(method, rows)


def load_score_table(path: str | Path) -> tuple[list[EvalQuery], list[EvalRun]]:
    """Read a per-question score table (``qid,question,<method>,<method>...``) as runs."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or reader.fieldnames[:2] != ["qid", "question"]:
            raise SchemaError(f"{path}: header must start with qid,question")
        methods = reader.fieldnames[2:]
        if not methods:
            raise SchemaError(f"{path}: no method columns")
        queries, runs = [], {m: [] for m in methods}
        for row in reader:
            queries.append(EvalQuery(row["qid"], row["question"]))
            for m in methods:
                runs[m].append(EvalRow(row["qid"], HybridScore(float(row[m]), m)))
    return queries, [EvalRun(m, rows, {"source": Path(path).name}) for m, rows in runs.items()]


# ---------------------------------------------------------------------------
# running


def run_eval(
    index_set: Mapping[str, VectorIndex],
    queries: Sequence[EvalQuery],
    providers: ProviderSet,
    k: int = DEFAULT_K,
    sim_threshold: float = DEFAULT_SIM_THRESHOLD,
    max_per_doc: int = DEFAULT_MAX_PER_DOC,
    schemes: Mapping[str, WeightScheme] | None = None,
) -> list[EvalRun]:
    """For each method and query: embed, search top-k, dedup/diversify, rerank, keep the top-1 score.

    ``index_set`` maps method (scheme) names to indexes over one corpus.
    """
    fingerprints = {m: idx.corpus_fingerprint() for m, idx in index_set.items()}
    if len({json.dumps(fp) for fp in fingerprints.values()}) > 1:
        raise CorpusMismatchError("indexes were built over different corpora")

    query_vecs: dict[str, Any] = {}
    runs = []
    for method, index in index_set.items():
        scheme = index.scheme or get_scheme(method, schemes)
        rows = []
        for q in sorted(queries, key=lambda q: q.qid):
            if q.qid not in query_vecs:
                query_vecs[q.qid] = providers.text_embed.embed_text(q.question)
            qvec = query_vecs[q.qid]
            coarse = search(index, qvec, k) if len(index) else []
            pool = deduplicate_diversify(coarse, sim_threshold, max_per_doc)
            ranked = rerank(q.question, qvec, pool, scheme, providers)
            if ranked:
                rows.append(EvalRow(q.qid, ranked[0].hybrid, ranked[0].record.record_id))
            else:
                rows.append(EvalRow(q.qid, HybridScore(0.0, scheme.name)))
        config = {
            "k": k,
            "sim_threshold": sim_threshold,
            "max_per_doc": max_per_doc,
            "std_convention": STD_CONVENTION,
            "scheme": scheme.to_json(),
            "index_build": index.build_config,
        }
        runs.append(EvalRun(method, rows, config))
    return runs


def summarize(run: EvalRun) -> EvalSummary:
    if not run.rows:
        raise EmptyRunError(f"run {run.method!r} has no rows")
    values = [r.score01 for r in sorted(run.rows, key=lambda r: r.qid)]
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return EvalSummary(run.method, statistics.fmean(values), statistics.median(values), std, len(values))


def improvement(baseline: EvalSummary, variant: EvalSummary) -> ImprovementReport:
    if baseline.avg <= 0:
        raise ZeroBaselineError(f"baseline {baseline.method!r} average is {baseline.avg}")
    pct = 100.0 * (variant.avg - baseline.avg) / baseline.avg
    return ImprovementReport(baseline.method, variant.method, baseline.avg, variant.avg, pct)


# ---------------------------------------------------------------------------
# reports

REPORT_FORMATS = ("md", "csv")
CSV_FIELDS = ["method", "count", "avg", "median", "std", "baseline", "improvement_pct"]


def render_report(
    runs: Sequence[EvalRun],
    summaries: Sequence[EvalSummary],
    improvements: Sequence[ImprovementReport],
    fmt: str = "md",
) -> str:
    """Method table (avg / median / std) plus improvement lines; deterministic for fixed input."""
    if fmt not in REPORT_FORMATS:
        raise UnknownFormatError(f"unknown report format {fmt!r}; use one of {REPORT_FORMATS}")
    if not runs or not summaries:
        raise EmptyRunError("nothing to report")
    run_methods = [r.method for r in runs]
    if [s.method for s in summaries] != run_methods:
        raise ValueError("summaries do not line up with runs")

    if fmt == "csv":
        gain = {imp.variant_method: imp for imp in improvements}
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for s in summaries:
            imp = gain.get(s.method)
            writer.writerow(
                [s.method, s.count, repr(s.avg), repr(s.median), repr(s.std),
                 imp.baseline_method if imp else "", repr(imp.improvement_pct) if imp else ""]
            )
        return buf.getvalue()

    out = ["# Evaluation report", "", "| method | n | avg | median | std |", "|---|---:|---:|---:|---:|"]
    for s in summaries:
        out.append(
            f"| {s.method} | {s.count} | {round_half_even(s.avg, 4)} | "
            f"{round_half_even(s.median, 4)} | {round_half_even(s.std, 4)} |"
        )
    if improvements:
        out += ["", "## Improvement over baseline", ""]
        for imp in improvements:
            out.append(
                f"- {imp.variant_method} vs {imp.baseline_method}: "
                f"{round_half_even(imp.baseline_avg, 4)} -> {round_half_even(imp.variant_avg, 4)} ({imp.display()})"
            )
    out += [
        "",
        "Notes: scores are top-1 hybrid scores on the 0-1 scale with no further normalization; "
        f"std is the {STD_CONVENTION} standard deviation (n-1).",
        "",
    ]
    return "\n".join(out)


def parse_report_csv(text: str) -> list[EvalSummary]:
    reader = csv.DictReader(io.StringIO(text))
    return [
        EvalSummary(row["method"], float(row["avg"]), float(row["median"]), float(row["std"]), int(row["count"]))
        for row in reader
    ]


def improvements_vs(summaries: Sequence[EvalSummary], baseline: str) -> list[ImprovementReport]:
    by_method = {s.method: s for s in summaries}
    if baseline not in by_method:
        return []
    return [improvement(by_method[baseline], s) for s in summaries if s.method != baseline]
