import json
import statistics

import pytest

from visrag.documents import DocumentBundle, Page, find_bundles, parse_bundle
from visrag.errors import CorpusMismatchError, EmptyRunError, SchemaError, UnknownFormatError, ZeroBaselineError
from visrag.evaluation import (
    EvalRow,
    EvalRun,
    EvalSummary,
    improvement,
    improvements_vs,
    load_queries,
    load_score_table,
    parse_report_csv,
    render_report,
    run_eval,
    run_from_jsonl,
    run_to_jsonl,
    summarize,
)
from visrag.fixtures import QUESTIONS, SCORE_METHODS, PUBLISHED_SCORES, VISUAL_ANSWER_QIDS
from visrag.fusion import PRESETS
from visrag.index import build_index
from visrag.providers import mock_provider_set
from visrag.scoring import ComponentScores, HybridScore


def _run(method, values):
    return EvalRun(method, [EvalRow(f"q{i:02d}", HybridScore(v, method)) for i, v in enumerate(values, 1)])


@pytest.fixture(scope="module")
def fixture_eval(fixture_dir):
    providers = mock_provider_set(calibration=str(fixture_dir / "calibration.json"))
    bundles = [parse_bundle(p) for p in find_bundles(fixture_dir / "corpus")]
    indexes = {m: build_index(bundles, PRESETS[m], providers) for m in ("text_only", "text_image", "full")}
    queries = load_queries(fixture_dir / "queries.jsonl")
    return indexes, queries, providers


def test_load_queries(fixture_dir, tmp_path):
    queries = load_queries(fixture_dir / "queries.jsonl")
    assert [(q.qid, q.question) for q in queries] == QUESTIONS
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"qid": "a", "question": "x"}\n{"qid": "a", "question": "y"}\n')
    with pytest.raises(SchemaError):
        load_queries(bad)
    bad.write_text('{"qid": "a"}\n')
    with pytest.raises(SchemaError):
        load_queries(bad)


def test_summarize_single_row():
    assert summarize(_run("m", [0.3])) == EvalSummary("m", 0.3, 0.3, 0.0, 1)


def test_summarize_empty():
    with pytest.raises(EmptyRunError):
        summarize(EvalRun("m", []))


def test_summarize_uses_sample_std():
    values = [0.1, 0.2, 0.4]
    s = summarize(_run("m", values))
    assert s.std == pytest.approx(statistics.stdev(values))


def test_improvement():
    base = EvalSummary("a", 0.2387, 0, 0, 19)
    assert improvement(base, EvalSummary("b", 0.3754, 0, 0, 19)).display() == "57.3%"
    assert improvement(base, EvalSummary("b", 0.2511, 0, 0, 19)).display() == "5.2%"
    assert improvement(base, EvalSummary("b", 0.3572, 0, 0, 19)).display() == "49.6%"
    assert improvement(base, base).improvement_pct == 0.0
    with pytest.raises(ZeroBaselineError):
        improvement(EvalSummary("z", 0.0, 0, 0, 1), base)


def test_run_jsonl_round_trip():
    run = EvalRun("full", [
        EvalRow("q2", HybridScore(0.5, "full", ComponentScores(0.1, 0.2, 0.3, 0.4))),
        EvalRow("q1", HybridScore(0.25, "full", ComponentScores(0.5, 0.0, 0.0, 0.0))),
    ])
    text = run_to_jsonl(run)
    assert [json.loads(line)["qid"] for line in text.splitlines()] == ["q1", "q2"]
    back = run_from_jsonl(text)
    assert back.method == "full"
    assert sorted((r.qid, r.score01, r.score.components) for r in back.rows) == sorted(
        (r.qid, r.score01, r.score.components) for r in run.rows
    )


def test_score_table(fixture_dir):
    queries, runs = load_score_table(fixture_dir / "published_scores.csv")
    assert len(queries) == 19 and [r.method for r in runs] == SCORE_METHODS
    # the text-only run carries the first published column row for row
    assert [r.score01 for r in runs[0].rows] == [row[0] for row in PUBLISHED_SCORES]


def test_run_eval_on_fixture(fixture_eval):
    indexes, queries, providers = fixture_eval
    runs = run_eval(indexes, queries, providers)
    assert [r.method for r in runs] == list(indexes)
    assert all(len(r.rows) == 19 for r in runs)
    by = {r.method: {row.qid: row.score01 for row in r.rows} for r in runs}
    for qid in VISUAL_ANSWER_QIDS:
        assert by["full"][qid] >= by["text_only"][qid]
    assert runs[0].config["k"] == 10 and runs[0].config["std_convention"] == "sample"
    again = run_eval(indexes, queries, providers)
    assert [run_to_jsonl(r) for r in runs] == [run_to_jsonl(r) for r in again]


def test_run_eval_empty_queries(fixture_eval):
    indexes, _, providers = fixture_eval
    assert all(r.rows == [] for r in run_eval(indexes, [], providers))


def test_run_eval_corpus_mismatch(fixture_eval, fixture_dir):
    indexes, queries, providers = fixture_eval
    bundles = [parse_bundle(p) for p in find_bundles(fixture_dir / "corpus")][:2]
    other = build_index(bundles, PRESETS["text_only"], providers)
    with pytest.raises(CorpusMismatchError):
        run_eval({"full": indexes["full"], "text_only": other}, queries, providers)


def test_run_eval_empty_index_scores_zero(fixture_eval):
    _, queries, providers = fixture_eval
    empty = build_index([DocumentBundle("e", "u", (Page(1),))], PRESETS["full"], providers)
    (run,) = run_eval({"full": empty}, queries[:2], providers)
    assert [r.score01 for r in run.rows] == [0.0, 0.0]


def test_report_markdown_lists_published_averages():
    averages = {"text_only": 0.2387, "text_image": 0.2511, "caption_blip": 0.3040, "caption_vit_gpt2": 0.2546,
                "caption_sonnet": 0.3572, "ocr_tesseract": 0.3731, "ocr_sonnet": 0.3754}
    runs = [_run(m, [v]) for m, v in averages.items()]
    summaries = [summarize(r) for r in runs]
    md = render_report(runs, summaries, improvements_vs(summaries, "text_only"), "md")
    for method, avg in averages.items():
        assert f"| {method} | 1 | {avg:.4f} |" in md
    assert "ocr_sonnet vs text_only: 0.2387 -> 0.3754 (57.3%)" in md


def test_report_csv_round_trip():
    runs = [_run("a", [0.1, 0.2]), _run("b", [0.3, 0.5])]
    summaries = [summarize(r) for r in runs]
    text = render_report(runs, summaries, improvements_vs(summaries, "a"), "csv")
    assert parse_report_csv(text) == summaries


def test_report_errors():
    with pytest.raises(EmptyRunError):
        render_report([], [], [], "md")
    runs = [_run("a", [0.1])]
    with pytest.raises(UnknownFormatError):
        render_report(runs, [summarize(runs[0])], [], "html")
