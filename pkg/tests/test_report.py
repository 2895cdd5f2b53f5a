import csv
import io
import json

import pytest

from scenebgm.errors import NoPairs
from scenebgm.metrics.report import (
    COLUMNS,
    EvalPair,
    EvalReport,
    dominates,
    evaluate_corpus,
    evaluate_systems,
    load_aligned_pairs,
    load_jsonl_pairs,
)

REFS = ["the music is calm and slow", "soft strings over a gentle piano", "a driving tense beat"]


def _pairs(hyps):
    return [EvalPair(str(i), h, (r,)) for i, (h, r) in enumerate(zip(hyps, REFS))]


def test_identity_row_is_all_hundreds_except_meteor():
    report = evaluate_corpus(_pairs(REFS))
    scores = report.systems["system"]
    for key in ("B1", "B2", "B3", "B4", "RL"):
        assert scores[key] == pytest.approx(100.0)
    assert 99.0 < scores["METEOR"] < 100.0


def test_no_pairs():
    with pytest.raises(NoPairs):
        evaluate_corpus([])


def test_pair_needs_references():
    with pytest.raises(ValueError):
        EvalPair("x", "h", ())


def test_bad_aggregation():
    with pytest.raises(ValueError):
        evaluate_corpus(_pairs(REFS), aggregation="median")


def test_table_columns_and_best_marks():
    report = evaluate_systems({"good": _pairs(REFS), "weak": _pairs(["calm", "piano", "beat"])})
    text = report.to_text()
    header = [c.strip() for c in text.splitlines()[0].split("|")]
    assert header == ["Model", *COLUMNS]
    good_row = next(line for line in text.splitlines() if line.startswith("good"))
    assert good_row.count("*") == 6
    rows = list(csv.reader(io.StringIO(report.to_csv())))
    assert rows[0] == ["Model", "B-1", "B-2", "B-3", "B-4", "METEOR", "R-L"]
    assert [r[0] for r in rows[1:]] == ["good", "weak"]
    assert all(len(r) == 7 for r in rows)


def test_latex_matches_table_layout():
    report = evaluate_systems({"a": _pairs(REFS), "b": _pairs(["calm", "piano", "beat"])})
    tex = report.to_latex()
    assert tex.startswith("\\begin{tabular}{@{}c|cccccc@{}}")
    assert "B-1$\\uparrow$ & B-2$\\uparrow$ & B-3$\\uparrow$ & B-4$\\uparrow$ & METEOR$\\uparrow$ & R-L$\\uparrow$" in tex
    assert "\\textbf{100.00}" in tex


def test_json_report_shape():
    obj = json.loads(evaluate_corpus(_pairs(REFS), aggregation="corpus").render("json"))
    assert obj["aggregation"] == "corpus"
    assert obj["n_pairs"] == 3
    assert list(obj["systems"]["system"]) == list(COLUMNS)
    with pytest.raises(ValueError):
        EvalReport().render("xml")


def test_systems_must_share_pair_count():
    with pytest.raises(ValueError):
        evaluate_systems({"a": _pairs(REFS), "b": _pairs(REFS[:2])})


def test_dominance_ranking_on_extensions():
    # "prefix" outputs are strict prefixes of the references; "full" outputs equal them
    prefix = [" ".join(r.split()[:-2]) for r in REFS]
    report = evaluate_systems({"prefix": _pairs(prefix), "full": _pairs(REFS)})
    for key in ("B1", "B2", "B3", "B4", "METEOR", "RL"):
        assert dominates(report, "full", "prefix", key)
        assert report.rank(key)[0] == "full"


def test_loaders(tmp_path):
    jl = tmp_path / "p.jsonl"
    jl.write_text('{"id": "a", "hypothesis": "x y", "references": ["x y", "y"]}\n'
                  '\n{"hypothesis": "z", "reference": "z"}\n')
    pairs = load_jsonl_pairs(jl)
    assert [p.id for p in pairs] == ["a", "2"]
    assert pairs[1].references == ("z",)
    hyp, r1, r2 = tmp_path / "h.txt", tmp_path / "r1.txt", tmp_path / "r2.txt"
    hyp.write_text("a b\nc d\n")
    r1.write_text("a b\nc\n")
    r2.write_text("b\nd\n")
    aligned = load_aligned_pairs(hyp, [r1, r2])
    assert aligned[1].references == ("c", "d")
    r2.write_text("only one line\n")
    with pytest.raises(ValueError):
        load_aligned_pairs(hyp, [r1, r2])
    with pytest.raises(ValueError):
        load_aligned_pairs(hyp, [])
