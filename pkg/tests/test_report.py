from __future__ import annotations

import csv
import io
import json

import pytest

from rtleff.errors import EmptySuite, UnpairedProblem
from rtleff.metrics import Breakdown, ScoreRow, SuiteScores, score_suite
from rtleff.report import (
    Format,
    ProblemRow,
    RunReport,
    dominates,
    emit_distribution_data,
    emit_pareto_data,
    emit_quadrant_data,
    emit_score_table,
    fmt3,
    pareto_flags,
    problem_points,
    quadrant_label,
    render_markdown,
)
from rtleff.types import MetricVector


def _worked() -> SuiteScores:
    e = {"area": (0.2, 0.5, 0.8), "delay": (0.0, 0.4, 1.0), "power": (0.1, 0.1, 0.1)}
    return score_suite([ScoreRow("p", "Medium", 3, 3, e)], [1, 2, 3])


def _rows(text: str) -> list[list[str]]:
    return list(csv.reader(io.StringIO(text)))


def test_worked_problem_renders_one_row_of_twelve_numbers():
    header, *rows = _rows(emit_score_table(_worked(), Format.CSV))
    assert header[0] == "scope" and header[1:4] == ["pass@1", "pass@2", "pass@3"]
    assert len(rows) == 1
    cells = rows[0][1:]
    assert len(cells) == 12
    assert all(float(c) >= 0 for c in cells)
    by_col = dict(zip(header, rows[0]))
    assert by_col["eff@2_area"] == "0.700"
    assert by_col["eff@3_delay"] == "1.000"


@pytest.mark.parametrize("v,text", [(0.783, "0.783"), (0.638, "0.638"), (0.659, "0.659"), (0.640, "0.640")])
def test_headline_formatting(v, text):
    assert fmt3(v) == text


def test_breakdown_adds_difficulty_rows():
    text = emit_score_table(_worked(), "csv", breakdown=True)
    assert [r[0] for r in _rows(text)[1:]] == ["all", "Medium"]


def test_empty_suite_is_an_error():
    empty = SuiteScores((1,), Breakdown(0, {}, {}, {}, {}), {}, {})
    with pytest.raises(EmptySuite):
        emit_score_table(empty)


def test_markdown_and_json_formats():
    md = emit_score_table(_worked(), Format.MARKDOWN)
    assert md.startswith("| scope | pass@1")
    js = json.loads(emit_score_table(_worked(), Format.JSON))
    assert js["rows"][0]["eff@2_area"] == 0.7


@pytest.mark.parametrize(
    "p,e,splits,label",
    [
        (0.9, 0.2, (0.5, 0.5), "correct-but-inefficient"),
        (0.0, 0.0, (0.5, 0.5), "incorrect-and-inefficient"),
        (0.9, 0.8, (0.5, 0.5), "correct-and-efficient"),
        (0.3, 0.8, (0.5, 0.5), "efficient-but-unreliable"),
        (0.01, 0.01, (0.0, 0.0), "correct-and-efficient"),
    ],
)
def test_quadrant_labels(p, e, splits, label):
    assert quadrant_label(p, e, *splits) == label


def test_quadrant_export_from_table():
    table = [ScoreRow("p", "Easy", 2, 2, {"area": (0.1, 0.2)}, "area"),
             ScoreRow("q", "Easy", 2, 0, {"area": (0.0, 0.0)}, "area")]
    pts = problem_points(table, 1)
    assert pts == [("p", "area", 1.0, pytest.approx(0.15)), ("q", "area", 0.0, 0.0)]
    rows = _rows(emit_quadrant_data(pts, 1))
    assert rows[1][-1] == "correct-but-inefficient"
    assert rows[2][-1] == "incorrect-and-inefficient"


def test_pareto_examples():
    assert pareto_flags([(10, 5), (8, 7), (12, 4)]) == [True, True, True]
    assert pareto_flags([(10, 5), (11, 6)]) == [True, False]
    assert pareto_flags([(3, 3)]) == [True]
    assert not dominates((1, 1), (1, 1))
    assert dominates((1, 1), (1, 2))


def test_pareto_export():
    text = emit_pareto_data([("area", MetricVector(10, 5)), ("delay", MetricVector(11, 6))], group="p|mock")
    rows = _rows(text)
    assert rows[0] == ["group", "strategy", "area", "delay", "pareto"]
    assert [r[-1] for r in rows[1:]] == ["true", "false"]


def test_distributions():
    before = {"a": MetricVector(100, 2, 0.5), "b": MetricVector(50, 1, 0.25)}
    same = _rows(emit_distribution_data(before, before))
    assert {r[-1] for r in same if r[0] == "mean"} == {"0.000"}
    after = {k: MetricVector(v.area * 0.8, v.delay * 0.8, v.power * 0.8) for k, v in before.items()}
    rows = _rows(emit_distribution_data(before, after))
    assert {r[-1] for r in rows if r[0] == "mean"} == {"20.000"}
    with pytest.raises(UnpairedProblem):
        emit_distribution_data(before, {"a": after["a"]})


def test_small_measurements_keep_precision():
    rows = _rows(emit_distribution_data({"a": MetricVector(1, 1, 0.01844)}, {"a": MetricVector(1, 1, 0.01788)}))
    power = next(r for r in rows if r[1] == "power")
    assert power[2:4] == ["0.01844", "0.01788"]


def test_run_report_json_round_trip():
    rep = RunReport(
        run_id="r1",
        config={"n": 3, "ks": [1, 2, 3]},
        scores=_worked(),
        problems=(ProblemRow("p", "Medium", None, 3, 3, {"area": 0.8, "delay": 1.0, "power": None},
                             {"Pass": 3}),),
        started_at="t0",
        finished_at="t1",
        notes=("note",),
    )
    again = RunReport.from_json(rep.to_json())
    assert again == rep
    assert again.to_json() == rep.to_json()
    assert "pass@1" in render_markdown(rep)
