from __future__ import annotations

import pytest

from rtleff.ablation import (
    SweepPlan,
    consistency_from_cells,
    consistency_score,
    derive_scores,
    make_plan,
    run_sweep,
)
from rtleff.errors import InsufficientBackends
from rtleff.pipeline import design_top
from rtleff.records import read_records
from rtleff.synth.harness import MockBackend, StrategyHint, StrategyScript
from rtleff.types import Design, MetricVector
from rtleff.verilog import design_digest

TWO_STRATS = (StrategyScript("area", ("a",), StrategyHint.AREA), StrategyScript("delay", ("d",), StrategyHint.DELAY))


def _digest(b, d: Design) -> str:
    src = b.design_source(d)
    return design_digest(src, design_top(src, b))


def test_single_backend_sweep_scores_references(tmp_path, suite_dir, p017):
    plan = make_plan(suite_dir, ["mock"], problems=["p017_trailing_zeros"])
    cells = run_sweep(plan, tmp_path)
    assert len(cells) == 4
    assert len(read_records(tmp_path / "sweep.jsonl")) == 4
    for c in cells:
        assert c.status == "Ok"
        for v in c.e.values():
            assert v is None or 0.0 <= v <= 1.0
    base = next(c for c in cells if c.design == "unopt")
    assert all(v == 0.0 for v in base.e.values() if v is not None)


def test_interrupted_sweep_resumes_to_identical_records(tmp_path, suite_dir):
    plan = make_plan(suite_dir, ["mock"])
    full = tmp_path / "full"
    run_sweep(plan, full)
    want = sorted(r.to_line() for r in read_records(full / "sweep.jsonl"))

    part = tmp_path / "part"
    run_sweep(plan, part)
    lines = (part / "sweep.jsonl").read_text().splitlines(keepends=True)
    keep = len(lines) // 2
    (part / "sweep.jsonl").write_text("".join(lines[:keep]) + lines[keep][:20])
    run_sweep(plan, part)
    assert sorted(r.to_line() for r in read_records(part / "sweep.jsonl")) == want
    assert (part / "sweep.csv").read_bytes() == (full / "sweep.csv").read_bytes()

    before = (full / "sweep.jsonl").read_bytes()
    run_sweep(plan, full)
    assert (full / "sweep.jsonl").read_bytes() == before


def test_two_strategies_give_two_pareto_points(tmp_path, suite, p017):
    be = MockBackend(name="m2", strategies=TWO_STRATS)
    plan = SweepPlan((be,), (p017,), (Design.UNOPT,))
    run_sweep(plan, tmp_path)
    rows = (tmp_path / "pareto.csv").read_text().splitlines()
    assert rows[0] == "group,strategy,area,delay,pareto"
    assert [r.split(",")[1] for r in rows[1:]] == ["area", "delay"]


def test_consistency_arithmetic():
    same = consistency_score({("p", "opt_area", "s", "area"): {"a": 0.5, "b": 0.5}})
    assert same[0].spread == 0.0 and same[0].sign_agreement
    close = consistency_score({("p", "opt_area", "s", "area"): {"a": 0.6, "b": 0.7}})
    assert close[0].spread == pytest.approx(0.1, abs=1e-12) and close[0].sign_agreement
    with pytest.raises(InsufficientBackends):
        consistency_score({("p", "opt_area", "s", "area"): {"a": 0.6}})


def test_divergent_backends_disagree(tmp_path, p017):
    def backend(name: str, opt_area: float) -> MockBackend:
        return MockBackend(name=name, salt=name).with_overrides({
            _digest(p017, Design.UNOPT): MetricVector(100, 1.0, 0.1),
            _digest(p017, Design.OPT_AREA): MetricVector(opt_area, 1.0, 0.1),
            _digest(p017, Design.OPT_DELAY): MetricVector(0.0, 1.0, 0.1),
        })

    plan = SweepPlan((backend("lib_a", 70.0), backend("lib_b", 100.0)), (p017,),
                     (Design.UNOPT, Design.OPT_AREA, Design.OPT_DELAY))
    cells = run_sweep(plan, tmp_path)
    rows = {(r.design, r.metric): r for r in consistency_from_cells(cells)}
    row = rows[("opt_area", "area")]
    assert row.values == {"lib_a": pytest.approx(0.3), "lib_b": 0.0}
    assert not row.sign_agreement
    assert "false" in (tmp_path / "consistency.csv").read_text()


def test_derive_scores_is_pure(tmp_path, suite_dir):
    plan = make_plan(suite_dir, ["mock"], problems=["p087_shift_enable"])
    cells = run_sweep(plan, tmp_path)
    assert derive_scores(read_records(tmp_path / "sweep.jsonl"), plan.cells()) == cells
