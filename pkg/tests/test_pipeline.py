from __future__ import annotations

import json
import shutil
from pathlib import Path

import pytest

from conftest import GOLDEN, GOLDEN_KS, SUITE_DIR, mock_run
from oracles import eff_at_k_exact, pass_at_k_exact
from rtleff.errors import ConfigMismatch, IncompleteRun, MalformedManifest
from rtleff.pipeline import RECORDS_NAME, Correctness, build_environment, cmd_score, cmd_verify_refs
from rtleff.problem_store import ThresholdPolicy
from rtleff.report import Format, emit_score_table
from rtleff.types import METRICS


def _records(run: Path) -> list[dict]:
    return [json.loads(x) for x in (run / RECORDS_NAME).read_text().splitlines()]


def _rewrite(run: Path, fn) -> None:
    lines = [fn(r) for r in _records(run)]
    (run / RECORDS_NAME).write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in lines if r))


@pytest.fixture(scope="module")
def golden_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("golden") / "run"
    report, table = mock_run(out)
    return out, report, table


@pytest.mark.parametrize("form", ["P1", "P2"])
def test_scores_match_golden(tmp_path, form):
    mock_run(tmp_path / "a", "mixed", form)
    mock_run(tmp_path / "b", "mixed", form, workers=1)
    want = (GOLDEN / f"mixed_{form}_scores.csv").read_bytes()
    assert (tmp_path / "a" / "scores.csv").read_bytes() == want
    assert (tmp_path / "b" / "scores.csv").read_bytes() == want


def test_golden_agrees_with_exact_oracle(golden_run):
    _, report, table = golden_run
    for k in GOLDEN_KS:
        exact_pass = sum(float(pass_at_k_exact(r.n, r.c, k)) for r in table) / len(table)
        assert report.scores.pass_at[k] == pytest.approx(exact_pass, abs=1e-12)
        for m in METRICS:
            rows = [r for r in table if r.e.get(m.value) is not None]
            want = sum(float(eff_at_k_exact(r.e[m.value], k)) for r in rows) / len(rows)
            assert report.scores.eff_at[m.value][k] == pytest.approx(want, abs=1e-12)


def test_resume_after_truncation(tmp_path, golden_run):
    full, _, _ = golden_run
    run = tmp_path / "run"
    run.mkdir()
    data = (full / RECORDS_NAME).read_text()
    (run / RECORDS_NAME).write_text(data[: len(data) // 2])  # cut mid-line
    mock_run(run)
    assert (run / "scores.csv").read_bytes() == (full / "scores.csv").read_bytes()
    key = lambda r: (r["stage"], r["key"])  # noqa: E731
    assert sorted(map(key, _records(run))) == sorted(map(key, _records(full)))


def test_rerun_with_other_config_is_refused(tmp_path):
    mock_run(tmp_path, "references", n=2, ks=(1,))
    with pytest.raises(ConfigMismatch):
        mock_run(tmp_path, "references", n=3, ks=(1,))


def test_score_replay_matches_run(golden_run):
    run, report, _ = golden_run
    again, _ = cmd_score(run)
    assert again.scores == report.scores
    assert emit_score_table(again.scores, Format.CSV, breakdown=True) == (run / "scores.csv").read_text()


def test_missing_synth_records_are_enumerated(tmp_path, golden_run):
    run = tmp_path / "run"
    shutil.copytree(golden_run[0], run)
    _rewrite(run, lambda r: None if r["stage"] == "synth" and r["key"].startswith("P1/p087") else r)
    with pytest.raises(IncompleteRun) as ei:
        cmd_score(run)
    assert ei.value.missing and all("p087_shift_enable" in m for m in ei.value.missing)


def test_pass_ignores_metric_values(tmp_path, golden_run):
    run = tmp_path / "run"
    shutil.copytree(golden_run[0], run)

    def inflate(r):
        if r["stage"] == "synth" and r["payload"]["metrics"]:
            r["payload"]["metrics"] = {m: v * 10 for m, v in r["payload"]["metrics"].items()}
        return r

    _rewrite(run, inflate)
    before, after = golden_run[1].scores, cmd_score(run)[0].scores
    assert after.pass_at == before.pass_at
    assert after.eff_at != before.eff_at
    assert all(v == 0.0 for d in after.eff_at.values() for v in d.values())


def test_sim_only_counts_synth_failures_as_correct(tmp_path, golden_run):
    run = tmp_path / "run"
    shutil.copytree(golden_run[0], run)

    def break_synth(r):
        if r["stage"] == "synth":
            r["payload"] = {**r["payload"], "status": "ToolError", "metrics": None}
        return r

    _rewrite(run, break_synth)
    strict = cmd_score(run)[0].scores
    loose = cmd_score(run, correctness=Correctness.SIM_ONLY)[0].scores
    assert all(v == 0.0 for v in strict.pass_at.values())
    assert loose.pass_at == golden_run[1].scores.pass_at
    assert all(v == 0.0 for d in loose.eff_at.values() for v in d.values())


def test_threshold_policy_changes_eff_not_pass(tmp_path):
    suite = tmp_path / "suite"
    shutil.copytree(SUITE_DIR, suite)
    report, _ = mock_run(tmp_path / "run", suite=suite)
    with pytest.raises(MalformedManifest):
        cmd_score(tmp_path / "run", policy=ThresholdPolicy.EXPLICIT)
    extra = "\n".join(
        f"[thresholds.{pid}]\nT = {{ area = {t} }}\nR = {{ area = {r} }}"
        for pid, t, r in [("p017_trailing_zeros", 1000.0, 300.0), ("p060_mips_alu", 20000.0, 7000.0),
                          ("p068_sequence_detector", 400.0, 100.0), ("p087_shift_enable", 300.0, 80.0),
                          ("p104_conway_life", 90000.0, 30000.0)]
    )
    with (suite / "suite.toml").open("a") as f:
        f.write("\n" + extra + "\n")
    rescored, _ = cmd_score(tmp_path / "run", policy=ThresholdPolicy.EXPLICIT)
    assert rescored.scores.pass_at == report.scores.pass_at
    assert rescored.scores.eff_at["area"] != report.scores.eff_at["area"]
    assert rescored.scores.eff_at["delay"] == report.scores.eff_at["delay"]


def test_prompt_formulation_is_recorded(tmp_path):
    r1, _ = mock_run(tmp_path / "p1", "references", "P1", n=1, ks=(1,))
    r2, _ = mock_run(tmp_path / "p2", "references", "P2", n=1, ks=(1,))
    assert r1.config["formulation"] != r2.config["formulation"]
    assert all(r["key"].startswith("P2/") for r in _records(tmp_path / "p2") if r["stage"] == "response")


def test_verify_refs_mock_suite_passes(suite_dir):
    audit = cmd_verify_refs(build_environment(suite_dir, simulator="mock", backend="mock"))
    assert audit.ok
    assert all(r.status == "pass" for r in audit.rows if r.check == "sim")
    assert {r.subject for r in audit.rows if r.problem_id == "p017_trailing_zeros" and r.check == "synth"} == {
        "unopt", "opt_area", "opt_delay", "opt_power"}


def test_verify_refs_flags_degenerate_reference(tmp_path, suite_dir):
    dest = tmp_path / "p017_trailing_zeros"
    shutil.copytree(suite_dir / "p017_trailing_zeros", dest)
    (dest / "opt_area.v").write_text((dest / "unopt.v").read_text())
    (tmp_path / "suite.toml").write_text('bundles = ["p017_trailing_zeros"]\n')
    env = build_environment(tmp_path, simulator="mock", backend="mock")
    audit = cmd_verify_refs(env, tmp_path / "out", direction_problems=["p017_trailing_zeros"])
    row = next(r for r in audit.rows if r.check == "direction" and r.subject == "area")
    assert row.status == "degenerate"
    assert not audit.ok
    assert "degenerate" in (tmp_path / "out" / "audit.csv").read_text()
