from __future__ import annotations

import sys
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import requires_yosys
from rtleff.errors import BackendConfigError, MetricNotFound, SynthToolNotFound
from rtleff.synth.estimate import estimate
from rtleff.synth.harness import (
    MOCK_PARSERS,
    MockBackend,
    ParserSpec,
    StrategyHint,
    StrategyScript,
    SynthBackend,
    SynthStatus,
    extract_metric,
    list_strategies,
    load_backends,
    render_fixture,
    structural_problems,
)
from rtleff.synth.liberty import load_library, parse_function
from rtleff.types import MetricVector
from rtleff.verilog import design_digest

LIB130 = Path(__file__).resolve().parents[1] / "src" / "rtleff" / "data" / "lib" / "generic130.lib"


def test_extract_metric_first_match_and_scale():
    spec = ParserSpec("t.rpt", r"^Critical path delay:\s*({number})\s*ns", scale=1000.0)
    text = "noise\nCritical path delay: 2.34 ns\nCritical path delay: 9 ns\n"
    assert extract_metric(text, spec) == pytest.approx(2340.0)


def test_extract_metric_missing():
    with pytest.raises(MetricNotFound):
        extract_metric("nothing here", MOCK_PARSERS["area"])


@given(st.floats(min_value=0.0, max_value=1e30, allow_nan=False, allow_infinity=False))
def test_fixture_round_trip_is_exact(value):
    for spec in MOCK_PARSERS.values():
        assert extract_metric(render_fixture(spec, value), spec) == value


def test_mock_backend_parses_fixture_reports(p017):
    src = p017.unoptimized_src
    be = MockBackend().with_overrides({design_digest(src): MetricVector(1234.5, 2.34, 0.56)})
    out = be.synthesize(src)
    assert out.status is SynthStatus.OK
    assert out.metrics == MetricVector(area=1234.5, delay=2.34, power=0.56)


def test_mock_backend_is_pure_and_strategy_sensitive(p017):
    two = (StrategyScript("a", ("x",), StrategyHint.AREA), StrategyScript("d", ("y",), StrategyHint.DELAY))
    be = MockBackend(strategies=two)
    src = p017.references.area_src
    assert be.synthesize(src, "a") == be.synthesize(src, "a")
    assert be.synthesize(src, "a").metrics != be.synthesize(src, "d").metrics
    salted = MockBackend(strategies=two, salt="other")
    assert salted.synthesize(src, "a").metrics != be.synthesize(src, "a").metrics


def test_mock_backend_rejects_broken_structure(p017):
    broken = p017.references.area_src.replace("endmodule", "")
    out = MockBackend().synthesize(broken)
    assert out.status is SynthStatus.NOT_SYNTHESIZABLE
    assert "module/endmodule" in out.diagnostics
    assert structural_problems(p017.references.area_src) == []


def test_strategy_listing():
    backends = load_backends()
    gen = list_strategies(backends["yosys-generic130"])
    hints = {s.objective_hint for s in gen}
    assert len(gen) >= 2 and {StrategyHint.AREA, StrategyHint.DELAY} <= hints
    assert [s.name for s in gen] == [s.name for s in list_strategies(backends["yosys-generic130"])]
    mock = list_strategies(backends["mock"])
    assert [s.objective_hint for s in mock] == [StrategyHint.BALANCED]


def test_abc_inline_script():
    s = StrategyScript("x", ("strash", "&get -n", "&nf -R 1000"))
    assert s.as_abc_script == "+strash;&get,-n;&nf,-R,1000"


def test_backend_requires_parser_or_unsupported():
    strat = (StrategyScript("s", ("strash",)),)
    with pytest.raises(BackendConfigError):
        SynthBackend("b", "", None, strat, {"area": MOCK_PARSERS["area"]}, steps=(("true",),))
    ok = SynthBackend("b", "", None, strat, {"area": MOCK_PARSERS["area"]}, steps=(("true",),),
                      unsupported=("delay", "power"))
    assert ok.unsupported == ("delay", "power")


def test_load_backends_errors(tmp_path):
    bad = tmp_path / "b.toml"
    bad.write_text("[backends.x]\nstrategies = ['nope']\nsteps = ['true']\n")
    with pytest.raises(BackendConfigError):
        load_backends(bad)
    bad.write_text("not = [valid")
    with pytest.raises(BackendConfigError):
        load_backends(bad)


_FAKE_TOOL = """\
import pathlib, sys
src = pathlib.Path(sys.argv[1]).read_text()
out = pathlib.Path(sys.argv[2])
if "syntax_error" in src:
    print("ERROR: syntax error, unexpected identifier")
    sys.exit(1)
if "crash" in src:
    print("segfault")
    sys.exit(3)
if "noarea" not in src:
    (out / "area.rpt").write_text("   Chip area for module '\\\\top': 42.5\\n")
(out / "timing.rpt").write_text("Critical path delay: 1.25 ns\\n")
(out / "power.rpt").write_text("Total power: 0.5 mW\\n")
"""


@pytest.fixture
def fake_backend(tmp_path):
    tool = tmp_path / "fake_tool.py"
    tool.write_text(_FAKE_TOOL)
    return SynthBackend(
        name="fake",
        script_template="",
        liberty_path=None,
        strategies=(StrategyScript("s", ("strash",)),),
        report_parsers=dict(MOCK_PARSERS),
        steps=((sys.executable, str(tool), "{src}", "{report_dir}"),),
        scratch_root=tmp_path / "scratch",
    )


@pytest.mark.parametrize(
    "body,status",
    [
        ("module top(input a, output y); assign y = a; endmodule", SynthStatus.OK),
        ("module top(input a, output y); syntax_error endmodule", SynthStatus.NOT_SYNTHESIZABLE),
        ("module top(input a, output y); crash endmodule", SynthStatus.TOOL_ERROR),
        ("module top(input a, output y); noarea endmodule", SynthStatus.TOOL_ERROR),
    ],
)
def test_command_backend_status_mapping(fake_backend, body, status):
    out = fake_backend.synthesize(body)
    assert out.status is status
    if status is SynthStatus.OK:
        assert out.metrics == MetricVector(42.5, 1.25, 0.5)


def test_command_backend_missing_tool(tmp_path):
    be = SynthBackend("gone", "", None, (StrategyScript("s", ("strash",)),), dict(MOCK_PARSERS),
                      steps=(("no-such-synth-tool-xyz", "{src}"),), scratch_root=tmp_path)
    with pytest.raises(SynthToolNotFound):
        be.synthesize("module m; endmodule")


def test_parse_function():
    f, names = parse_function("!((A1&A2)|B)")
    assert names == ["A1", "A2", "B"]
    assert f({"A1": 1, "A2": 1, "B": 0}) == 0
    assert f({"A1": 0, "A2": 1, "B": 0}) == 1
    g, _ = parse_function("A B' + C")
    assert g({"A": 1, "B": 0, "C": 0}) == 1
    assert g({"A": 1, "B": 1, "C": 0}) == 0


def test_library_and_estimator_on_inverter_chain():
    lib = load_library(LIB130)
    assert lib.cells["INV_X1"].area == pytest.approx(3.75)
    assert lib.cells["DFF_X1"].sequential

    def chain(length: int) -> dict:
        cells = {f"i{j}": {"type": "INV_X1", "connections": {"A": [2 + j], "Y": [3 + j]}} for j in range(length)}
        ports = {"a": {"direction": "input", "bits": [2]}, "y": {"direction": "output", "bits": [2 + length]}}
        return {"modules": {"top": {"attributes": {"top": "1"}, "ports": ports, "cells": cells}}}

    one, three = estimate(chain(1), lib), estimate(chain(3), lib)
    assert one.area == pytest.approx(3.75)
    assert three.area == pytest.approx(11.25)
    assert 0 < one.delay_ns < three.delay_ns
    assert 0 < one.power_mw < three.power_mw
    assert not three.unmapped


@requires_yosys
def test_real_backend_synthesizes_baseline(p017, tool_scratch):
    from rtleff.pipeline import design_top

    be = load_backends(scratch_root=tool_scratch)["yosys-generic130"]
    src = p017.unoptimized_src
    out = be.synthesize(src, top=design_top(src, p017))
    assert out.status is SynthStatus.OK, out.diagnostics
    assert out.metrics.area > 0 and out.metrics.delay > 0 and out.metrics.power > 0
    bad = be.synthesize(src.replace(";", "", 1), top=design_top(src, p017))
    assert bad.status is SynthStatus.NOT_SYNTHESIZABLE
