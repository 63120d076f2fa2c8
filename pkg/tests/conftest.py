from __future__ import annotations

import shutil
from pathlib import Path

import pytest

from rtleff.problem_store import load_suite
from rtleff.sim_harness import default_scratch_root

SUITE_DIR = Path(__file__).resolve().parents[1] / "src" / "rtleff" / "data" / "suite"
GOLDEN = Path(__file__).resolve().parent / "golden"


def have_simulator() -> bool:
    return any(shutil.which(t) for t in ("iverilog", "verilator", "verilator-cli"))


def have_yosys() -> bool:
    return any(shutil.which(t) for t in ("yosys", "yowasp-yosys"))


requires_tools = pytest.mark.skipif(
    not (have_simulator() and have_yosys()), reason="needs a Verilog simulator and yosys"
)
requires_yosys = pytest.mark.skipif(not have_yosys(), reason="needs yosys")
requires_simulator = pytest.mark.skipif(not have_simulator(), reason="needs a Verilog simulator")


@pytest.fixture(scope="session")
def suite_dir() -> Path:
    return SUITE_DIR


@pytest.fixture(scope="session")
def suite():
    return load_suite(SUITE_DIR)


@pytest.fixture(scope="session")
def p017(suite):
    return next(b for b in suite if b.id == "p017_trailing_zeros")


@pytest.fixture
def tool_scratch(tmp_path_factory) -> Path:
    # WebAssembly tool builds cannot read host /tmp, so tool runs use the cache dir.
    root = default_scratch_root() / "tests"
    root.mkdir(parents=True, exist_ok=True)
    return root


GOLDEN_KS = (1, 2, 4)
RECORDS = "records.jsonl"


def mock_run(out: Path, behavior: str = "mixed", formulation: str = "P1", *, suite: Path = SUITE_DIR,
             n: int = 4, ks=GOLDEN_KS, workers: int = 4, **cfg):
    """Run every stage against the scripted model, mock simulator and mock backend."""
    from rtleff.codegen import Formulation, GenerationConfig
    from rtleff.pipeline import RunConfig, cmd_run

    gen = GenerationConfig(endpoint_url=f"mock://{behavior}", n=n, retry_limit=0, retry_backoff=0,
                           workers=workers)
    rc = RunConfig(suite=suite, out_dir=out, formulation=Formulation.parse(formulation), generation=gen,
                   ks=tuple(ks), workers=workers, **cfg)
    return cmd_run(rc, simulator="mock", backend="mock")


# Acceptance criteria record their outcome here; the summary hook prints one line each.
ACCEPTANCE: dict[int, tuple[str, str, str]] = {}
ACCEPTANCE_TITLES = {
    1: "closed-form eff@k equals subset enumeration",
    2: "pass@k exactness and monotonicity",
    3: "efficiency score boundaries and eff@k <= pass@k",
    4: "simulation verdict parser contract",
    5: "golden end-to-end mock run is byte-identical",
    6: "reference audit with real tools",
    7: "upper and lower bound fixtures for P1 and P2",
    8: "ablation idempotence and Pareto flags",
}


@pytest.fixture
def detail(request) -> dict:
    """Free-form note an acceptance test attaches to its summary line."""
    note = {"text": ""}
    request.node.acceptance_detail = note
    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (rep.when != "call" and not rep.failed and not rep.skipped):
        return
    num = marker.args[0]
    note = getattr(item, "acceptance_detail", {}).get("text", "")
    if rep.skipped:
        status, note = "SKIP", "tools not installed"
    else:
        status = "FAIL" if rep.failed else "PASS"
    ACCEPTANCE[num] = (status, ACCEPTANCE_TITLES[num], note)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, title in ACCEPTANCE_TITLES.items():
        status, detail = ACCEPTANCE.get(num, ("SKIP", title, "not run"))[0::2]
        line = f"{status} criterion {num}: {title}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
