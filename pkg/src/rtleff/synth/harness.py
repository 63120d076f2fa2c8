"""Pluggable synthesis backends.

A backend is described in TOML (see ``data/backends.toml``). Command
backends render a script template, run a list of command steps in a scratch
directory and read area/delay/power from report files with regexes. The mock
backend derives metrics from a hash of the source and needs no tools.
"""

from __future__ import annotations

import hashlib
import os
import re
import shlex
import shutil
import subprocess
import sys
import tempfile
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from pathlib import Path

from rtleff import verilog
from rtleff.errors import BackendConfigError, MetricNotFound, SynthToolNotFound
from rtleff.types import METRICS, Metric, MetricVector
from rtleff.verilog import structural_problems

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"


class StrategyHint(str, Enum):
    AREA = "Area"
    DELAY = "Delay"
    BALANCED = "Balanced"


@dataclass(frozen=True)
class StrategyScript:
    name: str
    command_sequence: tuple[str, ...]
    objective_hint: StrategyHint = StrategyHint.BALANCED

    def __post_init__(self) -> None:
        if not self.command_sequence:
            raise BackendConfigError(f"strategy {self.name!r} has no commands")

    @property
    def as_commands(self) -> str:
        return "; ".join(self.command_sequence)

    @property
    def as_abc_script(self) -> str:
        """Inline form accepted by ``abc -script +...`` (spaces become commas)."""
        return "+" + ";".join(c.strip().replace(" ", ",") for c in self.command_sequence)


@dataclass(frozen=True)
class ParserSpec:
    report: str          # report file name inside the report directory
    pattern: str         # regex with a capture group around the number
    group: int = 1
    scale: float = 1.0
    fixture: str | None = None  # format string used by render_fixture

    def compiled(self) -> re.Pattern:
        return re.compile(self.pattern.replace("{number}", _NUMBER), re.M)


def extract_metric(report: str, spec: ParserSpec) -> float:
    """First match of ``spec.pattern`` in ``report`` times ``spec.scale``."""
    m = spec.compiled().search(report)
    if m is None:
        raise MetricNotFound(f"pattern {spec.pattern!r} not found in {spec.report}")
    text = m.group(spec.group)
    try:
        value = float(text)
    except ValueError:
        raise MetricNotFound(f"captured text {text!r} is not a number") from None
    return value * spec.scale


def render_fixture(spec: ParserSpec, value: float) -> str:
    """A report line that ``extract_metric`` turns back into ``value``."""
    if spec.fixture is None:
        raise BackendConfigError(f"parser for {spec.report} has no fixture format")
    return spec.fixture.format(value=repr(float(value) / spec.scale)) + "\n"


class SynthStatus(str, Enum):
    OK = "Ok"
    NOT_SYNTHESIZABLE = "NotSynthesizable"
    TOOL_ERROR = "ToolError"


@dataclass(frozen=True)
class SynthOutcome:
    status: SynthStatus
    metrics: MetricVector | None = None
    diagnostics: str = ""
    netlist_path: Path | None = None
    log: str = ""

    @property
    def ok(self) -> bool:
        return self.status is SynthStatus.OK


@dataclass(frozen=True)
class SynthBackend:
    """A tool flow that turns Verilog into area/delay/power numbers."""

    name: str
    script_template: str
    liberty_path: Path | None
    strategies: tuple[StrategyScript, ...]
    report_parsers: dict[str, ParserSpec]
    steps: tuple[tuple[str, ...], ...] = ()
    tool: tuple[str, ...] = ()
    unsupported: tuple[str, ...] = ()
    default_strategy: str | None = None
    timeout: float = 900.0
    kind: str = "command"
    keep_artifacts: bool = False
    scratch_root: Path | None = None

    def __post_init__(self) -> None:
        missing = [m.value for m in METRICS
                   if m.value not in self.report_parsers and m.value not in self.unsupported]
        if missing:
            raise BackendConfigError(f"backend {self.name!r}: no parser for {missing} "
                                     "and not declared unsupported")
        if not self.strategies:
            raise BackendConfigError(f"backend {self.name!r} has no strategies")

    @property
    def strategy(self) -> StrategyScript:
        return self.get_strategy(None)

    def get_strategy(self, name: str | None) -> StrategyScript:
        name = name or self.default_strategy or self.strategies[0].name
        for s in self.strategies:
            if s.name == name:
                return s
        raise BackendConfigError(f"backend {self.name!r} has no strategy {name!r}")

    def describe(self) -> dict:
        """Stable description used for config hashing and run manifests."""
        return {
            "name": self.name,
            "kind": self.kind,
            "liberty": self.liberty_path.name if self.liberty_path else None,
            "liberty_sha256": _file_digest(self.liberty_path) if self.liberty_path else None,
            "script_template": self.script_template,
            "steps": [list(s) for s in self.steps],
            "strategies": {s.name: list(s.command_sequence) for s in self.strategies},
            "parsers": {k: [v.report, v.pattern, v.group, v.scale] for k, v in sorted(self.report_parsers.items())},
            "unsupported": list(self.unsupported),
        }

    def synthesize(self, src: str, strategy: str | None = None, top: str | None = None) -> SynthOutcome:
        return synthesize(src, self, strategy, top)


def _file_digest(p: Path) -> str:
    return hashlib.sha256(p.read_bytes()).hexdigest()


def list_strategies(backend) -> list[StrategyScript]:
    return list(backend.strategies)


# ---------------------------------------------------------------- running


def _resolve_tool(candidates: tuple[str, ...]) -> str | None:
    for c in candidates:
        found = shutil.which(c)
        if found:
            return found
    return None


def _diagnostics(text: str) -> str:
    lines = [ln.strip() for ln in text.splitlines() if "ERROR" in ln]
    return "\n".join(dict.fromkeys(lines))


def synthesize(src: str, backend, strategy: str | None = None, top: str | None = None) -> SynthOutcome:
    """Synthesize ``src`` and collect its MetricVector."""
    if getattr(backend, "kind", "command") == "mock":
        return backend.synthesize(src, strategy, top)
    strat = backend.get_strategy(strategy)
    if top is None:
        top = verilog.pick_top(src, [])
        if top is None:
            return SynthOutcome(SynthStatus.NOT_SYNTHESIZABLE, diagnostics="no module declaration found")
    exe = _resolve_tool(backend.tool) if backend.tool else None
    if backend.tool and exe is None:
        raise SynthToolNotFound(f"none of {list(backend.tool)} found on PATH")

    from rtleff.sim_harness import default_scratch_root

    root = backend.scratch_root or default_scratch_root()
    root.mkdir(parents=True, exist_ok=True)
    work = Path(tempfile.mkdtemp(prefix="synth-", dir=root))
    keep = backend.keep_artifacts
    try:
        (work / "design.v").write_text(src)
        (work / "reports").mkdir()
        if backend.liberty_path is not None:
            shutil.copyfile(backend.liberty_path, work / "cell.lib")
        mapping = {
            "src": "design.v",
            "top": top,
            "liberty": "cell.lib",
            "strategy_cmds": strat.as_commands,
            "strategy_abc": strat.as_abc_script,
            "report_dir": "reports",
            "script": "synth.ys",
            "tool": exe or "",
            "python": sys.executable,
        }
        try:
            script = backend.script_template.format(**mapping)
        except (KeyError, IndexError) as e:
            raise BackendConfigError(f"backend {backend.name!r}: bad placeholder {e}") from e
        (work / "synth.ys").write_text(script)
        logs: list[str] = []
        env = dict(os.environ)
        # Make the estimator importable even when running from a source tree.
        pkg_root = str(Path(__file__).resolve().parents[2])
        env["PYTHONPATH"] = pkg_root + (os.pathsep + env["PYTHONPATH"] if env.get("PYTHONPATH") else "")
        for i, step in enumerate(backend.steps):
            argv = [tok.format(**mapping) for tok in step]
            try:
                proc = subprocess.run(argv, cwd=work, stdout=subprocess.PIPE, stderr=subprocess.STDOUT,
                                      text=True, errors="replace", timeout=backend.timeout, env=env)
            except subprocess.TimeoutExpired:
                return SynthOutcome(SynthStatus.TOOL_ERROR, diagnostics=f"step {i} timed out",
                                    log="\n".join(logs))
            except FileNotFoundError as e:
                raise SynthToolNotFound(str(e)) from e
            text = proc.stdout
            for extra in sorted((work / "reports").glob("*.log")):
                text += "\n" + extra.read_text(errors="replace")
            logs.append(text)
            if proc.returncode != 0:
                diag = _diagnostics(text)
                if i == 0 and diag:
                    return SynthOutcome(SynthStatus.NOT_SYNTHESIZABLE, diagnostics=diag, log="\n".join(logs))
                return SynthOutcome(SynthStatus.TOOL_ERROR,
                                    diagnostics=diag or f"step {i} exited with {proc.returncode}",
                                    log="\n".join(logs))
        values: dict[str, float] = {}
        for metric, spec in backend.report_parsers.items():
            rpt = work / "reports" / spec.report
            if not rpt.is_file():
                return SynthOutcome(SynthStatus.TOOL_ERROR, diagnostics=f"missing report {spec.report}",
                                    log="\n".join(logs))
            try:
                values[metric] = extract_metric(rpt.read_text(errors="replace"), spec)
            except MetricNotFound as e:
                return SynthOutcome(SynthStatus.TOOL_ERROR, diagnostics=str(e), log="\n".join(logs))
        netlist = work / "reports" / "netlist.json"
        return SynthOutcome(
            SynthStatus.OK,
            MetricVector.from_dict(values),
            netlist_path=netlist if keep and netlist.exists() else None,
            log="\n".join(logs),
        )
    finally:
        if not keep:
            shutil.rmtree(work, ignore_errors=True)


# ---------------------------------------------------------------- mock

@dataclass(frozen=True)
class MockBackend:
    """Deterministic stand-in for a synthesis flow.

    Metrics are a pure function of (normalized source digest, strategy name),
    unless an override is registered for the digest. Reports are rendered
    with :func:`render_fixture` and read back through the configured parsers
    so the parsing path is exercised too.
    """

    name: str = "mock"
    strategies: tuple[StrategyScript, ...] = (
        StrategyScript("balanced", ("mock",), StrategyHint.BALANCED),
    )
    report_parsers: dict[str, ParserSpec] = field(default_factory=lambda: dict(MOCK_PARSERS))
    overrides: dict[str, MetricVector] = field(default_factory=dict)
    unsupported: tuple[str, ...] = ()
    default_strategy: str | None = None
    kind: str = "mock"
    salt: str = ""
    keep_artifacts: bool = False
    scratch_root: Path | None = None
    liberty_path: Path | None = None

    @property
    def strategy(self) -> StrategyScript:
        return self.get_strategy(None)

    def get_strategy(self, name: str | None) -> StrategyScript:
        return SynthBackend.get_strategy(self, name)  # type: ignore[arg-type]

    def with_overrides(self, overrides: dict[str, MetricVector]) -> MockBackend:
        merged = dict(self.overrides)
        merged.update(overrides)
        return replace(self, overrides=merged)

    def describe(self) -> dict:
        return {
            "name": self.name,
            "kind": "mock",
            "salt": self.salt,
            "strategies": [s.name for s in self.strategies],
            "overrides": {k: v.to_dict() for k, v in sorted(self.overrides.items())},
        }

    def hashed_metrics(self, digest: str, strategy: str) -> MetricVector:
        h = hashlib.sha256(f"{self.salt}|{digest}|{strategy}".encode()).digest()
        a = int.from_bytes(h[0:8], "big")
        d = int.from_bytes(h[8:16], "big")
        p = int.from_bytes(h[16:24], "big")
        return MetricVector(
            area=round(100.0 + (a % 900_000) / 100.0, 2),
            delay=round(0.5 + (d % 45_000) / 10_000.0, 4),
            power=round(0.01 + (p % 99_000) / 100_000.0, 5),
        )

    def metrics_for(self, src: str, strategy: str | None = None, top: str | None = None) -> MetricVector:
        strat = self.get_strategy(strategy).name
        digest = verilog.design_digest(src, top)
        for key in (f"{digest}@{strat}", digest):
            if key in self.overrides:
                return self.overrides[key]
        return self.hashed_metrics(digest, strat)

    def synthesize(self, src: str, strategy: str | None = None, top: str | None = None) -> SynthOutcome:
        problems = structural_problems(src)
        if problems:
            return SynthOutcome(SynthStatus.NOT_SYNTHESIZABLE, diagnostics="; ".join(problems),
                                log="ERROR: " + "\nERROR: ".join(problems))
        vec = self.metrics_for(src, strategy, top)
        values = {}
        for metric, spec in self.report_parsers.items():
            v = vec.get(metric)
            if v is None:
                continue
            values[metric] = extract_metric(render_fixture(spec, v), spec)
        return SynthOutcome(SynthStatus.OK, MetricVector.from_dict(values), log="mock synthesis")


MOCK_PARSERS = {
    "area": ParserSpec("area.rpt", r"^\s*Chip area for module .*?:\s*({number})", 1, 1.0,
                       "   Chip area for module '\\dut': {value}"),
    "delay": ParserSpec("timing.rpt", r"^Critical path delay:\s*({number})\s*ns", 1, 1.0,
                        "Critical path delay: {value} ns"),
    "power": ParserSpec("power.rpt", r"^Total power:\s*({number})\s*mW", 1, 1.0,
                        "Total power: {value} mW"),
}


# ---------------------------------------------------------------- config


def _data_path(rel: str) -> Path:
    return Path(str(resources.files("rtleff") / "data" / rel))


def default_backends_path() -> Path:
    return _data_path("backends.toml")


def _strategy(name: str, entry: dict) -> StrategyScript:
    try:
        hint = StrategyHint(entry.get("hint", "Balanced"))
    except ValueError:
        raise BackendConfigError(f"strategy {name!r}: unknown hint {entry.get('hint')!r}") from None
    cmds = entry.get("commands")
    if not isinstance(cmds, list) or not all(isinstance(c, str) for c in cmds):
        raise BackendConfigError(f"strategy {name!r}: commands must be a list of strings")
    return StrategyScript(name, tuple(cmds), hint)


def _parser(metric: str, entry: dict) -> ParserSpec:
    try:
        return ParserSpec(
            report=entry["report"],
            pattern=entry["pattern"],
            group=int(entry.get("group", 1)),
            scale=float(entry.get("scale", 1.0)),
            fixture=entry.get("fixture"),
        )
    except KeyError as e:
        raise BackendConfigError(f"parser for {metric}: missing {e}") from None


def load_backends(path: str | Path | None = None, **overrides) -> dict[str, SynthBackend | MockBackend]:
    """Read backend definitions; relative liberty paths resolve against the file."""
    p = Path(path) if path else default_backends_path()
    try:
        data = tomllib.loads(p.read_text())
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise BackendConfigError(f"cannot read backend config {p}: {e}") from e
    strategies = {name: _strategy(name, e) for name, e in (data.get("strategies") or {}).items()}
    out: dict[str, SynthBackend | MockBackend] = {}
    for name, e in (data.get("backends") or {}).items():
        strat_names = e.get("strategies") or list(strategies)
        try:
            strats = tuple(strategies[s] for s in strat_names)
        except KeyError as k:
            raise BackendConfigError(f"backend {name!r}: unknown strategy {k}") from None
        parsers = {m: _parser(m, spec) for m, spec in (e.get("parsers") or {}).items()}
        kind = e.get("kind", "command")
        if kind == "mock":
            out[name] = MockBackend(
                name=name,
                strategies=strats,
                report_parsers=parsers or dict(MOCK_PARSERS),
                salt=str(e.get("salt", "")),
                default_strategy=e.get("default_strategy"),
                **{k: v for k, v in overrides.items() if k in ("keep_artifacts", "scratch_root")},
            )
            continue
        if kind != "command":
            raise BackendConfigError(f"backend {name!r}: unknown kind {kind!r}")
        lib = e.get("liberty")
        lib_path = None
        if lib:
            lib_path = Path(lib)
            if not lib_path.is_absolute():
                lib_path = (p.parent / lib_path).resolve()
        tool = e.get("tool", [])
        if isinstance(tool, str):
            tool = [tool]
        steps = e.get("steps")
        if not steps:
            raise BackendConfigError(f"backend {name!r} has no steps")
        steps_t = tuple(tuple(shlex.split(s)) if isinstance(s, str) else tuple(s) for s in steps)
        out[name] = SynthBackend(
            name=name,
            script_template=e.get("script_template", ""),
            liberty_path=lib_path,
            strategies=strats,
            report_parsers=parsers,
            steps=steps_t,
            tool=tuple(tool),
            unsupported=tuple(e.get("unsupported", [])),
            default_strategy=e.get("default_strategy"),
            timeout=float(e.get("timeout", 900)),
            kind="command",
            **overrides,
        )
    return out


def backend_available(backend) -> bool:
    if getattr(backend, "kind", "") == "mock":
        return True
    if backend.liberty_path is not None and not Path(backend.liberty_path).is_file():
        return False
    return not backend.tool or _resolve_tool(backend.tool) is not None


def metric_names() -> list[str]:
    return [m.value for m in Metric]


def load_mock_metrics(path: str | Path, bundles) -> dict[str, MetricVector]:
    """Map design digests to fixture metrics from a ``[problem] design = {...}`` file.

    Problems outside ``bundles`` are skipped; unknown design names raise so
    typos surface.
    """
    p = Path(path)
    try:
        data = tomllib.loads(p.read_text())
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise BackendConfigError(f"cannot read mock metrics {p}: {e}") from e
    by_id = {b.id: b for b in bundles}
    out: dict[str, MetricVector] = {}
    for pid, designs in data.items():
        b = by_id.get(pid)
        if b is None:
            continue  # fixture may cover more problems than the loaded suite
        for dname, vec in designs.items():
            try:
                src = b.design_source(dname)
            except (KeyError, ValueError):
                raise BackendConfigError(f"{p.name}: {pid} has no design {dname!r}") from None
            top = verilog.pick_top(src, b.header_ports, prefer=b.top_name)
            out[verilog.design_digest(src, top)] = MetricVector.from_dict(vec)
    return out
