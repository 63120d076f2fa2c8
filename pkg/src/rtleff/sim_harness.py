"""Run a bundle's self-checking testbench against a candidate design.

The candidate is renamed to ``opt_model``, the bundle baseline to
``unopt_model``, and both are compiled with the testbench by an external
simulator described by command templates. The verdict comes only from the
tokens the testbench prints.
"""

from __future__ import annotations

import hashlib
import os
import re
import shlex
import shutil
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from rtleff import verilog
from rtleff.errors import RenameFailure, SimulatorNotFound
from rtleff.problem_store import ProblemBundle

COMPILE_FAILURE_MARKER = "@@RTLEFF COMPILE FAILED@@"
COMPLETION_MARKER = "Simulation completed."
TIMEOUT_MARKER = "TIMEOUT"
_MISMATCH_RE = re.compile(r"Total mismatches:\s*(\d+)")


class SimStatus(str, Enum):
    PASS = "Pass"
    MISMATCH = "Mismatch"
    TIMEOUT = "Timeout"
    COMPILE_ERROR = "CompileError"
    RUNTIME_ERROR = "RuntimeError"


@dataclass(frozen=True)
class VerdictStatus:
    kind: SimStatus
    mismatches: int | None = None

    def __str__(self) -> str:
        if self.kind is SimStatus.MISMATCH:
            return f"Mismatch({self.mismatches})"
        return self.kind.value


@dataclass(frozen=True)
class SimVerdict:
    status: VerdictStatus
    transcript: str
    duration: float = 0.0

    @property
    def passed(self) -> bool:
        return self.status.kind is SimStatus.PASS


def parse_verdict(transcript: str) -> VerdictStatus:
    """Classify a simulator transcript.

    Precedence: compile-failure marker, then ``TIMEOUT``, then the first
    ``Total mismatches: N``. A zero count only passes when the completion
    marker is also present. Anything else is a runtime error.
    """
    if not isinstance(transcript, str):
        return VerdictStatus(SimStatus.RUNTIME_ERROR)
    if COMPILE_FAILURE_MARKER in transcript:
        return VerdictStatus(SimStatus.COMPILE_ERROR)
    if TIMEOUT_MARKER in transcript:
        return VerdictStatus(SimStatus.TIMEOUT)
    m = _MISMATCH_RE.search(transcript)
    if m is None:
        return VerdictStatus(SimStatus.RUNTIME_ERROR)
    n = int(m.group(1))
    if n > 0:
        return VerdictStatus(SimStatus.MISMATCH, n)
    if COMPLETION_MARKER in transcript:
        return VerdictStatus(SimStatus.PASS, 0)
    return VerdictStatus(SimStatus.RUNTIME_ERROR)


# ---------------------------------------------------------------- composition


@dataclass(frozen=True)
class SourceFile:
    name: str
    text: str


def _rename_top(src: str, new: str, prefer: str, ports: list[str]) -> str:
    spans = verilog.find_modules(src)
    if not spans:
        raise RenameFailure(f"no module declaration found while renaming to {new!r}")
    if len(spans) == 1:
        return verilog.rename_module(src, new)
    if new in {s.name for s in spans}:
        return src
    top = verilog.pick_top(src, ports, prefer=prefer)
    return verilog.rename_module(src, new, top)


def compose_sim_unit(candidate: str, b: ProblemBundle) -> list[SourceFile]:
    """Candidate as ``opt_model``, baseline as ``unopt_model``, testbench as is."""
    ports = b.header_ports
    cand = _rename_top(candidate, "opt_model", b.top_name, ports)
    base = _rename_top(b.unoptimized_src, "unopt_model", b.top_name, ports)
    return [
        SourceFile("opt_model.v", cand),
        SourceFile("unopt_model.v", base),
        SourceFile("testbench.v", b.testbench_src),
    ]


# ---------------------------------------------------------------- running


@dataclass(frozen=True)
class SimConfig:
    """How to compile and run a simulation.

    Templates are split like a shell command line. ``{sources}`` expands to
    the source files, ``{out}`` is the executable to produce and ``{exe}``
    the executable to run; ``{workdir}`` is the scratch directory. The
    first token of each template is looked up on PATH.
    """

    name: str
    compile_cmd_template: str
    run_cmd_template: str
    exe_path: str = "simv"  # where {out} ends up, relative to the work dir
    wall_timeout: float = 300.0
    keep_artifacts: bool = False
    scratch_root: Path | None = None
    tool_candidates: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        for ph in ("{sources}", "{out}"):
            if ph not in self.compile_cmd_template:
                raise ValueError(f"compile template lacks {ph}")


ICARUS = SimConfig(
    name="icarus",
    compile_cmd_template="iverilog -g2012 -o {out} {sources}",
    run_cmd_template="vvp {exe}",
    exe_path="simv",
)

# The extra make variables keep the pip-distributed build of Verilator working;
# they are harmless for a system install.
VERILATOR = SimConfig(
    name="verilator",
    compile_cmd_template=(
        "verilator --binary --timing --timescale 1ps/1ps -Wno-fatal -Wno-lint -Wno-style"
        " --top-module tb -Mdir obj_dir -o {out} {sources}"
        " -MAKEFLAGS PYTHON3=python3 -MAKEFLAGS CFG_CXXFLAGS_PCH_I=-include"
    ),
    run_cmd_template="{exe}",
    exe_path="obj_dir/simv",
    tool_candidates=("verilator", "verilator-cli"),
)

PRESETS = {"icarus": ICARUS, "verilator": VERILATOR}


def detect_simulator(prefer: str = "auto", **overrides) -> SimConfig:
    """Pick an installed simulator preset (Icarus first, then Verilator)."""
    names = ["icarus", "verilator"] if prefer == "auto" else [prefer]
    for name in names:
        cfg = PRESETS.get(name)
        if cfg is None:
            raise ValueError(f"unknown simulator preset {name!r}")
        exe = _resolve_tool(cfg)
        if exe is not None:
            return _replace(cfg, **overrides)
    raise SimulatorNotFound(f"no simulator found (tried {', '.join(names)})")


def _replace(cfg: SimConfig, **kw) -> SimConfig:
    from dataclasses import replace

    return replace(cfg, **kw) if kw else cfg


def _resolve_tool(cfg: SimConfig) -> str | None:
    first = shlex.split(cfg.compile_cmd_template)[0]
    for cand in (first, *cfg.tool_candidates):
        found = shutil.which(cand)
        if found:
            return found
    return None


def default_scratch_root() -> Path:
    """Scratch space for tool runs.

    Kept outside the system temp directory on purpose: the WebAssembly
    builds of the EDA tools cannot see host paths under ``/tmp``.
    """
    env = os.environ.get("RTLEFF_SCRATCH")
    if env:
        return Path(env)
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "rtleff" / "scratch"


def _expand(template: str, mapping: dict[str, str], sources: list[str]) -> list[str]:
    argv: list[str] = []
    for i, tok in enumerate(shlex.split(template)):
        if tok == "{sources}":
            argv.extend(sources)
            continue
        if i == 0 and "{" not in tok:
            tok = shutil.which(tok) or tok
        argv.append(tok.format(**mapping))
    return argv


def _run(argv: list[str], cwd: Path, timeout: float) -> tuple[int | None, str]:
    try:
        proc = subprocess.run(
            argv, cwd=cwd, stdout=subprocess.PIPE, stderr=subprocess.STDOUT,
            timeout=timeout, text=True, errors="replace",
        )
        return proc.returncode, proc.stdout
    except subprocess.TimeoutExpired as e:
        out = e.stdout.decode(errors="replace") if isinstance(e.stdout, bytes) else (e.stdout or "")
        return None, out
    except FileNotFoundError as e:
        raise SimulatorNotFound(str(e)) from e


def run_simulation(files: list[SourceFile], cfg: SimConfig) -> SimVerdict:
    exe = _resolve_tool(cfg)
    if exe is None:
        raise SimulatorNotFound(f"simulator for preset {cfg.name!r} is not on PATH")
    root = cfg.scratch_root or default_scratch_root()
    root.mkdir(parents=True, exist_ok=True)
    work = Path(tempfile.mkdtemp(prefix="sim-", dir=root))
    start = time.monotonic()
    try:
        for f in files:
            (work / f.name).write_text(f.text)
        sources = [f.name for f in files]
        mapping = {"out": Path(cfg.exe_path).name, "exe": str(work / cfg.exe_path), "workdir": str(work)}
        compile_argv = _expand(cfg.compile_cmd_template, mapping, sources)
        compile_argv[0] = exe
        code, log = _run(compile_argv, work, cfg.wall_timeout)
        if code is None:
            return SimVerdict(VerdictStatus(SimStatus.TIMEOUT), log + "\n[compile timed out]",
                              time.monotonic() - start)
        if code != 0:
            text = f"{log}\n{COMPILE_FAILURE_MARKER}\n"
            return SimVerdict(parse_verdict(text), text, time.monotonic() - start)
        remaining = max(1.0, cfg.wall_timeout - (time.monotonic() - start))
        run_argv = _expand(cfg.run_cmd_template, mapping, sources)
        code, out = _run(run_argv, work, remaining)
        if code is None:
            return SimVerdict(VerdictStatus(SimStatus.TIMEOUT), out + "\n[wall timeout]",
                              time.monotonic() - start)
        status = parse_verdict(out)
        return SimVerdict(status, out, time.monotonic() - start)
    finally:
        if not cfg.keep_artifacts:
            shutil.rmtree(work, ignore_errors=True)


# ---------------------------------------------------------------- mock


@dataclass
class MockSimulator:
    """Tool-free stand-in that decides verdicts from source digests.

    Designs registered as known-good pass and structurally broken text fails
    to compile. Anything else gets a verdict
    derived from a hash of its normalized text, so outcomes are stable across
    runs and machines.
    """

    known_good: set[str] = field(default_factory=set)
    pass_one_in: int = 2  # one in this many unknown designs passes
    name: str = "mock"

    @classmethod
    def for_suite(cls, bundles: list[ProblemBundle]) -> MockSimulator:
        good = set()
        for b in bundles:
            for d in b.unique_designs():
                good.add(verilog.design_digest(b.design_source(d), b.top_name))
        return cls(known_good=good)

    def simulate(self, candidate: str, b: ProblemBundle) -> SimVerdict:
        files = compose_sim_unit(candidate, b)
        digest = verilog.design_digest(candidate, b.top_name)
        problems = verilog.structural_problems(candidate)
        if problems:
            text = "%Error: " + "\n%Error: ".join(problems) + f"\n{COMPILE_FAILURE_MARKER}\n"
        elif digest in self.known_good:
            text = f"{COMPLETION_MARKER}\nTotal mismatches: 0\n"
        else:
            h = int(hashlib.sha256(("sim:" + digest).encode()).hexdigest(), 16)
            if h % self.pass_one_in:
                text = f"{COMPLETION_MARKER}\nTotal mismatches: {1 + (h >> 8) % 50}\n"
            else:
                text = f"{COMPLETION_MARKER}\nTotal mismatches: 0\n"
        del files
        return SimVerdict(parse_verdict(text), text, 0.0)


@dataclass
class ToolSimulator:
    cfg: SimConfig

    @property
    def name(self) -> str:
        return self.cfg.name

    def simulate(self, candidate: str, b: ProblemBundle) -> SimVerdict:
        return run_simulation(compose_sim_unit(candidate, b), self.cfg)
