"""Problem bundles and evaluation suites on disk.

A bundle is a directory holding a TOML ``manifest`` and plain Verilog/text
files::

    p017_trailing_zeros/
        manifest        id, difficulty, source, is_sequential, tags, [files]
        prompt.txt      task description in natural language
        header.v        the fixed module interface
        unopt.v         unoptimized baseline
        opt_area.v      area-optimized reference
        opt_delay.v     delay-optimized reference
        opt_power.v     power-optimized reference (may alias another file)
        testbench.v     self-checking testbench instantiating opt_model and unopt_model

A suite manifest (``suite.toml``) lists bundle directories and the threshold
policy used by scoring.
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import tomli_w

from rtleff import verilog
from rtleff.errors import (
    BundleError,
    DuplicateId,
    HeaderMismatch,
    InvalidBundle,
    MalformedManifest,
    MissingComponent,
)
from rtleff.types import METRICS, Design, Metric, MetricVector

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

MANIFEST_NAME = "manifest"
VERDICT_TOKENS = ("Total mismatches:", "Simulation completed.", "TIMEOUT")

# component name -> (manifest key, default file name)
COMPONENTS: dict[str, tuple[str, str]] = {
    "prompt": ("prompt", "prompt.txt"),
    "header": ("header", "header.v"),
    "unoptimized": ("unoptimized", "unopt.v"),
    "opt_area": ("area", "opt_area.v"),
    "opt_delay": ("delay", "opt_delay.v"),
    "opt_power": ("power", "opt_power.v"),
    "testbench": ("testbench", "testbench.v"),
}


class Difficulty(str, Enum):
    EASY = "Easy"
    MEDIUM = "Medium"
    HARD = "Hard"


class ThresholdPolicy(str, Enum):
    UNOPTIMIZED_BASELINE = "UnoptimizedBaseline"
    EXPLICIT = "Explicit"


@dataclass(frozen=True)
class ReferenceSet:
    area_src: str
    delay_src: str
    power_src: str
    # metric -> file name inside the bundle; equal names mean aliasing
    files: tuple[tuple[str, str], ...] = field(default=(), compare=False)

    def source(self, m: Metric | str) -> str:
        return getattr(self, f"{Metric.parse(m).value}_src")

    @property
    def file_map(self) -> dict[str, str]:
        return dict(self.files)

    @property
    def aliases(self) -> tuple[tuple[str, ...], ...]:
        """Groups of metrics whose references are the same file."""
        groups: dict[str, list[str]] = {}
        for m, f in self.files:
            groups.setdefault(f, []).append(m)
        return tuple(tuple(ms) for ms in groups.values() if len(ms) > 1)

    def canonical_design(self, m: Metric | str) -> Design:
        """The design a metric's reference is stored under after alias folding."""
        m = Metric.parse(m)
        for group in self.aliases:
            if m.value in group:
                return Design.for_metric(Metric(group[0]))
        return Design.for_metric(m)


@dataclass(frozen=True)
class ProblemBundle:
    id: str
    difficulty: str
    source: str
    prompt: str
    module_header: str
    unoptimized_src: str
    references: ReferenceSet
    testbench_src: str
    is_sequential: bool = False
    tags: tuple[str, ...] = ()
    path: Path | None = field(default=None, compare=False)

    @property
    def top_name(self) -> str:
        """Module name declared by the header (the canonical DUT name)."""
        names = verilog._MODULE_RE.findall(verilog.mask_comments(self.module_header))
        return names[0] if names else "top"

    @property
    def header_ports(self) -> list[str]:
        return verilog.header_ports(self.module_header)

    def design_source(self, d: Design | str) -> str:
        d = Design(d)
        if d is Design.UNOPT:
            return self.unoptimized_src
        return self.references.source(d.metric)

    def unique_designs(self) -> list[Design]:
        """Baseline plus each distinct reference file, in canonical order."""
        out = [Design.UNOPT]
        for m in METRICS:
            d = self.references.canonical_design(m)
            if d not in out:
                out.append(d)
        return out


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    bundle_id: str
    checks: tuple[CheckResult, ...]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.ok]


@dataclass(frozen=True)
class SuiteManifest:
    suite_name: str
    bundle_dirs: tuple[Path, ...]
    threshold_policy: ThresholdPolicy = ThresholdPolicy.UNOPTIMIZED_BASELINE
    # problem id -> {"T": MetricVector, "R": MetricVector}
    thresholds: dict[str, dict[str, MetricVector]] = field(default_factory=dict)
    path: Path | None = None


# ---------------------------------------------------------------- loading


def _read_toml(path: Path, bundle: str | None = None) -> dict:
    try:
        return tomllib.loads(path.read_text())
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as e:
        raise MalformedManifest(f"{path.name}: {e}", bundle) from e


def _ports_of(src: str, header_ports: list[str]) -> list[str]:
    top = verilog.pick_top(src, header_ports)
    if top is None:
        raise ValueError("no module declaration")
    return verilog.header_ports(src, top)


def validate_bundle(b: ProblemBundle) -> ValidationReport:
    """Check every bundle invariant and report each one. Never raises."""
    checks: list[CheckResult] = []
    checks.append(CheckResult("id-nonempty", bool(b.id and b.id.strip()),
                              "" if b.id and b.id.strip() else "empty id"))
    labels = {d.value for d in Difficulty}
    checks.append(CheckResult("difficulty-label", b.difficulty in labels,
                              "" if b.difficulty in labels else f"{b.difficulty!r} not in {sorted(labels)}"))

    problems = []
    try:
        want = set(b.header_ports)
    except ValueError as e:
        want = None
        problems.append(f"header: {e}")
    if want is not None:
        roles = [("unoptimized", b.unoptimized_src)] + [
            (f"opt_{m.value}", b.references.source(m)) for m in METRICS
        ]
        for role, src in roles:
            try:
                got = set(_ports_of(src, sorted(want)))
            except ValueError as e:
                problems.append(f"{role}: {e}")
                continue
            if got != want:
                missing = sorted(want - got)
                extra = sorted(got - want)
                problems.append(f"{role}: missing {missing} extra {extra}")
    checks.append(CheckResult("header-consistency", not problems, "; ".join(problems)))

    tb = verilog.mask_comments(b.testbench_src)
    missing_inst = [
        name for name in ("opt_model", "unopt_model")
        if not re.search(rf"\b{name}\s*(#\s*\(.*?\)\s*)?[A-Za-z_][\w$]*\s*\(", tb, re.S)
    ]
    checks.append(CheckResult("testbench-dual-instantiation", not missing_inst,
                              f"no instantiation of {', '.join(missing_inst)}" if missing_inst else ""))
    missing_tok = [t for t in VERDICT_TOKENS if t not in b.testbench_src]
    checks.append(CheckResult("testbench-verdict-tokens", not missing_tok,
                              f"missing {missing_tok}" if missing_tok else ""))
    return ValidationReport(b.id, tuple(checks))


def _enforce(b: ProblemBundle) -> None:
    report = validate_bundle(b)
    for c in report.checks:
        if c.ok:
            continue
        if c.name == "header-consistency":
            raise HeaderMismatch(c.detail, b.id)
        raise InvalidBundle(c.name, c.detail, b.id)


def load_bundle(directory: str | Path) -> ProblemBundle:
    d = Path(directory)
    label = d.name
    mpath = d / MANIFEST_NAME
    if not mpath.is_file():
        raise MissingComponent("manifest", label)
    data = _read_toml(mpath, label)
    files = data.get("files", {})
    if not isinstance(files, dict):
        raise MalformedManifest("[files] must be a table", label)
    for key in ("id", "difficulty"):
        if key not in data:
            raise MalformedManifest(f"missing required key {key!r}", label)
    bid = data["id"]
    if not isinstance(bid, str):
        raise MalformedManifest("id must be a string", label)
    tags = data.get("tags", [])
    if not isinstance(tags, list) or not all(isinstance(t, str) for t in tags):
        raise MalformedManifest("tags must be a list of strings", bid or label)
    seq = data.get("is_sequential", False)
    if not isinstance(seq, bool):
        raise MalformedManifest("is_sequential must be a boolean", bid or label)

    names: dict[str, str] = {}
    texts: dict[str, str] = {}
    for comp, (key, default) in COMPONENTS.items():
        name = files.get(key, default)
        if not isinstance(name, str):
            raise MalformedManifest(f"files.{key} must be a string", bid or label)
        p = d / name
        if not p.is_file():
            raise MissingComponent(comp, bid or label)
        names[comp] = name
        texts[comp] = p.read_text()

    refs = ReferenceSet(
        area_src=texts["opt_area"],
        delay_src=texts["opt_delay"],
        power_src=texts["opt_power"],
        files=tuple((m.value, names[f"opt_{m.value}"]) for m in METRICS),
    )
    b = ProblemBundle(
        id=bid,
        difficulty=str(data["difficulty"]),
        source=str(data.get("source", "")),
        prompt=texts["prompt"],
        module_header=texts["header"],
        unoptimized_src=texts["unoptimized"],
        references=refs,
        testbench_src=texts["testbench"],
        is_sequential=seq,
        tags=tuple(tags),
        path=d,
    )
    _enforce(b)
    return b


def serialize_bundle(b: ProblemBundle, directory: str | Path) -> Path:
    """Write ``b`` in the on-disk layout; aliased references share one file."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    fm = b.references.file_map
    files: dict[str, str] = {}
    written: dict[str, str] = {}
    for comp, (key, default) in COMPONENTS.items():
        if comp.startswith("opt_"):
            m = comp[4:]
            orig = fm.get(m, default)
            # keep the alias structure: reuse the file of the first metric sharing it
            name = written.get(orig, default)
            written.setdefault(orig, name)
            text = b.references.source(m)
        else:
            name = default
            text = {
                "prompt": b.prompt,
                "header": b.module_header,
                "unoptimized": b.unoptimized_src,
                "testbench": b.testbench_src,
            }[comp]
        files[key] = name
        (d / name).write_text(text)
    manifest = {
        "id": b.id,
        "difficulty": b.difficulty,
        "source": b.source,
        "is_sequential": b.is_sequential,
        "tags": list(b.tags),
        "files": files,
    }
    (d / MANIFEST_NAME).write_text(tomli_w.dumps(manifest))
    return d


def _vector(obj, where: str) -> MetricVector:
    if not isinstance(obj, dict):
        raise MalformedManifest(f"{where} must be a table of area/delay/power")
    unknown = set(obj) - {m.value for m in METRICS}
    if unknown:
        raise MalformedManifest(f"{where}: unknown metrics {sorted(unknown)}")
    try:
        return MetricVector.from_dict(obj)
    except ValueError as e:
        raise MalformedManifest(f"{where}: {e}") from e


def load_manifest(path: str | Path) -> SuiteManifest:
    p = Path(path)
    if p.is_dir():
        p = p / "suite.toml"
    if not p.is_file():
        raise MalformedManifest(f"suite manifest not found: {p}")
    data = _read_toml(p)
    bundles = data.get("bundles", [])
    if not isinstance(bundles, list) or not all(isinstance(x, str) for x in bundles):
        raise MalformedManifest("bundles must be a list of paths")
    try:
        policy = ThresholdPolicy(data.get("threshold_policy", ThresholdPolicy.UNOPTIMIZED_BASELINE.value))
    except ValueError:
        raise MalformedManifest(f"unknown threshold_policy {data.get('threshold_policy')!r}") from None
    thresholds: dict[str, dict[str, MetricVector]] = {}
    for pid, entry in (data.get("thresholds") or {}).items():
        if not isinstance(entry, dict):
            raise MalformedManifest(f"thresholds.{pid} must be a table")
        thresholds[pid] = {k: _vector(entry[k], f"thresholds.{pid}.{k}") for k in ("T", "R") if k in entry}
    return SuiteManifest(
        suite_name=str(data.get("suite_name", p.parent.name)),
        bundle_dirs=tuple((p.parent / b).resolve() for b in bundles),
        threshold_policy=policy,
        thresholds=thresholds,
        path=p,
    )


def load_suite(manifest: str | Path | SuiteManifest) -> list[ProblemBundle]:
    """Load every bundle of a suite, sorted by id."""
    m = manifest if isinstance(manifest, SuiteManifest) else load_manifest(manifest)
    seen: dict[str, Path] = {}
    out: list[ProblemBundle] = []
    for d in m.bundle_dirs:
        try:
            b = load_bundle(d)
        except BundleError as e:
            if e.bundle is None:
                e.bundle = d.name
                e.args = (f"[{d.name}] {e.args[0]}",)
            raise
        if b.id in seen:
            raise DuplicateId(f"id {b.id!r} appears in {seen[b.id]} and {d}", b.id)
        seen[b.id] = d
        out.append(b)
    return sorted(out, key=lambda b: b.id)
