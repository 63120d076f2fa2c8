"""Synthesis sweeps over backends, libraries and strategies.

A sweep synthesizes the bundled designs under every (backend, strategy)
pair, scores each design against that backend's own baseline, and reports
how much the scores move between backends.
"""

from __future__ import annotations

import csv
import io
import logging
import sys
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

from rtleff.errors import DegenerateThreshold, InsufficientBackends, MalformedManifest, SweepFailed
from rtleff.metrics import efficiency_score
from rtleff.pipeline import design_top, synth_payload
from rtleff.problem_store import ProblemBundle, load_manifest, load_suite
from rtleff.records import RecordLog, config_hash, read_records
from rtleff.report import emit_pareto_data, fmt3, fmt_measure
from rtleff.synth.harness import MockBackend, load_backends, load_mock_metrics
from rtleff.types import DESIGNS, METRICS, Design, MetricVector

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("rtleff")

SWEEP_RECORDS = "sweep.jsonl"


@dataclass(frozen=True)
class SweepPlan:
    backends: tuple
    problems: tuple[ProblemBundle, ...]
    designs: tuple[Design, ...] = DESIGNS
    strategies: tuple[str, ...] | None = None  # None: every strategy of each backend

    def cells(self) -> list[tuple[object, ProblemBundle, Design, str]]:
        out = []
        for be in self.backends:
            names = self.strategies or tuple(s.name for s in be.strategies)
            for b in self.problems:
                unique = b.unique_designs()
                for d in self.designs:
                    if d not in unique:
                        continue  # aliased to another reference file
                    for s in names:
                        out.append((be, b, d, be.get_strategy(s).name))
        if not out:
            raise ValueError("sweep plan is empty")
        return out

    def describe(self) -> dict:
        return {
            "backends": [be.describe() for be in self.backends],
            "problems": [b.id for b in self.problems],
            "designs": [d.value for d in self.designs],
            "strategies": list(self.strategies) if self.strategies else None,
        }


def cell_key(backend: str, problem: str, design: str, strategy: str) -> str:
    return "|".join((backend, problem, design, strategy))


def load_plan(path: str | Path, *, keep_artifacts: bool = False, scratch: Path | None = None) -> SweepPlan:
    p = Path(path)
    try:
        data = tomllib.loads(p.read_text())
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise MalformedManifest(f"cannot read sweep plan {p}: {e}") from e
    suite_path = p.parent / data.get("suite", ".")
    return make_plan(suite_path, data.get("backends", ["mock"]), problems=data.get("problems"),
                     designs=data.get("designs"), strategies=data.get("strategies"),
                     backends_file=(p.parent / data["backends_file"]) if "backends_file" in data else None,
                     keep_artifacts=keep_artifacts, scratch=scratch)


def make_plan(suite_path: str | Path, backends: Sequence[str], *, problems: Sequence[str] | None = None,
              designs: Sequence[str] | None = None, strategies: Sequence[str] | None = None,
              backends_file: str | Path | None = None, keep_artifacts: bool = False,
              scratch: Path | None = None) -> SweepPlan:
    manifest = load_manifest(suite_path)
    suite = load_suite(manifest)
    if problems:
        unknown = set(problems) - {b.id for b in suite}
        if unknown:
            raise MalformedManifest(f"unknown problems in plan: {sorted(unknown)}")
        suite = [b for b in suite if b.id in set(problems)]
    registry = load_backends(backends_file, keep_artifacts=keep_artifacts, scratch_root=scratch)
    chosen = []
    for name in backends:
        if name not in registry:
            raise MalformedManifest(f"unknown backend {name!r}; available: {sorted(registry)}")
        be = registry[name]
        if isinstance(be, MockBackend) and manifest.path is not None:
            fixture = manifest.path.parent / "mock_metrics.toml"
            if fixture.is_file():
                be = be.with_overrides(load_mock_metrics(fixture, suite))
        chosen.append(be)
    ds = tuple(Design(d) for d in designs) if designs else DESIGNS
    return SweepPlan(tuple(chosen), tuple(suite), ds, tuple(strategies) if strategies else None)


# ---------------------------------------------------------------- running


@dataclass(frozen=True)
class SweepCell:
    backend: str
    problem_id: str
    design: str
    strategy: str
    status: str
    metrics: MetricVector | None
    e: dict[str, float | None]
    diagnostics: str = ""


def run_sweep(plan: SweepPlan, out_dir: str | Path, workers: int = 2) -> list[SweepCell]:
    """Synthesize every cell not yet recorded, then derive scores for all cells."""
    from rtleff.pipeline import _pool

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = RecordLog(out / SWEEP_RECORDS, config_hash(plan.describe()))
    cells = plan.cells()
    todo = [c for c in cells if not records.has("cell", cell_key(c[0].name, c[1].id, c[2].value, c[3]))]
    log.info("sweep: %d cells (%d already recorded)", len(cells), len(cells) - len(todo))

    def one(cell):
        be, b, d, s = cell
        src = b.design_source(d)
        o = be.synthesize(src, s, design_top(src, b))
        payload = synth_payload(o)
        payload.update(backend=be.name, problem=b.id, design=d.value, strategy=s)
        records.append("cell", cell_key(be.name, b.id, d.value, s), payload)

    _pool(one, todo, workers)
    result = derive_scores(read_records(out / SWEEP_RECORDS), cells)
    if result and all(c.status != "Ok" for c in result):
        raise SweepFailed("every sweep cell failed")
    write_sweep_outputs(out, result)
    return result


def derive_scores(records: Iterable, cells: Sequence | None = None) -> list[SweepCell]:
    """Attach efficiency scores to raw cell records.

    T is the baseline under the same backend and strategy. R is the best
    value any reference design reached under that backend and strategy.
    """
    raw = {r.key: r.payload for r in records if r.stage == "cell"}
    if cells is not None:
        keys = [cell_key(be.name, b.id, d.value, s) for be, b, d, s in cells]
        raw = {k: raw[k] for k in keys if k in raw}
    groups: dict[tuple[str, str, str], dict[str, dict]] = {}
    for p in raw.values():
        groups.setdefault((p["backend"], p["problem"], p["strategy"]), {})[p["design"]] = p
    out: list[SweepCell] = []
    for key in sorted(raw, key=lambda k: tuple(k.split("|"))):
        p = raw[key]
        group = groups[(p["backend"], p["problem"], p["strategy"])]
        vec = MetricVector.from_dict(p["metrics"]) if p["status"] == "Ok" else None
        base = group.get(Design.UNOPT.value)
        base_vec = MetricVector.from_dict(base["metrics"]) if base and base["status"] == "Ok" else None
        e: dict[str, float | None] = {}
        for m in METRICS:
            refs = [MetricVector.from_dict(q["metrics"]).get(m) for d, q in group.items()
                    if d != Design.UNOPT.value and q["status"] == "Ok"]
            refs = [x for x in refs if x is not None]
            T = base_vec.get(m) if base_vec else None
            value = vec.get(m) if vec else None
            if T is None or not refs:
                e[m.value] = None
                continue
            try:
                e[m.value] = efficiency_score(value if value is not None else T, T, min(refs), vec is not None)
            except DegenerateThreshold:
                e[m.value] = None
        out.append(SweepCell(p["backend"], p["problem"], p["design"], p["strategy"], p["status"], vec, e,
                             p.get("diagnostics", "")))
    return out


# ---------------------------------------------------------------- consistency


@dataclass(frozen=True)
class ConsistencyRow:
    problem_id: str
    design: str
    strategy: str
    metric: str
    spread: float
    sign_agreement: bool
    values: dict[str, float]


def consistency_score(values: Mapping[tuple[str, str, str, str], Mapping[str, float]]) -> list[ConsistencyRow]:
    """Spread and agreement of e across backends.

    ``values`` maps (problem, design, strategy, metric) to {backend: e}. The
    spread is the largest pairwise |difference|; agreement means every
    backend sees an improvement (e > 0) or none does.
    """
    rows = []
    for (pid, design, strategy, metric), per_backend in sorted(values.items()):
        if len(per_backend) < 2:
            continue
        vals = [per_backend[b] for b in sorted(per_backend)]
        spread = max(abs(a - b) for a, b in combinations(vals, 2))
        agree = len({v > 0 for v in vals}) == 1
        rows.append(ConsistencyRow(pid, design, strategy, metric, spread, agree, dict(sorted(per_backend.items()))))
    if not rows:
        raise InsufficientBackends("consistency needs at least two backends scoring a shared problem")
    return rows


def consistency_from_cells(cells: Sequence[SweepCell]) -> list[ConsistencyRow]:
    values: dict[tuple[str, str, str, str], dict[str, float]] = {}
    for c in cells:
        if c.design == Design.UNOPT.value:
            continue
        for m, v in c.e.items():
            if v is not None:
                values.setdefault((c.problem_id, c.design, c.strategy, m), {})[c.backend] = v
    return consistency_score(values)


# ---------------------------------------------------------------- outputs


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def sweep_csv(cells: Sequence[SweepCell]) -> str:
    rows = [["backend", "problem_id", "design", "strategy", "status", "area", "delay", "power",
             "e_area", "e_delay", "e_power"]]
    for c in cells:
        mv = c.metrics.to_dict() if c.metrics else {}
        rows.append([c.backend, c.problem_id, c.design, c.strategy, c.status,
                     *(fmt_measure(mv.get(m.value)) for m in METRICS),
                     *(fmt3(c.e.get(m.value)) for m in METRICS)])
    return _csv(rows)


def consistency_csv(rows: Sequence[ConsistencyRow]) -> str:
    out = [["problem_id", "design", "strategy", "metric", "spread", "sign_agreement", "values"]]
    for r in rows:
        vals = ";".join(f"{b}={fmt3(v)}" for b, v in r.values.items())
        out.append([r.problem_id, r.design, r.strategy, r.metric, fmt3(r.spread), str(r.sign_agreement).lower(), vals])
    return _csv(out)


def pareto_csv(cells: Sequence[SweepCell]) -> str:
    groups: dict[str, list[tuple[str, MetricVector]]] = {}
    for c in cells:
        if c.metrics is not None and c.metrics.area is not None and c.metrics.delay is not None:
            groups.setdefault(f"{c.backend}/{c.problem_id}/{c.design}", []).append((c.strategy, c.metrics))
    text = ""
    for i, (g, pts) in enumerate(sorted(groups.items())):
        block = emit_pareto_data(pts, group=g)
        text += block if i == 0 else block.split("\n", 1)[1]
    return text


def write_sweep_outputs(out: Path, cells: Sequence[SweepCell]) -> None:
    (out / "sweep.csv").write_text(sweep_csv(cells))
    (out / "pareto.csv").write_text(pareto_csv(cells))
    try:
        (out / "consistency.csv").write_text(consistency_csv(consistency_from_cells(cells)))
    except InsufficientBackends:
        (out / "consistency.csv").unlink(missing_ok=True)
