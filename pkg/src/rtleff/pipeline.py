"""End-to-end orchestration: generate, simulate, synthesize, score, report.

Everything a run learns is appended to ``records.jsonl`` in the run
directory. Scores and reports are recomputed from that log alone, and a
rerun with the same configuration skips every record already present.

Record stages and keys::

    ref_synth   <problem>/<design>                 reference + baseline synthesis
    response    <formulation>/<problem>/<target>/<j>   raw model reply
    sim         <formulation>/<problem>/<target>/<j>   simulation verdict
    synth       <formulation>/<problem>/<target>/<j>   synthesis outcome
"""

from __future__ import annotations

import csv
import io
import logging
import threading
from collections import Counter
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

from rtleff import verilog
from rtleff.codegen import (
    CandidateSample,
    Formulation,
    GenerationConfig,
    RawResponse,
    make_client,
    make_sample,
    request_sample,
)
from rtleff.errors import IncompleteRun, MalformedManifest
from rtleff.metrics import EffThresholds, ScoreRow, score_sample, score_suite
from rtleff.problem_store import (
    ProblemBundle,
    SuiteManifest,
    ThresholdPolicy,
    load_manifest,
    load_suite,
)
from rtleff.records import RecordLog, config_hash, read_records
from rtleff.report import (
    ProblemRow,
    RunReport,
    emit_distribution_data,
    fmt_measure,
    write_report_files,
)
from rtleff.sim_harness import MockSimulator, SimStatus, SimVerdict, ToolSimulator, detect_simulator
from rtleff.synth.harness import (
    MockBackend,
    SynthOutcome,
    SynthStatus,
    backend_available,
    load_backends,
    load_mock_metrics,
)
from rtleff.types import METRICS, Design, Metric, MetricVector

log = logging.getLogger("rtleff")

DEFAULT_KS = (1, 5, 10)
RECORDS_NAME = "records.jsonl"
MOCK_METRICS_NAME = "mock_metrics.toml"
TRANSCRIPT_TAIL = 2000


class Correctness(str, Enum):
    SIM_AND_SYNTH = "sim+synth"
    SIM_ONLY = "sim-only"


# ---------------------------------------------------------------- environment


@dataclass
class Environment:
    """Simulator and synthesis backend bound to one suite."""

    suite: list[ProblemBundle]
    manifest: SuiteManifest
    simulator: object
    backend: object
    strategy: str

    @property
    def sim_name(self) -> str:
        return getattr(self.simulator, "name", "unknown")


def build_environment(suite_path: str | Path, *, simulator: str = "auto", backend: str = "yosys-generic130",
                      strategy: str | None = None, backends_file: str | Path | None = None,
                      keep_artifacts: bool = False, scratch: str | Path | None = None,
                      sim_timeout: float = 300.0) -> Environment:
    """Load the suite and resolve tools; raises EnvironmentFault when a tool is missing."""
    manifest = load_manifest(suite_path)
    suite = load_suite(manifest)
    scratch_root = Path(scratch) if scratch else None
    if simulator == "mock":
        sim = MockSimulator.for_suite(suite)
    else:
        cfg = detect_simulator(simulator, keep_artifacts=keep_artifacts, scratch_root=scratch_root,
                               wall_timeout=sim_timeout)
        sim = ToolSimulator(cfg)
    backends = load_backends(backends_file, keep_artifacts=keep_artifacts, scratch_root=scratch_root)
    if backend not in backends:
        raise MalformedManifest(f"unknown backend {backend!r}; available: {sorted(backends)}")
    be = backends[backend]
    if isinstance(be, MockBackend):
        fixture = manifest.path.parent / MOCK_METRICS_NAME if manifest.path else None
        if fixture is not None and fixture.is_file():
            be = be.with_overrides(load_mock_metrics(fixture, suite))
    elif not backend_available(be):
        from rtleff.errors import SynthToolNotFound

        raise SynthToolNotFound(f"backend {be.name!r}: none of {list(be.tool)} found on PATH")
    strat = be.get_strategy(strategy).name
    return Environment(suite, manifest, sim, be, strat)


def design_top(src: str, b: ProblemBundle) -> str | None:
    return verilog.pick_top(src, b.header_ports, prefer=b.top_name)


def sim_payload(v: SimVerdict) -> dict:
    return {
        "status": v.status.kind.value,
        "mismatches": v.status.mismatches,
        "transcript": v.transcript[-TRANSCRIPT_TAIL:],
    }


def synth_payload(o: SynthOutcome) -> dict:
    return {
        "status": o.status.value,
        "metrics": o.metrics.to_dict() if o.metrics is not None else None,
        "diagnostics": o.diagnostics[-TRANSCRIPT_TAIL:],
    }


def _synth(env: Environment, src: str, b: ProblemBundle) -> SynthOutcome:
    return env.backend.synthesize(src, env.strategy, design_top(src, b))


# ---------------------------------------------------------------- run config


@dataclass(frozen=True)
class RunConfig:
    suite: Path
    out_dir: Path
    formulation: Formulation = Formulation.P1_REWRITE_UNOPTIMIZED
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    targets: tuple[Metric, ...] = METRICS
    ks: tuple[int, ...] = DEFAULT_KS
    correctness: Correctness = Correctness.SIM_AND_SYNTH
    threshold_policy: ThresholdPolicy | None = None  # None: take the suite's policy
    clamp: bool = True
    workers: int = 4
    quadrant_split: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self) -> None:
        if not self.ks:
            raise ValueError("ks must not be empty")
        if max(self.ks) > self.generation.n or min(self.ks) < 1:
            raise ValueError(f"every k must lie in [1, n={self.generation.n}], got {list(self.ks)}")


def run_identity(cfg: RunConfig, env: Environment) -> dict:
    """Everything that determines the records; scoring-only options are excluded."""
    gen = cfg.generation.describe()
    gen.pop("target_metric")
    return {
        "suite": env.manifest.suite_name,
        "bundles": {b.id: verilog.design_digest(b.unoptimized_src, design_top(b.unoptimized_src, b))
                    for b in env.suite},
        "formulation": cfg.formulation.value,
        "targets": [t.value for t in cfg.targets],
        "generation": gen,
        "simulator": env.sim_name,
        "backend": env.backend.describe(),
        "strategy": env.strategy,
    }


def sample_key(f: Formulation, pid: str, target: Metric, j: int) -> str:
    return f"{f.short}/{pid}/{target.value}/{j}"


# ---------------------------------------------------------------- stages


def synthesize_designs(env: Environment, records: RecordLog, workers: int = 4) -> None:
    """Synthesize every distinct design of every bundle (baseline included)."""
    jobs = [(b, d) for b in env.suite for d in b.unique_designs()
            if not records.has("ref_synth", f"{b.id}/{d.value}")]

    def one(job):
        b, d = job
        o = _synth(env, b.design_source(d), b)
        records.append("ref_synth", f"{b.id}/{d.value}", synth_payload(o))

    _pool(one, jobs, workers)


def _pool(fn, jobs, workers: int) -> None:
    if not jobs:
        return
    with ThreadPoolExecutor(max_workers=max(1, workers)) as ex:
        for fut in [ex.submit(fn, j) for j in jobs]:
            fut.result()


def _evaluate_sample(env: Environment, records: RecordLog, cfg: RunConfig, client, b: ProblemBundle,
                     target: Metric, j: int) -> None:
    f = cfg.formulation
    key = sample_key(f, b.id, target, j)
    gcfg = replace(cfg.generation, target_metric=target)
    rec = records.get("response", key)
    if rec is None:
        raw = request_sample(client, b, f, gcfg, j)
        records.append("response", key, raw.to_dict())
    else:
        raw = RawResponse.from_dict(rec.payload)
    sample = make_sample(b, f, gcfg, j, raw)
    if not sample.usable:
        return
    sim = records.get("sim", key)
    if sim is None:
        try:
            verdict = env.simulator.simulate(sample.extracted_src, b)
            payload = sim_payload(verdict)
        except Exception as e:  # a candidate that cannot even be composed is a failed sample
            from rtleff.errors import EnvironmentFault

            if isinstance(e, EnvironmentFault):
                raise
            payload = {"status": SimStatus.COMPILE_ERROR.value, "mismatches": None, "transcript": str(e)}
        sim = records.append("sim", key, payload)
    if sim.payload["status"] != SimStatus.PASS.value:
        return
    if not records.has("synth", key):
        records.append("synth", key, synth_payload(_synth(env, sample.extracted_src, b)))


def cmd_run(cfg: RunConfig, env: Environment | None = None, **env_kw) -> tuple[RunReport, list[ScoreRow]]:
    """Run every stage, resuming from existing records, and write reports."""
    env = env or build_environment(cfg.suite, **env_kw)
    started = _now()
    ident = run_identity(cfg, env)
    h = config_hash(ident)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    records = RecordLog(cfg.out_dir / RECORDS_NAME, h)
    log.info("run %s: %d problems x %d targets x n=%d", h, len(env.suite), len(cfg.targets), cfg.generation.n)
    synthesize_designs(env, records, cfg.workers)
    client = make_client(cfg.generation, env.suite)
    try:
        jobs = [(b, t, j) for b in env.suite for t in cfg.targets for j in range(cfg.generation.n)]
        _pool(lambda job: _evaluate_sample(env, records, cfg, client, *job), jobs, cfg.workers)
    finally:
        client.close()
    snapshot = _snapshot(cfg, env, h)
    report, table = score_from_records(
        records.path, env.suite, cfg.formulation, cfg.targets, cfg.generation.n, cfg.ks,
        policy=cfg.threshold_policy or env.manifest.threshold_policy,
        overrides=env.manifest.thresholds, correctness=cfg.correctness, clamp=cfg.clamp,
        config=snapshot, run_id=h, started_at=started,
    )
    write_report_files(cfg.out_dir, report, table, quadrant_k=cfg.ks[0], splits=cfg.quadrant_split)
    return report, table


def _snapshot(cfg: RunConfig, env: Environment, h: str) -> dict:
    return {
        "config_hash": h,
        "suite": env.manifest.suite_name,
        "suite_path": str(env.manifest.path),
        "formulation": cfg.formulation.value,
        "model": cfg.generation.model_name,
        "endpoint": cfg.generation.endpoint_url,
        "n": cfg.generation.n,
        "temperature": cfg.generation.temperature,
        "seed": cfg.generation.seed,
        "targets": [t.value for t in cfg.targets],
        "ks": list(cfg.ks),
        "backend": env.backend.name,
        "strategy": env.strategy,
        "simulator": env.sim_name,
        "correctness": cfg.correctness.value,
        "threshold_policy": (cfg.threshold_policy or env.manifest.threshold_policy).value,
        "clamp": cfg.clamp,
        "power_assumptions": "freq 100 MHz, input probability 0.5 (estimator defaults)",
    }


def _now() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


# ---------------------------------------------------------------- scoring


def thresholds_for(b: ProblemBundle, ref: dict[str, dict], policy: ThresholdPolicy,
                   overrides: dict[str, dict[str, MetricVector]], clamp: bool = True) -> EffThresholds:
    """T from the baseline, R from each metric's own reference, then explicit overrides."""
    ov = overrides.get(b.id, {})
    if policy is ThresholdPolicy.EXPLICIT and not ("T" in ov and "R" in ov):
        raise MalformedManifest(f"explicit threshold policy but no T/R entry for {b.id}", b.id)
    base = ref.get(Design.UNOPT.value)
    base_m = MetricVector.from_dict(base["metrics"]) if base and base["status"] == "Ok" else MetricVector()
    T = {m.value: base_m.get(m) for m in METRICS}
    R: dict[str, float | None] = {}
    for m in METRICS:
        d = b.references.canonical_design(m).value
        rec = ref.get(d)
        R[m.value] = (MetricVector.from_dict(rec["metrics"]).get(m)
                      if rec and rec["status"] == "Ok" else None)
    for name, target in (("T", T), ("R", R)):
        if name in ov:
            for m in METRICS:
                v = ov[name].get(m)
                if v is not None:
                    target[m.value] = v
    return EffThresholds(MetricVector.from_dict(T), MetricVector.from_dict(R), clamp)


def score_from_records(path: str | Path, suite: Sequence[ProblemBundle], formulation: Formulation,
                       targets: Sequence[Metric], n: int, ks: Sequence[int], *,
                       policy: ThresholdPolicy = ThresholdPolicy.UNOPTIMIZED_BASELINE,
                       overrides: dict | None = None, correctness: Correctness = Correctness.SIM_AND_SYNTH,
                       clamp: bool = True, config: dict | None = None, run_id: str = "",
                       started_at: str = "") -> tuple[RunReport, list[ScoreRow]]:
    """Rebuild the score table from the record log only. No tool is invoked."""
    idx = {(r.stage, r.key): r.payload for r in read_records(path)}
    overrides = overrides or {}
    missing: list[str] = []
    rows: list[ScoreRow] = []
    prows: list[ProblemRow] = []
    for b in suite:
        ref = {}
        for d in b.unique_designs():
            p = idx.get(("ref_synth", f"{b.id}/{d.value}"))
            if p is None:
                missing.append(f"ref_synth {b.id}/{d.value}")
            else:
                ref[d.value] = p
        th = thresholds_for(b, ref, policy, overrides, clamp)
        for t in targets:
            gcfg = GenerationConfig(n=n, target_metric=t)
            e_list: list[float] = []
            c = 0
            hist: Counter[str] = Counter()
            for j in range(n):
                key = sample_key(formulation, b.id, t, j)
                resp = idx.get(("response", key))
                if resp is None:
                    missing.append(f"response {key}")
                    continue
                sample: CandidateSample = make_sample(b, formulation, gcfg, j, RawResponse.from_dict(resp))
                correct, measured, verdict = _judge(idx, key, sample, correctness, missing)
                hist[verdict] += 1
                c += correct
                s = score_sample(b.id, j, correct, measured, th, [t])
                e_list.append(s.e.get(t.value, 0.0))
            degenerate = th.degenerate(t)
            if len(e_list) == n:
                rows.append(ScoreRow(b.id, b.difficulty, n, c,
                                     {t.value: None if degenerate else tuple(e_list)}, t.value))
                prows.append(ProblemRow(b.id, b.difficulty, t.value, n, c,
                                        {t.value: None if degenerate else round(max(e_list), 6)},
                                        dict(sorted(hist.items()))))
    if missing:
        raise IncompleteRun(missing)
    scores = score_suite(rows, ks)
    notes = []
    for m, pids in scores.degenerate.items():
        if pids:
            notes.append(f"{m}: thresholds degenerate (T <= R) for {', '.join(pids)}")
    report = RunReport(run_id or config_hash(config or {}), config or {}, scores, tuple(prows),
                       started_at=started_at, finished_at=_now(), notes=tuple(notes))
    return report, rows


def _judge(idx: dict, key: str, sample: CandidateSample, correctness: Correctness,
           missing: list[str]) -> tuple[bool, MetricVector | None, str]:
    if not sample.usable:
        return False, None, sample.extraction_status.value
    sim = idx.get(("sim", key))
    if sim is None:
        missing.append(f"sim {key}")
        return False, None, "missing"
    if sim["status"] != SimStatus.PASS.value:
        return False, None, sim["status"]
    syn = idx.get(("synth", key))
    if syn is None:
        missing.append(f"synth {key}")
        return False, None, "missing"
    ok = syn["status"] == SynthStatus.OK.value
    measured = MetricVector.from_dict(syn["metrics"]) if ok else None
    if correctness is Correctness.SIM_ONLY:
        return True, measured, "Pass" if ok else f"Pass/{syn['status']}"
    return ok, measured, "Pass" if ok else syn["status"]


def cmd_score(run_dir: str | Path, ks: Sequence[int] | None = None, policy: ThresholdPolicy | None = None,
              correctness: Correctness | None = None) -> tuple[RunReport, list[ScoreRow]]:
    """Recompute scores of a finished run from its records and stored config."""
    d = Path(run_dir)
    prev_path = d / "scores.json"
    if not prev_path.is_file():
        raise IncompleteRun([f"{prev_path} (run has no report snapshot)"])
    prev = RunReport.from_json(prev_path.read_text())
    cfg = prev.config
    suite = load_suite(cfg["suite_path"]) if "suite_path" in cfg else None
    if suite is None:
        raise IncompleteRun(["config.suite_path"])
    manifest = load_manifest(cfg["suite_path"])
    pol = policy or ThresholdPolicy(cfg["threshold_policy"])
    corr = correctness or Correctness(cfg["correctness"])
    ks = tuple(ks or cfg["ks"])
    new_cfg = dict(cfg, ks=list(ks), threshold_policy=pol.value, correctness=corr.value)
    return score_from_records(
        d / RECORDS_NAME, suite, Formulation(cfg["formulation"]), [Metric(t) for t in cfg["targets"]],
        cfg["n"], ks, policy=pol, overrides=manifest.thresholds, correctness=corr, clamp=cfg.get("clamp", True),
        config=new_cfg, run_id=prev.run_id, started_at=prev.started_at,
    )


# ---------------------------------------------------------------- verify-refs


@dataclass(frozen=True)
class AuditRow:
    problem_id: str
    check: str       # sim | synth | direction
    subject: str     # design or metric
    status: str      # pass | fail | degenerate | warn
    detail: str = ""
    hard: bool = True


@dataclass
class Audit:
    rows: list[AuditRow]
    before: dict[str, MetricVector]
    after: dict[str, MetricVector]
    measurements: dict[str, dict[str, MetricVector | None]]

    @property
    def hard_failures(self) -> list[AuditRow]:
        return [r for r in self.rows if r.hard and r.status in ("fail", "degenerate")]

    @property
    def ok(self) -> bool:
        return not self.hard_failures

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["problem_id", "check", "subject", "status", "hard", "detail"])
        for r in self.rows:
            w.writerow([r.problem_id, r.check, r.subject, r.status, str(r.hard).lower(), r.detail])
        return buf.getvalue()

    def to_markdown(self) -> str:
        lines = ["| problem | check | subject | status | detail |", "|---|---|---|---|---|"]
        for r in self.rows:
            status = r.status if r.hard or r.status == "pass" else f"{r.status} (soft)"
            lines.append(f"| {r.problem_id} | {r.check} | {r.subject} | {status} | {r.detail} |")
        return "\n".join(lines) + "\n"


def cmd_verify_refs(env: Environment, out_dir: str | Path | None = None, *, strict_directions: bool = False,
                    direction_problems: Sequence[str] = (), workers: int = 4) -> Audit:
    """Audit every bundle: references pass simulation, designs synthesize, references win.

    Direction checks are hard for problems in ``direction_problems`` (or for
    all problems with ``strict_directions``) and advisory otherwise.
    """
    lock = threading.Lock()
    sims: dict[tuple[str, str], SimVerdict] = {}
    syns: dict[tuple[str, str], SynthOutcome] = {}
    jobs = []
    for b in env.suite:
        for d in b.unique_designs():
            jobs.append(("sim", b, d))
            jobs.append(("synth", b, d))

    def one(job):
        kind, b, d = job
        src = b.design_source(d)
        if kind == "sim":
            v = env.simulator.simulate(src, b)
            with lock:
                sims[(b.id, d.value)] = v
        else:
            o = _synth(env, src, b)
            with lock:
                syns[(b.id, d.value)] = o

    _pool(one, jobs, workers)
    rows: list[AuditRow] = []
    before: dict[str, MetricVector] = {}
    after: dict[str, MetricVector] = {}
    measured: dict[str, dict[str, MetricVector | None]] = {}
    for b in env.suite:
        measured[b.id] = {}
        for d in b.unique_designs():
            v = sims[(b.id, d.value)]
            rows.append(AuditRow(b.id, "sim", d.value, "pass" if v.passed else "fail",
                                 "" if v.passed else str(v.status)))
        for d in b.unique_designs():
            o = syns[(b.id, d.value)]
            measured[b.id][d.value] = o.metrics
            detail = "" if o.ok else f"{o.status.value}: {o.diagnostics.splitlines()[0] if o.diagnostics else ''}"
            if o.ok:
                detail = ", ".join(f"{k}={fmt_measure(v)}" for k, v in o.metrics.to_dict().items() if v is not None)
            rows.append(AuditRow(b.id, "synth", d.value, "pass" if o.ok else "fail", detail))
        base = syns[(b.id, Design.UNOPT.value)]
        hard = strict_directions or b.id in direction_problems
        aft: dict[str, float | None] = {}
        for m in METRICS:
            d = b.references.canonical_design(m)
            o = syns[(b.id, d.value)]
            if verilog.design_digest(b.design_source(d), design_top(b.design_source(d), b)) == \
                    verilog.design_digest(b.unoptimized_src, design_top(b.unoptimized_src, b)):
                rows.append(AuditRow(b.id, "direction", m.value, "degenerate",
                                     f"{d.value} is textually identical to the baseline", hard))
                continue
            if not (o.ok and base.ok):
                rows.append(AuditRow(b.id, "direction", m.value, "fail", "synthesis failed", hard))
                continue
            rv, bv = o.metrics.get(m), base.metrics.get(m)
            aft[m.value] = rv
            win = rv is not None and bv is not None and rv < bv
            status = "pass" if win else ("fail" if hard else "warn")
            rows.append(AuditRow(b.id, "direction", m.value, status,
                                 f"{d.value}={fmt_measure(rv)} vs unopt={fmt_measure(bv)}", hard))
        if base.ok:
            before[b.id] = base.metrics
            after[b.id] = MetricVector.from_dict(aft)
    audit = Audit(rows, before, after, measured)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "audit.csv").write_text(audit.to_csv())
        (out / "audit.md").write_text(audit.to_markdown())
        paired = {k: v for k, v in before.items() if k in after}
        if paired:
            (out / "distributions.csv").write_text(
                emit_distribution_data(paired, {k: after[k] for k in paired}))
    return audit
