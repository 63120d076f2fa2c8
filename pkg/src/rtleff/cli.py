"""Command-line entry point.

Exit codes: 0 success, 1 evaluation failures present, 2 environment error
(missing tool, unreachable endpoint, bad credentials).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from rtleff import __version__
from rtleff.errors import EnvironmentFault, RtlEffError
from rtleff.types import METRICS, Metric

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK, EXIT_FAILURES, EXIT_ENV = 0, 1, 2


def default_suite() -> Path:
    from importlib import resources

    return Path(str(resources.files("rtleff") / "data" / "suite"))


def _ks(text: str) -> tuple[int, ...]:
    try:
        ks = tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad k list {text!r}") from None
    if not ks:
        raise argparse.ArgumentTypeError("empty k list")
    return ks


def _metrics(text: str) -> tuple[Metric, ...]:
    try:
        return tuple(Metric.parse(x) for x in text.split(",") if x.strip())
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "rb") as f:
        return tomllib.load(f)


def _tool_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--suite", type=Path, default=None, help="suite directory or suite.toml (default: bundled sample)")
    p.add_argument("--simulator", default="auto", choices=["auto", "icarus", "verilator", "mock"])
    p.add_argument("--backend", default="yosys-generic130", help="backend name from the backend config")
    p.add_argument("--backends-file", type=Path, default=None)
    p.add_argument("--strategy", default=None, help="strategy name (default: the backend's default)")
    p.add_argument("--keep-artifacts", action="store_true")
    p.add_argument("--scratch", type=Path, default=None, help="scratch root for tool runs")
    p.add_argument("--sim-timeout", type=float, default=300.0)
    p.add_argument("--workers", type=int, default=4)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rtleff", description="Efficiency-aware evaluation of generated Verilog.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="generate, verify, synthesize, score and report")
    _tool_args(run)
    run.add_argument("--out", type=Path, required=True, help="run directory (resumed if it exists)")
    run.add_argument("--config", help="TOML file with a [generation] table")
    run.add_argument("--formulation", default="P1", help="P1 (rewrite baseline) or P2 (from specification)")
    run.add_argument("--endpoint", default=None, help="chat-completion URL, or mock://references|baseline|mixed|prose|error")
    run.add_argument("--model", default=None)
    run.add_argument("-n", "--samples", type=int, default=None)
    run.add_argument("--temperature", type=float, default=None)
    run.add_argument("--max-tokens", type=int, default=None)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--retry-limit", type=int, default=None)
    run.add_argument("--auth-env", default=None, help="environment variable holding the API token")
    run.add_argument("--targets", type=_metrics, default=METRICS)
    run.add_argument("--ks", type=_ks, default=None, help="comma-separated k values (default 1,5,10)")
    run.add_argument("--sim-only", action="store_true", help="count a sample correct on simulation alone")
    run.add_argument("--threshold-policy", choices=["UnoptimizedBaseline", "Explicit"], default=None)
    run.add_argument("--no-clamp", action="store_true")

    vr = sub.add_parser("verify-refs", help="audit bundled references")
    _tool_args(vr)
    vr.add_argument("--out", type=Path, default=None)
    vr.add_argument("--strict-directions", action="store_true",
                    help="treat every direction check as a hard failure")
    vr.add_argument("--require-direction", action="append", default=[], metavar="PROBLEM",
                    help="make direction checks hard for this problem id (repeatable)")

    sc = sub.add_parser("score", help="recompute scores from a run's records")
    sc.add_argument("run_dir", type=Path)
    sc.add_argument("--ks", type=_ks, default=None)
    sc.add_argument("--threshold-policy", choices=["UnoptimizedBaseline", "Explicit"], default=None)
    sc.add_argument("--sim-only", action="store_true")
    sc.add_argument("--format", choices=["md", "csv", "json"], default="md")

    rp = sub.add_parser("report", help="rewrite report files of a run from its records")
    rp.add_argument("run_dir", type=Path)
    rp.add_argument("--quadrant-k", type=int, default=None)
    rp.add_argument("--pass-split", type=float, default=0.5)
    rp.add_argument("--eff-split", type=float, default=0.5)

    ab = sub.add_parser("ablate", help="synthesis sweep over backends and strategies")
    ab.add_argument("--plan", type=Path, default=None, help="TOML sweep plan")
    ab.add_argument("--suite", type=Path, default=None)
    ab.add_argument("--backends", default="mock", help="comma-separated backend names")
    ab.add_argument("--backends-file", type=Path, default=None)
    ab.add_argument("--problems", default=None, help="comma-separated problem ids")
    ab.add_argument("--designs", default=None, help="comma-separated designs (unopt,opt_area,...)")
    ab.add_argument("--strategies", default=None, help="comma-separated strategy names")
    ab.add_argument("--out", type=Path, required=True)
    ab.add_argument("--workers", type=int, default=2)
    ab.add_argument("--keep-artifacts", action="store_true")
    ab.add_argument("--scratch", type=Path, default=None)

    va = sub.add_parser("validate", help="check bundle invariants")
    va.add_argument("--suite", type=Path, default=None)
    return ap


def _split(text: str | None) -> list[str] | None:
    return [x.strip() for x in text.split(",") if x.strip()] if text else None


def cmd_run(args) -> int:
    from rtleff.codegen import Formulation, GenerationConfig
    from rtleff.pipeline import DEFAULT_KS, Correctness, RunConfig, cmd_run as run
    from rtleff.problem_store import ThresholdPolicy
    from rtleff.report import Format, emit_score_table

    conf = _load_config(args.config).get("generation", {})
    overrides = {
        "endpoint_url": args.endpoint, "model_name": args.model, "n": args.samples,
        "temperature": args.temperature, "max_tokens": args.max_tokens, "seed": args.seed,
        "retry_limit": args.retry_limit, "auth_env": args.auth_env,
    }
    conf.update({k: v for k, v in overrides.items() if v is not None})
    conf.setdefault("n", 10)
    conf["workers"] = args.workers
    gen = GenerationConfig(**conf)
    ks = args.ks or tuple(k for k in DEFAULT_KS if k <= gen.n) or (1,)
    cfg = RunConfig(
        suite=args.suite or default_suite(),
        out_dir=args.out,
        formulation=Formulation.parse(args.formulation),
        generation=gen,
        targets=args.targets,
        ks=ks,
        correctness=Correctness.SIM_ONLY if args.sim_only else Correctness.SIM_AND_SYNTH,
        threshold_policy=ThresholdPolicy(args.threshold_policy) if args.threshold_policy else None,
        clamp=not args.no_clamp,
        workers=args.workers,
    )
    report, _ = run(cfg, simulator=args.simulator, backend=args.backend, strategy=args.strategy,
                    backends_file=args.backends_file, keep_artifacts=args.keep_artifacts,
                    scratch=args.scratch, sim_timeout=args.sim_timeout)
    print(emit_score_table(report.scores, Format.MARKDOWN), end="")
    print(f"reports written to {args.out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from rtleff.pipeline import build_environment, cmd_verify_refs

    env = build_environment(args.suite or default_suite(), simulator=args.simulator, backend=args.backend,
                            strategy=args.strategy, backends_file=args.backends_file,
                            keep_artifacts=args.keep_artifacts, scratch=args.scratch,
                            sim_timeout=args.sim_timeout)
    audit = cmd_verify_refs(env, args.out, strict_directions=args.strict_directions,
                            direction_problems=args.require_direction, workers=args.workers)
    print(audit.to_markdown(), end="")
    if not audit.ok:
        print(f"{len(audit.hard_failures)} hard check(s) failed", file=sys.stderr)
        return EXIT_FAILURES
    return EXIT_OK


def cmd_score(args) -> int:
    from rtleff.pipeline import Correctness, cmd_score as score
    from rtleff.problem_store import ThresholdPolicy
    from rtleff.report import Format, emit_score_table

    report, _ = score(args.run_dir, args.ks,
                      ThresholdPolicy(args.threshold_policy) if args.threshold_policy else None,
                      Correctness.SIM_ONLY if args.sim_only else None)
    print(emit_score_table(report.scores, Format(args.format), breakdown=True), end="")
    return EXIT_OK


def cmd_report(args) -> int:
    from rtleff.pipeline import cmd_score as score
    from rtleff.report import write_report_files

    report, table = score(args.run_dir)
    files = write_report_files(args.run_dir, report, table, args.quadrant_k, (args.pass_split, args.eff_split))
    for f in files:
        print(f)
    return EXIT_OK


def cmd_ablate(args) -> int:
    from rtleff.ablation import load_plan, make_plan, run_sweep

    if args.plan:
        plan = load_plan(args.plan, keep_artifacts=args.keep_artifacts, scratch=args.scratch)
    else:
        plan = make_plan(args.suite or default_suite(), _split(args.backends) or ["mock"],
                         problems=_split(args.problems), designs=_split(args.designs),
                         strategies=_split(args.strategies), backends_file=args.backends_file,
                         keep_artifacts=args.keep_artifacts, scratch=args.scratch)
    from rtleff.errors import SynthToolNotFound
    from rtleff.synth.harness import backend_available

    for be in plan.backends:
        if not backend_available(be):
            raise SynthToolNotFound(f"backend {be.name!r} is not available on this host")
    print(f"sweep: {len(plan.cells())} cells")
    cells = run_sweep(plan, args.out, workers=args.workers)
    failed = [c for c in cells if c.status != "Ok"]
    print(f"{len(cells) - len(failed)} ok, {len(failed)} failed; outputs in {args.out}")
    return EXIT_FAILURES if failed else EXIT_OK


def cmd_validate(args) -> int:
    from rtleff.problem_store import load_bundle, load_manifest, validate_bundle

    manifest = load_manifest(args.suite or default_suite())
    bad = 0
    for d in manifest.bundle_dirs:
        try:
            b = load_bundle(d)
        except RtlEffError as e:
            print(f"FAIL {d.name}: {e}")
            bad += 1
            continue
        rep = validate_bundle(b)
        for c in rep.checks:
            print(f"{'ok  ' if c.ok else 'FAIL'} {b.id} {c.name}{': ' + c.detail if c.detail else ''}")
        bad += not rep.ok
    return EXIT_FAILURES if bad else EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "verify-refs": cmd_verify,
    "score": cmd_score,
    "report": cmd_report,
    "ablate": cmd_ablate,
    "validate": cmd_validate,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except EnvironmentFault as e:
        print(f"environment error: {e}", file=sys.stderr)
        return EXIT_ENV
    except (RtlEffError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURES


if __name__ == "__main__":
    sys.exit(main())
