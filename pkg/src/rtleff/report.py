"""Score tables and plot-ready datasets.

Every number is printed with three decimals and rows are emitted in a fixed
order, so exports are byte-stable for a given input.
"""

from __future__ import annotations

import csv
import io
import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from rtleff.errors import EmptySuite, UnpairedProblem
from rtleff.metrics import Breakdown, ScoreRow, SuiteScores, eff_at_k_single, pass_at_k
from rtleff.types import METRICS, MetricVector


class Format(str, Enum):
    MARKDOWN = "md"
    CSV = "csv"
    JSON = "json"


def fmt3(x: float | None) -> str:
    return "" if x is None else f"{x:.3f}"


def fmt_measure(x: float | None) -> str:
    """Raw tool measurements keep six significant digits (power is often < 0.01)."""
    return "" if x is None else f"{x:.6g}"


def _csv(rows: Sequence[Sequence[object]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(rows)
    return buf.getvalue()


def _markdown(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(c if c != "" else "n/a" for c in r) + " |" for r in rows]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- score table


def score_columns(ks: Sequence[int]) -> list[str]:
    cols = [f"pass@{k}" for k in ks]
    cols += [f"eff@{k}_{m.value}" for k in ks for m in METRICS]
    return cols


def _row_values(b: Breakdown, ks: Sequence[int]) -> list[float | None]:
    vals: list[float | None] = [b.pass_at[k] for k in ks]
    vals += [b.eff_at[m.value][k] for k in ks for m in METRICS]
    return vals


def emit_score_table(scores: SuiteScores, format: Format | str = Format.CSV, *,
                     breakdown: bool = False) -> str:
    """One ``all`` row (plus one row per difficulty when ``breakdown`` is set)."""
    fmt = Format(format)
    if scores is None or scores.overall.n_problems == 0:
        raise EmptySuite("no scores to render")
    ks = scores.ks
    scoped = [("all", scores.overall)]
    if breakdown:
        scoped += sorted(scores.by_difficulty.items())
    if fmt is Format.JSON:
        payload = {
            "columns": score_columns(ks),
            "rows": [{"scope": s, **dict(zip(score_columns(ks), (_round(v) for v in _row_values(b, ks))))}
                     for s, b in scoped],
        }
        return json.dumps(payload, indent=2, sort_keys=False) + "\n"
    header = ["scope", *score_columns(ks)]
    body = [[s, *(fmt3(v) for v in _row_values(b, ks))] for s, b in scoped]
    if fmt is Format.CSV:
        return _csv([header, *body])
    return _markdown(header, body)


def _round(v: float | None) -> float | None:
    return None if v is None else float(fmt3(v))


# ---------------------------------------------------------------- quadrants

QUADRANTS = {
    (True, True): "correct-and-efficient",
    (True, False): "correct-but-inefficient",
    (False, True): "efficient-but-unreliable",
    (False, False): "incorrect-and-inefficient",
}


@dataclass(frozen=True)
class QuadrantPoint:
    problem_id: str
    metric: str
    pass_at: float
    eff_at: float
    label: str


def quadrant_label(p: float, e: float, pass_split: float = 0.5, eff_split: float = 0.5) -> str:
    return QUADRANTS[(p > pass_split, e > eff_split)]


def problem_points(table: Sequence[ScoreRow], k: int) -> list[tuple[str, str, float, float]]:
    """(problem, metric, pass@k, eff@k) for every scored (problem, metric)."""
    out = []
    for pid in sorted({r.problem_id for r in table}):
        rows = [r for r in table if r.problem_id == pid]
        for m in METRICS:
            rs = [r for r in rows if r.e.get(m.value) is not None]
            if not rs:
                continue
            p = sum(pass_at_k(r.n, r.c, k) for r in rs) / len(rs)
            e = sum(eff_at_k_single(r.e[m.value], k) for r in rs) / len(rs)
            out.append((pid, m.value, p, e))
    return out


def emit_quadrant_data(per_problem: Sequence[tuple[str, str, float, float]], k: int,
                       pass_split: float = 0.5, eff_split: float = 0.5) -> str:
    rows = [["problem_id", "metric", f"pass@{k}", f"eff@{k}", "quadrant"]]
    for pid, m, p, e in per_problem:
        rows.append([pid, m, fmt3(p), fmt3(e), quadrant_label(p, e, pass_split, eff_split)])
    return _csv(rows)


# ---------------------------------------------------------------- pareto


def dominates(a: tuple[float, float], b: tuple[float, float]) -> bool:
    return a[0] <= b[0] and a[1] <= b[1] and (a[0] < b[0] or a[1] < b[1])


def pareto_flags(points: Sequence[tuple[float, float]]) -> list[bool]:
    """True for each point no other point dominates."""
    return [not any(dominates(q, p) for j, q in enumerate(points) if j != i) for i, p in enumerate(points)]


def emit_pareto_data(sweep: Sequence[tuple[str, MetricVector]], *, group: str | None = None) -> str:
    if not sweep:
        raise ValueError("pareto export needs at least one point")
    pts = [(v.area, v.delay) for _, v in sweep]
    flags = pareto_flags(pts)
    header = (["group"] if group is not None else []) + ["strategy", "area", "delay", "pareto"]
    rows = [header]
    for (name, v), flag in zip(sweep, flags):
        rows.append(([group] if group is not None else []) + [name, fmt_measure(v.area), fmt_measure(v.delay), str(flag).lower()])
    return _csv(rows)


# ---------------------------------------------------------------- distributions


def reduction_pct(before: float, after: float) -> float:
    return 0.0 if before == 0 else 100.0 * (before - after) / before


def emit_distribution_data(before: Mapping[str, MetricVector], after: Mapping[str, MetricVector]) -> str:
    """Paired before/after rows per metric plus a mean reduction per metric."""
    if set(before) != set(after):
        missing = sorted(set(before) ^ set(after))
        raise UnpairedProblem(f"problems without a pair: {missing}")
    rows: list[list[str]] = [["problem_id", "metric", "before", "after", "reduction_pct"]]
    sums = {m.value: [] for m in METRICS}
    for pid in sorted(before):
        for m in METRICS:
            b, a = before[pid].get(m), after[pid].get(m)
            if b is None or a is None:
                continue
            r = reduction_pct(b, a)
            sums[m.value].append(r)
            rows.append([pid, m.value, fmt_measure(b), fmt_measure(a), fmt3(r)])
    for m in METRICS:
        vals = sums[m.value]
        if vals:
            rows.append(["mean", m.value, "", "", fmt3(sum(vals) / len(vals))])
    return _csv(rows)


# ---------------------------------------------------------------- run report


@dataclass(frozen=True)
class ProblemRow:
    problem_id: str
    difficulty: str
    target: str | None
    n: int
    c: int
    best_e: dict[str, float | None]
    verdicts: dict[str, int]


def _breakdown_to_dict(b: Breakdown) -> dict:
    return {
        "n_problems": b.n_problems,
        "pass_at": {str(k): v for k, v in b.pass_at.items()},
        "pass_at_by_metric": {m: {str(k): v for k, v in d.items()} for m, d in b.pass_at_by_metric.items()},
        "eff_at": {m: {str(k): v for k, v in d.items()} for m, d in b.eff_at.items()},
        "scored": dict(b.scored),
    }


def _breakdown_from_dict(d: dict) -> Breakdown:
    return Breakdown(
        n_problems=d["n_problems"],
        pass_at={int(k): v for k, v in d["pass_at"].items()},
        pass_at_by_metric={m: {int(k): v for k, v in x.items()} for m, x in d["pass_at_by_metric"].items()},
        eff_at={m: {int(k): v for k, v in x.items()} for m, x in d["eff_at"].items()},
        scored=dict(d["scored"]),
    )


def scores_to_dict(s: SuiteScores) -> dict:
    return {
        "ks": list(s.ks),
        "overall": _breakdown_to_dict(s.overall),
        "by_difficulty": {k: _breakdown_to_dict(v) for k, v in sorted(s.by_difficulty.items())},
        "degenerate": {k: list(v) for k, v in s.degenerate.items()},
    }


def scores_from_dict(d: dict) -> SuiteScores:
    return SuiteScores(
        ks=tuple(d["ks"]),
        overall=_breakdown_from_dict(d["overall"]),
        by_difficulty={k: _breakdown_from_dict(v) for k, v in d["by_difficulty"].items()},
        degenerate={k: tuple(v) for k, v in d["degenerate"].items()},
    )


@dataclass(frozen=True)
class RunReport:
    run_id: str
    config: dict
    scores: SuiteScores
    problems: tuple[ProblemRow, ...]
    started_at: str = ""
    finished_at: str = ""
    notes: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "config": self.config,
            "scores": scores_to_dict(self.scores),
            "problems": [
                {"problem_id": p.problem_id, "difficulty": p.difficulty, "target": p.target, "n": p.n,
                 "c": p.c, "best_e": p.best_e, "verdicts": p.verdicts}
                for p in self.problems
            ],
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> RunReport:
        return cls(
            run_id=d["run_id"],
            config=d["config"],
            scores=scores_from_dict(d["scores"]),
            problems=tuple(ProblemRow(**p) for p in d["problems"]),
            started_at=d.get("started_at", ""),
            finished_at=d.get("finished_at", ""),
            notes=tuple(d.get("notes", ())),
        )

    @classmethod
    def from_json(cls, text: str) -> RunReport:
        return cls.from_dict(json.loads(text))


def render_markdown(r: RunReport) -> str:
    cfg = r.config
    lines = [f"# Run {r.run_id}", ""]
    for key in ("suite", "formulation", "model", "backend", "strategy", "simulator", "correctness",
                "threshold_policy", "clamp", "n", "power_assumptions"):
        if key in cfg:
            lines.append(f"- {key}: {cfg[key]}")
    lines += ["", "## Scores", "", emit_score_table(r.scores, Format.MARKDOWN, breakdown=True)]
    deg = {m: v for m, v in r.scores.degenerate.items() if v}
    if deg:
        lines += ["Degenerate thresholds (excluded from eff@k):", ""]
        lines += [f"- {m}: {', '.join(v)}" for m, v in sorted(deg.items())]
        lines.append("")
    header = ["problem", "difficulty", "target", "n", "c", *[f"best e {m.value}" for m in METRICS], "verdicts"]
    body = []
    for p in r.problems:
        hist = ", ".join(f"{k}={v}" for k, v in sorted(p.verdicts.items()))
        body.append([p.problem_id, p.difficulty, p.target or "", str(p.n), str(p.c),
                     *[fmt3(p.best_e.get(m.value)) for m in METRICS], hist])
    lines += ["## Problems", "", _markdown(header, body)]
    if r.notes:
        lines += ["## Notes", ""] + [f"- {n}" for n in r.notes] + [""]
    return "\n".join(lines)


def write_report_files(run_dir: str | Path, r: RunReport, table: Sequence[ScoreRow],
                       quadrant_k: int | None = None, splits: tuple[float, float] = (0.5, 0.5)) -> list[Path]:
    d = Path(run_dir)
    d.mkdir(parents=True, exist_ok=True)
    k = quadrant_k if quadrant_k is not None else r.scores.ks[0]
    files = {
        "scores.csv": emit_score_table(r.scores, Format.CSV, breakdown=True),
        "scores.json": r.to_json(),
        "report.md": render_markdown(r),
        "quadrant.csv": emit_quadrant_data(problem_points(table, k), k, *splits),
    }
    out = []
    for name, text in files.items():
        (d / name).write_text(text)
        out.append(d / name)
    return out
