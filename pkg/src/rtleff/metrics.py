"""Efficiency scores, pass@k and the unbiased eff@k estimator."""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from itertools import combinations
from statistics import fmean

from rtleff.errors import DegenerateThreshold, EmptySuite, InvalidK, TooLarge
from rtleff.types import METRICS, Metric, MetricVector

BRUTE_FORCE_LIMIT = 20


def efficiency_score(measured: float, T: float, R: float, correct: bool, clamp: bool = True) -> float:
    """Normalized closeness of ``measured`` to the reference ``R``.

    0 at or beyond the threshold ``T``, 1 at ``R``; incorrect samples score 0.
    """
    if not T > R:
        raise DegenerateThreshold(f"threshold T={T!r} must exceed reference R={R!r}")
    if not correct:
        return 0.0
    e = max(0.0, T - measured) / (T - R)
    return min(e, 1.0) if clamp else e


def _check_k(n: int, k: int) -> None:
    if not isinstance(k, int) or k < 1 or k > n:
        raise InvalidK(f"k={k!r} must satisfy 1 <= k <= n={n}")


def pass_at_k(n: int, c: int, k: int) -> float:
    """1 - C(n-c, k) / C(n, k), as a running product so large n never overflows."""
    _check_k(n, k)
    if not 0 <= c <= n:
        raise ValueError(f"c={c} must lie in [0, n={n}]")
    if n - c < k:
        return 1.0
    prod = 1.0
    for i in range(n - c + 1, n + 1):
        prod *= 1.0 - k / i
    return 1.0 - prod


def eff_at_k_single(e: Sequence[float], k: int) -> float:
    """Expected max of a uniformly random size-``k`` subset of ``e``.

    With ``e`` sorted ascending, the weight of ``e_(r)`` is C(r-1, k-1) / C(n, k).
    The weights are built from the top down: w_n = k/n and
    w_{r-1} = w_r (r-k) / (r-1).
    """
    n = len(e)
    _check_k(n, k)
    xs = sorted(float(x) for x in e)
    terms = []
    w = k / n
    for r in range(n, k - 1, -1):
        terms.append(w * xs[r - 1])
        if r > 1:
            w *= (r - k) / (r - 1)
    return math.fsum(terms)


def eff_at_k(e_lists: Iterable[Sequence[float]], k: int) -> float:
    """Suite mean of the per-problem estimator."""
    vals = [eff_at_k_single(e, k) for e in e_lists]
    if not vals:
        raise EmptySuite("no problems to score")
    return fmean(vals)


def eff_at_k_bruteforce(e: Sequence[float], k: int) -> float:
    """Average of max over every size-``k`` subset. Test oracle only."""
    n = len(e)
    if n > BRUTE_FORCE_LIMIT:
        raise TooLarge(f"n={n} exceeds enumeration limit {BRUTE_FORCE_LIMIT}")
    _check_k(n, k)
    maxima = [max(sub) for sub in combinations([float(x) for x in e], k)]
    return math.fsum(maxima) / len(maxima)


# ---------------------------------------------------------------- tables


@dataclass(frozen=True)
class EffThresholds:
    T: MetricVector
    R: MetricVector
    clamp_to_unit: bool = True

    def degenerate(self, m: Metric | str) -> bool:
        t, r = self.T.get(m), self.R.get(m)
        return t is None or r is None or not t > r


@dataclass(frozen=True)
class SampleScore:
    problem_id: str
    sample_index: int
    correct: bool
    measured: MetricVector | None
    e: dict[str, float] = field(default_factory=dict)
    raw: dict[str, float] = field(default_factory=dict)  # unclamped ratios


def score_sample(problem_id: str, j: int, correct: bool, measured: MetricVector | None,
                 th: EffThresholds, metrics: Iterable[Metric] = METRICS) -> SampleScore:
    e: dict[str, float] = {}
    raw: dict[str, float] = {}
    for m in metrics:
        if th.degenerate(m):
            continue
        value = measured.get(m) if measured is not None else None
        ok = correct and value is not None
        T, R = th.T.get(m), th.R.get(m)
        raw[m.value] = efficiency_score(value, T, R, ok, clamp=False) if ok else 0.0
        e[m.value] = efficiency_score(value, T, R, ok, clamp=th.clamp_to_unit) if ok else 0.0
    return SampleScore(problem_id, j, correct, measured, e, raw)


@dataclass(frozen=True)
class ScoreRow:
    """Scores of one generation run on one problem.

    ``e`` maps a metric name to its length-``n`` e-list, or to ``None`` when
    the thresholds for that metric are degenerate. ``target`` names the
    metric the run was asked to optimize (``None`` for untargeted rows).
    """

    problem_id: str
    difficulty: str
    n: int
    c: int
    e: Mapping[str, tuple[float, ...] | None]
    target: str | None = None

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"{self.problem_id}: n must be >= 1")
        if not 0 <= self.c <= self.n:
            raise ValueError(f"{self.problem_id}: c={self.c} outside [0, {self.n}]")
        for m, lst in self.e.items():
            Metric.parse(m)
            if lst is None:
                continue
            if len(lst) != self.n:
                raise ValueError(f"{self.problem_id}/{m}: e-list has {len(lst)} entries, n={self.n}")
            if sum(1 for x in lst if x > 0) > self.c:
                raise ValueError(f"{self.problem_id}/{m}: more positive scores than correct samples")


ScoreTable = Sequence[ScoreRow]


@dataclass(frozen=True)
class Breakdown:
    n_problems: int
    pass_at: dict[int, float]
    pass_at_by_metric: dict[str, dict[int, float | None]]
    eff_at: dict[str, dict[int, float | None]]
    scored: dict[str, int]  # problems contributing to each metric


@dataclass(frozen=True)
class SuiteScores:
    ks: tuple[int, ...]
    overall: Breakdown
    by_difficulty: dict[str, Breakdown]
    degenerate: dict[str, tuple[str, ...]]

    @property
    def pass_at(self) -> dict[int, float]:
        return self.overall.pass_at

    @property
    def eff_at(self) -> dict[str, dict[int, float | None]]:
        return self.overall.eff_at


def _breakdown(rows: Sequence[ScoreRow], ks: Sequence[int]) -> Breakdown:
    by_problem: dict[str, list[ScoreRow]] = {}
    for r in rows:
        by_problem.setdefault(r.problem_id, []).append(r)
    pids = sorted(by_problem)
    pass_at = {k: fmean(fmean(pass_at_k(r.n, r.c, k) for r in by_problem[p]) for p in pids) for k in ks}
    eff: dict[str, dict[int, float | None]] = {}
    pass_m: dict[str, dict[int, float | None]] = {}
    scored: dict[str, int] = {}
    for m in METRICS:
        per_problem = {
            p: [r for r in by_problem[p] if r.e.get(m.value) is not None] for p in pids
        }
        per_problem = {p: rs for p, rs in per_problem.items() if rs}
        scored[m.value] = len(per_problem)
        if not per_problem:
            eff[m.value] = {k: None for k in ks}
            pass_m[m.value] = {k: None for k in ks}
            continue
        eff[m.value] = {
            k: fmean(fmean(eff_at_k_single(r.e[m.value], k) for r in rs) for rs in per_problem.values())
            for k in ks
        }
        pass_m[m.value] = {
            k: fmean(fmean(pass_at_k(r.n, r.c, k) for r in rs) for rs in per_problem.values())
            for k in ks
        }
    return Breakdown(len(pids), pass_at, pass_m, eff, scored)


def score_suite(table: ScoreTable, ks: Sequence[int]) -> SuiteScores:
    """pass@k and eff@k per metric, overall and per difficulty label.

    A problem's pass@k is the mean over its rows (one row per target run).
    eff@k for metric m averages, over problems, the estimator applied to each
    row that carries an e-list for m. Degenerate metrics are left out and
    listed in ``degenerate``.
    """
    rows = list(table)
    if not rows:
        raise EmptySuite("score table is empty")
    ks = tuple(dict.fromkeys(ks))
    if not ks:
        raise InvalidK("no k values requested")
    n_min = min(r.n for r in rows)
    for k in ks:
        _check_k(n_min, k)
    degenerate = {
        m.value: tuple(sorted({r.problem_id for r in rows if m.value in r.e and r.e[m.value] is None}))
        for m in METRICS
    }
    levels = sorted({r.difficulty for r in rows})
    return SuiteScores(
        ks=ks,
        overall=_breakdown(rows, ks),
        by_difficulty={d: _breakdown([r for r in rows if r.difficulty == d], ks) for d in levels},
        degenerate=degenerate,
    )
