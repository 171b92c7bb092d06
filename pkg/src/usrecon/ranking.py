"""Benchmark scoring and ranking statistics.

Per-scan min-max normalization of the four error metrics, final/composite
scores, aggregate-then-rank team ordering with runtime tie-break, bootstrap
rank-stability analysis, CLT sampling distribution of mean scores, Pearson
correlation, and paired t-test power / sample-size computation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DegenerateSignalError, InsufficientDataError, InvalidInputError
from .metrics import STATUS_FAILED, STATUS_OVERTIME, ScanMetricReport

RANGE_EPS = 1e-12

OVERTIME_KEEP = "keep"
OVERTIME_FAIL = "fail"


@dataclass(frozen=True)
class ScanScore:
    """Normalized metrics plus final and composite scores for one scan."""

    gpe_n: float
    gle_n: float
    lpe_n: float
    lle_n: float

    @property
    def fs(self) -> float:
        return 0.25 * (self.gpe_n + self.gle_n + self.lpe_n + self.lle_n)

    @property
    def gs(self) -> float:
        return 0.5 * (self.gpe_n + self.gle_n)

    @property
    def ls(self) -> float:
        return 0.5 * (self.lpe_n + self.lle_n)

    @property
    def ps(self) -> float:
        return 0.5 * (self.gpe_n + self.lpe_n)

    @property
    def lms(self) -> float:
        return 0.5 * (self.gle_n + self.lle_n)


@dataclass(frozen=True)
class LeaderboardEntry:
    team: str
    overall: float
    mean_gs: float
    mean_ls: float
    mean_ps: float
    mean_lms: float
    mean_runtime: float
    rank: int


@dataclass(frozen=True)
class BootstrapReport:
    """Relative rank frequencies per team over resampled tournaments."""

    teams: tuple
    rank_frequency: np.ndarray  # teams x ranks, rows sum to 1
    median_rank: np.ndarray
    resamples: int
    seed: int


@dataclass(frozen=True)
class CltEntry:
    team: str
    mean: float
    stderr: float


@dataclass(frozen=True)
class CltReport:
    entries: tuple


def normalize_metric(values, failed=None) -> np.ndarray:
    """Min-max normalize one scan's metric across teams: best 1.0, worst 0.0.

    Failed teams score 0 and are excluded from the min/max; when every
    non-failed team attains the same value all of them get 1.0.
    """
    values = np.asarray(values, dtype=float)
    failed = (
        np.zeros(len(values), dtype=bool) if failed is None else np.asarray(failed, dtype=bool)
    )
    if failed.shape != values.shape:
        raise InvalidInputError("values and failed flags must align")
    out = np.zeros(len(values))
    ok = ~failed
    if not np.any(ok):
        return out
    vmax = values[ok].max()
    vmin = values[ok].min()
    if vmax - vmin < RANGE_EPS:
        out[ok] = 1.0
    else:
        out[ok] = (vmax - values[ok]) / (vmax - vmin)
    return out


def scan_scores(
    reports: "dict[str, ScanMetricReport]", overtime_policy: str = OVERTIME_KEEP
) -> "dict[str, ScanScore]":
    """Normalized per-team scores for one scan.

    overtime_policy "keep" scores overtime scans from their metrics;
    "fail" demotes them to failed (score 0, excluded from min/max).
    """
    if overtime_policy not in (OVERTIME_KEEP, OVERTIME_FAIL):
        raise InvalidInputError(f"unknown overtime policy {overtime_policy!r}")
    teams = list(reports)
    failed = np.array(
        [
            reports[t].status == STATUS_FAILED
            or (overtime_policy == OVERTIME_FAIL and reports[t].status == STATUS_OVERTIME)
            for t in teams
        ]
    )
    norm = {}
    for attr in ("gpe", "gle", "lpe", "lle"):
        raw = np.array([getattr(reports[t], attr) if not failed[i] else 0.0 for i, t in enumerate(teams)])
        norm[attr] = normalize_metric(raw, failed)
    return {
        t: ScanScore(norm["gpe"][i], norm["gle"][i], norm["lpe"][i], norm["lle"][i])
        for i, t in enumerate(teams)
    }


def _rank_order(teams, overalls, runtimes):
    """Sort: rounded overall desc, runtime asc, team id asc; overall scores
    are compared at their reported three-decimal precision."""
    keyed = sorted(
        range(len(teams)),
        key=lambda i: (-round(overalls[i], 3), runtimes[i], teams[i]),
    )
    ranks = np.empty(len(teams), dtype=np.int64)
    for rank, i in enumerate(keyed, start=1):
        ranks[i] = rank
    return ranks


def rank_teams(
    scores_by_scan: "dict[str, dict[str, ScanScore]]",
    runtimes: "dict[str, float]",
) -> "list[LeaderboardEntry]":
    """Aggregate-then-rank: mean final score per team over all scans.

    Every team must have a score (possibly 0) for every scan; mean runtime
    breaks ties, then team id.
    """
    if not scores_by_scan:
        return []
    teams = sorted(runtimes)
    for scan, per_team in scores_by_scan.items():
        missing = set(teams) - set(per_team)
        if missing:
            raise InvalidInputError(f"scan {scan!r} lacks scores for teams {sorted(missing)}")
    scans = list(scores_by_scan)

    def mean_over_scans(team, attr):
        return float(np.mean([getattr(scores_by_scan[s][team], attr) for s in scans]))

    overalls = [mean_over_scans(t, "fs") for t in teams]
    rt = [float(runtimes[t]) for t in teams]
    ranks = _rank_order(teams, overalls, rt)
    entries = [
        LeaderboardEntry(
            team=t,
            overall=overalls[i],
            mean_gs=mean_over_scans(t, "gs"),
            mean_ls=mean_over_scans(t, "ls"),
            mean_ps=mean_over_scans(t, "ps"),
            mean_lms=mean_over_scans(t, "lms"),
            mean_runtime=rt[i],
            rank=int(ranks[i]),
        )
        for i, t in enumerate(teams)
    ]
    entries.sort(key=lambda e: e.rank)
    return entries


def bootstrap_ranks(
    fs_matrix,
    teams,
    resamples: int = 2000,
    seed: int = 0,
    runtimes=None,
) -> BootstrapReport:
    """Rank frequencies over tournaments resampled with replacement.

    Each resample draws scan indices with replacement (same count), recomputes
    team means and ranks them with the leaderboard rule. Resample r uses an
    independent generator keyed by (seed, r), so results do not depend on
    scheduling.
    """
    fs = np.atleast_2d(np.asarray(fs_matrix, dtype=float))
    teams = tuple(teams)
    n_teams, n_scans = fs.shape
    if len(teams) != n_teams:
        raise InvalidInputError("one row of final scores per team required")
    if n_scans < 1:
        raise InsufficientDataError("need at least one scan")
    rt = np.zeros(n_teams) if runtimes is None else np.asarray(runtimes, dtype=float)
    ranks = np.empty((resamples, n_teams), dtype=np.int64)
    for r in range(resamples):
        rng = np.random.default_rng((seed, r))
        idx = rng.integers(0, n_scans, size=n_scans)
        overalls = fs[:, idx].mean(axis=1)
        ranks[r] = _rank_order(teams, overalls, rt)
    freq = np.zeros((n_teams, n_teams))
    for t in range(n_teams):
        counts = np.bincount(ranks[:, t] - 1, minlength=n_teams)
        freq[t] = counts / resamples
    return BootstrapReport(
        teams=teams,
        rank_frequency=freq,
        median_rank=np.median(ranks, axis=0),
        resamples=resamples,
        seed=seed,
    )


def clt_distribution(scores_by_team: "dict[str, object]") -> CltReport:
    """Mean and standard error of the mean final score per team."""
    entries = []
    for team, values in scores_by_team.items():
        v = np.asarray(values, dtype=float)
        if v.size < 2:
            raise InsufficientDataError(f"team {team!r} needs >= 2 scores, got {v.size}")
        if np.all(v == v[0]):
            entries.append(CltEntry(team=team, mean=float(v[0]), stderr=0.0))
            continue
        entries.append(
            CltEntry(team=team, mean=float(v.mean()), stderr=float(v.std(ddof=1) / math.sqrt(v.size)))
        )
    return CltReport(entries=tuple(entries))


def pearson_r(x, y) -> float:
    """Sample Pearson correlation coefficient."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise InvalidInputError("pearson_r needs two equal-length vectors of size >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx < RANGE_EPS or syy < RANGE_EPS:
        raise DegenerateSignalError("pearson_r is undefined for a constant input")
    return float(dx @ dy) / math.sqrt(sxx * syy)


def paired_t_power(effect_size: float, n: int, alpha: float = 0.05, tail: str = "one") -> float:
    """Power of a paired t-test with df = n-1 and noncentrality d*sqrt(n)."""
    if tail not in ("one", "two"):
        raise InvalidInputError(f"tail must be 'one' or 'two', got {tail!r}")
    if n < 2:
        raise InvalidInputError("need n >= 2")
    df = n - 1
    nc = effect_size * math.sqrt(n)
    if tail == "one":
        crit = stats.t.ppf(1.0 - alpha, df)
        return float(1.0 - stats.nct.cdf(crit, df, nc))
    crit = stats.t.ppf(1.0 - alpha / 2.0, df)
    return float(1.0 - stats.nct.cdf(crit, df, nc) + stats.nct.cdf(-crit, df, nc))


def paired_t_sample_size(
    effect_size: float,
    alpha: float = 0.05,
    power: float = 0.9,
    tail: str = "one",
    max_n: int = 1_000_000,
) -> int:
    """Smallest n >= 2 whose paired t-test power meets the target."""
    if not effect_size > 0:
        raise InvalidInputError("effect size must be > 0 (no finite n otherwise)")
    if not (0 < alpha < 1 and 0 < power < 1):
        raise InvalidInputError("alpha and power must lie in (0, 1)")
    for n in range(2, max_n + 1):
        if paired_t_power(effect_size, n, alpha, tail) >= power:
            return n
    raise InvalidInputError(f"no n <= {max_n} reaches power {power}")
