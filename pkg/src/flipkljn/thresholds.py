"""Numerical tuning of the decision thresholds.

The optimum has no closed form, so thresholds are found by a coarse grid over
the feasible box ``(1, m) x (m, alpha)`` with ``m = 2a/(1+a)`` followed by
rounds of local refinement, each halving the search cell around the incumbent.

Two objectives are available: the analytic total error probability of the
voltage chain, and a simulated matched-state detection error rate for either
channel. Minimizing the matched-state rate also minimizes the Flip-KLJN total,
since the latter is increasing in it.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import analytics
from .exceptions import DomainError
from .noise import Channel, derive_rng, sample_gram_statistics
from .protocol import DetectorKind, ThresholdSet

log = logging.getLogger(__name__)

BOX_INSET = 1e-3
GRID_SIZE = 32
REFINE_POINTS = 9
REFINE_ROUNDS = 8
DEFAULT_TRIALS = 400_000


class Objective(enum.Enum):
    ANALYTIC = "analytic"
    SIMULATED = "simulated"


@dataclass(frozen=True)
class OptimizationProblem:
    alpha: float
    N: int
    objective: Objective = Objective.ANALYTIC
    channel: Channel = Channel.VOLTAGE
    trials: int = DEFAULT_TRIALS
    seed: int = 0

    def box(self) -> tuple[tuple[float, float], tuple[float, float]]:
        if not self.alpha > 1:
            raise DomainError(f"alpha={self.alpha} leaves an empty feasible box")
        if self.N < 1:
            raise DomainError(f"N={self.N} must be positive")
        m = analytics.intermediate_ratio(self.alpha)
        return (
            (1.0 * (1 + BOX_INSET), m * (1 - BOX_INSET)),
            (m * (1 + BOX_INSET), self.alpha * (1 - BOX_INSET)),
        )


@dataclass
class OptimizationResult:
    lower: float
    upper: float
    objective_value: float
    evaluations: int
    trace: list[tuple[int, float, float, float]] = field(default_factory=list)
    channel: Channel = Channel.VOLTAGE

    # Names for the voltage (beta, kappa) and current (eta, xi) readings.
    @property
    def beta_star(self) -> float:
        return self.lower

    @property
    def kappa_star(self) -> float:
        return self.upper

    @property
    def eta_star(self) -> float:
        return self.lower

    @property
    def xi_star(self) -> float:
        return self.upper


def grid_refine(
    f: Callable[[float, float], float],
    box: tuple[tuple[float, float], tuple[float, float]],
    grid: int = GRID_SIZE,
    points: int = REFINE_POINTS,
    rounds: int = REFINE_ROUNDS,
) -> OptimizationResult:
    """Minimize ``f`` over ``box`` by grid search plus halving refinement.

    The box midpoint is always evaluated. Candidates outside the box are
    dropped before evaluation. Ties keep the earliest point, so the search is
    deterministic.
    """
    (x0, x1), (y0, y1) = box
    cache: dict[tuple[float, float], float] = {}
    trace = []

    def evaluate(x, y, stage):
        key = (float(x), float(y))
        if key not in cache:
            cache[key] = float(f(*key))
            trace.append((stage, key[0], key[1], cache[key]))
        return cache[key]

    best = ((x0 + x1) / 2, (y0 + y1) / 2)
    best_val = evaluate(*best, 0)
    for x in np.linspace(x0, x1, grid):
        for y in np.linspace(y0, y1, grid):
            v = evaluate(x, y, 0)
            if v < best_val:
                best, best_val = (float(x), float(y)), v
    hx, hy = (x1 - x0) / (grid - 1), (y1 - y0) / (grid - 1)
    for r in range(1, rounds + 1):
        cx, cy = best
        for x in np.linspace(cx - hx, cx + hx, points):
            if not x0 <= x <= x1:
                continue
            for y in np.linspace(cy - hy, cy + hy, points):
                if not y0 <= y <= y1:
                    continue
                v = evaluate(x, y, r)
                if v < best_val:
                    best, best_val = (float(x), float(y)), v
        hx, hy = hx / 2, hy / 2
    return OptimizationResult(best[0], best[1], best_val, len(cache), trace)


class MatchedErrorObjective:
    """Simulated matched-state detection error rate of one channel.

    Draws ``trials`` exchanges once (common random numbers for all candidate
    thresholds) with uniform bits and matched Normal states, on ideal
    channels. Each party's decision depends on a single threshold chosen by
    its own resistor, so the error count splits into a lower-threshold part
    and an upper-threshold part, each evaluated by binary search over sorted
    normalized estimates.
    """

    def __init__(self, alpha: float, N: int, channel: Channel, trials: int, seed: int):
        m = analytics.intermediate_ratio(alpha)
        rng_bits = derive_rng(seed, 0)
        rng_stats = derive_rng(seed, 1)
        b = rng_bits.integers(0, 2, size=(2, trials))
        g = sample_gram_statistics(N, 0, trials, rng_stats).signal
        pair_sum = b[0] + b[1]
        self.trials = trials
        # Normalized levels: voltage LL/LH/HH -> 1/m/a, current HH/LH/LL -> 1/m/a.
        if channel is Channel.VOLTAGE:
            low_own = b == 0  # own L compares against the lower threshold
            level = np.array([1.0, m, alpha])[pair_sum]
        else:
            low_own = b == 1  # own H sees the lowest current level
            level = np.array([alpha, m, 1.0])[pair_sum]
        est = level * g
        # Each party observation is an error when it lands on the wrong side.
        # For the low-threshold party the lowest level is correct below, m above.
        lo_obs = [est[low_own[p]] for p in range(2)]
        hi_obs = [est[~low_own[p]] for p in range(2)]
        lo_est = np.concatenate(lo_obs)
        hi_est = np.concatenate(hi_obs)
        lo_lvl = np.concatenate([level[low_own[p]] for p in range(2)])
        hi_lvl = np.concatenate([level[~low_own[p]] for p in range(2)])
        self._lo_bottom = np.sort(lo_est[lo_lvl == 1.0])  # error if >= t
        self._lo_mid = np.sort(lo_est[lo_lvl != 1.0])  # error if < t
        self._hi_mid = np.sort(hi_est[hi_lvl != alpha])  # error if >= t
        self._hi_top = np.sort(hi_est[hi_lvl == alpha])  # error if < t

    def errors(self, lower: float, upper: float) -> int:
        e = len(self._lo_bottom) - np.searchsorted(self._lo_bottom, lower, side="left")
        e += np.searchsorted(self._lo_mid, lower, side="left")
        e += len(self._hi_mid) - np.searchsorted(self._hi_mid, upper, side="left")
        e += np.searchsorted(self._hi_top, upper, side="left")
        return int(e)

    def __call__(self, lower: float, upper: float) -> float:
        return self.errors(lower, upper) / (2.0 * self.trials)


def _objective(problem: OptimizationProblem):
    if problem.objective is Objective.ANALYTIC:
        return lambda b, k: float(analytics.pb_surface(problem.alpha, b, k, problem.N))
    return MatchedErrorObjective(problem.alpha, problem.N, problem.channel, problem.trials, problem.seed)


def optimize_voltage_thresholds(problem: OptimizationProblem) -> OptimizationResult:
    if problem.channel is not Channel.VOLTAGE:
        problem = OptimizationProblem(problem.alpha, problem.N, problem.objective, Channel.VOLTAGE, problem.trials, problem.seed)
    res = grid_refine(_objective(problem), problem.box())
    res.channel = Channel.VOLTAGE
    return res


def optimize_current_thresholds(problem: OptimizationProblem) -> OptimizationResult:
    """Mirror of the voltage search for (eta, xi); always simulated."""
    problem = OptimizationProblem(problem.alpha, problem.N, Objective.SIMULATED, Channel.CURRENT, problem.trials, problem.seed)
    res = grid_refine(_objective(problem), problem.box())
    res.channel = Channel.CURRENT
    return res


CACHE_COLUMNS = ["alpha", "N", "detector", "beta", "kappa", "eta", "xi", "objective"]


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


class ThresholdCache:
    """Plain-text table of tuned thresholds keyed by (alpha, N, detector)."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.rows: dict[tuple[float, int, str], dict] = {}
        if self.path is not None and self.path.exists():
            with self.path.open(newline="") as fh:
                for row in csv.DictReader(fh):
                    self.rows[(float(row["alpha"]), int(row["N"]), row["detector"])] = row

    def get(self, alpha: float, N: int, detector: DetectorKind) -> ThresholdSet | None:
        row = self.rows.get((float(alpha), int(N), detector.value))
        if row is None:
            return None
        f = lambda s: float(s) if s not in ("", None) else None
        return ThresholdSet(f(row["beta"]), f(row["kappa"]), f(row["eta"]), f(row["xi"]))

    def put(self, alpha: float, N: int, detector: DetectorKind, th: ThresholdSet, objective: float) -> None:
        self.rows[(float(alpha), int(N), detector.value)] = {
            "alpha": _fmt(alpha),
            "N": str(int(N)),
            "detector": detector.value,
            "beta": _fmt(th.beta),
            "kappa": _fmt(th.kappa),
            "eta": _fmt(th.eta),
            "xi": _fmt(th.xi),
            "objective": _fmt(objective),
        }
        if self.path is not None:
            self.save()

    def save(self) -> None:
        with self.path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CACHE_COLUMNS, lineterminator="\n")
            w.writeheader()
            for key in sorted(self.rows):
                w.writerow(self.rows[key])


def resolve_thresholds(
    alpha: float,
    N: int,
    detector: DetectorKind,
    cache: ThresholdCache | None = None,
    trials: int = DEFAULT_TRIALS,
    seed: int = 0,
) -> ThresholdSet:
    """Tuned thresholds for a detector, from the cache or computed on a miss.

    Channels are tuned independently: (beta, kappa) on the analytic voltage
    objective and, for detectors reading the current, (eta, xi) on the
    simulated current objective.
    """
    if cache is not None:
        hit = cache.get(alpha, N, detector)
        if hit is not None:
            return hit
    v = optimize_voltage_thresholds(OptimizationProblem(alpha, N))
    th = ThresholdSet(v.beta_star, v.kappa_star)
    objective = v.objective_value
    if detector.uses_current:
        c = optimize_current_thresholds(OptimizationProblem(alpha, N, trials=trials, seed=seed))
        th = ThresholdSet(v.beta_star, v.kappa_star, c.eta_star, c.xi_star)
        if detector is DetectorKind.CURRENT_ONLY:
            objective = c.objective_value
    log.debug("resolved thresholds alpha=%s N=%s %s -> %s", alpha, N, detector.value, th)
    if cache is not None:
        cache.put(alpha, N, detector, th, objective)
    return th
