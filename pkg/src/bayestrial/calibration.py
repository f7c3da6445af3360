"""Searching design parameters against frequentist and Bayesian targets."""

from dataclasses import dataclass
import math

import numpy as np

from .engine import (SUCCESS, Scenario, bayesian_oc, boundary_tables, decision_tables,
                     exact_oc, propagate)
from .exceptions import CalibrationError
from .rules import ONE_ARM
from .settings import DEFAULTS


@dataclass(frozen=True)
class CalibrationProblem:
    """Find the smallest posterior cutoff whose exact Type I error is at most ``alpha``."""

    design: object
    null_scenario: Scenario
    alpha: float
    cutoff_grid_step: float = DEFAULTS.cutoff_step

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0.0 < self.cutoff_grid_step < 0.5:
            raise ValueError("cutoff_grid_step must lie in (0, 0.5)")

    def grid_value(self, i):
        return round(i * self.cutoff_grid_step, 12)

    @property
    def grid_size(self):
        return int(round(1.0 / self.cutoff_grid_step)) - 1


@dataclass(frozen=True)
class CutoffCertificate:
    cutoff: float
    type_one_error: float
    previous_cutoff: float
    previous_type_one_error: float
    alpha: float
    critical_counts: tuple

    def to_dict(self):
        return {
            "cutoff": self.cutoff,
            "type_one_error": self.type_one_error,
            "previous_cutoff": self.previous_cutoff,
            "previous_type_one_error": self.previous_type_one_error,
            "alpha": self.alpha,
            "critical_counts": [list(c) if isinstance(c, tuple) else c
                                for c in self.critical_counts],
        }


def rejection_region(design):
    """Per-look critical counts: y* for one arm, the y_t threshold per y_c for two arms."""
    out = []
    for k, codes in enumerate(decision_tables(design)):
        hit = codes == SUCCESS
        if design.success.comparison == ONE_ARM:
            idx = np.flatnonzero(hit)
            out.append(int(idx[0]) if idx.size else design.sizes[0][k] + 1)
        else:
            nt = design.sizes[0][k]
            thr = []
            for col in hit.T:
                idx = np.flatnonzero(col)
                thr.append(int(idx[0]) if idx.size else nt + 1)
            out.append(tuple(thr))
    return tuple(out)


def _region_empty(design):
    return not any((codes == SUCCESS).any() for codes in decision_tables(design))


def type_one_error(design, null_scenario, cutoff):
    return exact_oc(design.with_cutoff(cutoff), null_scenario).reject_prob


def calibrate_cutoff(problem):
    """Bisect the cutoff grid for the smallest c with TypeI(c) <= alpha.

    Raising c shrinks every look's rejection region, so TypeI is
    non-increasing along the grid. A cutoff whose rejection region is empty
    at every look does not count as calibrated.
    """
    alpha = problem.alpha
    typei = {}

    def t1(i):
        if i not in typei:
            typei[i] = type_one_error(problem.design, problem.null_scenario, problem.grid_value(i))
        return typei[i]

    lo, hi = 1, problem.grid_size
    if t1(hi) > alpha:
        raise CalibrationError("alpha unattainable: even the largest grid cutoff overspends",
                               best=(problem.grid_value(hi), t1(hi)))
    if t1(lo) <= alpha:
        hi = lo
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if t1(mid) <= alpha:
            hi = mid
        else:
            lo = mid
    c = problem.grid_value(hi)
    calibrated = problem.design.with_cutoff(c)
    if _region_empty(calibrated):
        raise CalibrationError("alpha unattainable: only an empty rejection region meets alpha",
                               best=(c, t1(hi)))
    prev_c = prev_t = None
    if hi > 1:
        prev_c, prev_t = problem.grid_value(hi - 1), t1(hi - 1)
    return CutoffCertificate(c, t1(hi), prev_c, prev_t, alpha, rejection_region(calibrated))


@dataclass(frozen=True)
class AssuranceProblem:
    """Search a one-parameter design family for a target assurance.

    ``design_for(value)`` builds the design; ``parameter`` is ``"n"``
    (smallest value meeting the target) or ``"cutoff"`` (largest value).
    """

    design_for: object
    dprior: object
    target: float
    values: tuple
    parameter: str = "n"
    mode: str = "exact"
    replicates: int = 10_000
    master_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.target <= 1.0:
            raise ValueError("target must lie in (0, 1]")
        if self.parameter not in ("n", "cutoff"):
            raise ValueError("parameter must be 'n' or 'cutoff'")
        vals = tuple(sorted(self.values))
        if not vals:
            raise ValueError("values must not be empty")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class AssuranceResult:
    parameter: str
    value: float
    assurance: float
    neighbour: float
    neighbour_assurance: float
    monotone: bool

    def to_dict(self):
        return dict(self.__dict__)


def calibrate_assurance(problem):
    """Smallest n (or largest cutoff) whose assurance reaches the target."""
    cache = {}

    def assure(v):
        if v not in cache:
            rep = bayesian_oc(problem.design_for(v), problem.dprior, problem.mode,
                              problem.replicates, problem.master_seed)
            cache[v] = rep.assurance
        return cache[v]

    vals = problem.values
    if problem.parameter == "n":
        prev = None
        monotone = True
        for v in vals:
            a = assure(v)
            if prev is not None and a < cache[prev] - 1e-12:
                monotone = False
            if a >= problem.target:
                nb = prev if prev is not None else None
                return AssuranceResult("n", v, a, nb, None if nb is None else cache[nb], monotone)
            prev = v
        best = max(vals, key=lambda v: cache[v])
        raise CalibrationError(
            f"assurance target {problem.target} unattainable; best {cache[best]:.6g} at n={best}",
            best=(best, cache[best]))
    # assurance is non-increasing in the cutoff: bisect for the last value meeting the target
    lo, hi = 0, len(vals) - 1
    if assure(vals[lo]) < problem.target:
        raise CalibrationError(
            f"assurance target {problem.target} unattainable; best {cache[vals[lo]]:.6g} "
            f"at cutoff={vals[lo]}", best=(vals[lo], cache[vals[lo]]))
    if assure(vals[hi]) >= problem.target:
        lo = hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if assure(vals[mid]) >= problem.target:
            lo = mid
        else:
            hi = mid
    nb = vals[lo + 1] if lo + 1 < len(vals) else None
    ordered = [cache[v] for v in vals if v in cache]
    monotone = all(b <= a + 1e-12 for a, b in zip(ordered, ordered[1:]))
    return AssuranceResult("cutoff", vals[lo], cache[vals[lo]], nb,
                           None if nb is None else assure(nb), monotone)


@dataclass(frozen=True)
class GsBoundaries:
    schedule: tuple
    critical_counts: tuple
    cumulative_rejection: tuple
    spending_limits: tuple
    type_one_error: float

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def _cumulative_rejection(schedule, critical, rate):
    succ, _ = propagate((tuple(schedule),), boundary_tables(schedule, critical), Scenario((rate,)))
    return math.fsum(succ)


def exact_gs_boundaries(schedule, alpha, spending_fractions, null_rate):
    """Greedy exact group-sequential efficacy boundaries for one arm.

    At look k the smallest critical count is chosen whose exact cumulative
    rejection probability under ``null_rate`` stays within
    ``alpha * spending_fractions[k]``. An interim count of ``n_k + 1``
    means no efficacy stop at that look; the final look must have a
    reachable boundary.
    """
    schedule = tuple(int(n) for n in schedule)
    fr = tuple(float(f) for f in spending_fractions)
    if len(fr) != len(schedule):
        raise ValueError("one spending fraction per look required")
    if any(b < a for a, b in zip(fr, fr[1:])) or abs(fr[-1] - 1.0) > 1e-12 or fr[0] < 0:
        raise ValueError("spending fractions must be non-decreasing and end at 1")
    if any(b <= a for a, b in zip(schedule, schedule[1:])) or schedule[0] < 1:
        raise ValueError("schedule must be positive and strictly increasing")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    critical = []
    cumulative = []
    limits = []
    for k, n in enumerate(schedule):
        limit = alpha * fr[k]
        sub = schedule[:k + 1]
        lo, hi = 0, n + 1   # smallest b in [lo, hi] meeting the limit; hi always meets it
        while lo < hi:
            mid = (lo + hi) // 2
            if _cumulative_rejection(sub, tuple(critical) + (mid,), null_rate) <= limit:
                hi = mid
            else:
                lo = mid + 1
        if k == len(schedule) - 1 and lo > n:
            raise CalibrationError(
                f"infeasible spending at look {k}: even y >= {n} overspends {limit:.6g}",
                best=tuple(critical))
        critical.append(lo)
        cumulative.append(_cumulative_rejection(sub, tuple(critical), null_rate))
        limits.append(limit)
    return GsBoundaries(schedule, tuple(critical), tuple(cumulative), tuple(limits), cumulative[-1])
