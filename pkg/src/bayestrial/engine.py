"""Operating characteristics of sequential binary-endpoint designs.

Three routes share one set of per-look decision tables:

* ``exact_oc`` propagates exact state probabilities look by look,
* ``monte_carlo_oc`` simulates replicates with counter-based uniforms and
  tallies integer counts, so any split across workers gives the same report,
* ``simulate_trial`` replays one replicate through ``evaluate_interim``
  directly, which keeps the tables honest.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
import math

import numpy as np

from .exceptions import BudgetExceededError
from .probability import BetaParams
from .rng import uniforms
from .rules import (ONE_ARM, Decision, FutilityRule, InterimState, Monitoring,
                    SuccessRule, evaluate_interim, one_arm_evidence_table, ppos,
                    two_arm_thresholds)
from .settings import DEFAULTS
from .special import binomial_pmf

CONTINUE, SUCCESS, FAILURE = 0, 1, 2


@dataclass(frozen=True)
class TrialDesign:
    """A pre-specified sequential design.

    ``sizes[arm][look]`` is the cumulative sample size of ``arm`` (treatment
    first, then control) at ``look``; ``priors[arm]`` is that arm's analysis
    prior (Beta, Beta mixture or grid).
    """

    sizes: tuple
    priors: tuple
    success: SuccessRule
    futility: FutilityRule = None
    monitoring: Monitoring = Monitoring()

    def __post_init__(self):
        sizes = tuple(tuple(int(v) for v in s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "priors", tuple(self.priors))
        arms = self.success.arms
        if len(sizes) != arms or len(self.priors) != arms:
            raise ValueError(f"{self.success.comparison} design needs {arms} arm(s) of sizes and priors")
        looks = {len(s) for s in sizes}
        if len(looks) != 1 or 0 in looks:
            raise ValueError("every arm needs the same, non-zero number of looks")
        for s in sizes:
            if s[0] < 1 or any(b <= a for a, b in zip(s, s[1:])):
                raise ValueError("cumulative sizes must be positive and strictly increasing")

    @property
    def arms(self):
        return len(self.sizes)

    @property
    def looks(self):
        return len(self.sizes[0])

    @property
    def final_sizes(self):
        return tuple(s[-1] for s in self.sizes)

    def with_cutoff(self, cutoff):
        return replace(self, success=self.success.with_cutoff(cutoff))


@dataclass(frozen=True)
class Scenario:
    """True response rates per arm; ``drift`` adds a per-look offset to the control rate."""

    rates: tuple
    drift: tuple = None
    label: str = ""

    def __post_init__(self):
        rates = tuple(float(r) for r in self.rates)
        if not rates or any(not 0.0 <= r <= 1.0 for r in rates):
            raise ValueError("true rates must lie in [0, 1]")
        object.__setattr__(self, "rates", rates)
        if self.drift is not None:
            if len(rates) < 2:
                raise ValueError("drift applies to a control arm; one-arm scenarios have none")
            object.__setattr__(self, "drift", tuple(float(d) for d in self.drift))

    def rate(self, arm, look):
        r = self.rates[arm]
        if arm == 1 and self.drift is not None:
            r = min(1.0, max(0.0, r + self.drift[look]))
        return r

    def effect(self):
        return self.rates[0] if len(self.rates) == 1 else self.rates[0] - self.rates[1]


@dataclass(frozen=True)
class DesignPrior:
    """Weighted scenarios used to average operating characteristics."""

    atoms: tuple

    def __post_init__(self):
        atoms = tuple((float(w), s) for w, s in self.atoms)
        if not atoms or any(w < 0 for w, _ in atoms):
            raise ValueError("design prior needs non-negative weights")
        if abs(math.fsum(w for w, _ in atoms) - 1.0) > 1e-10:
            raise ValueError("design prior weights must sum to 1")
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def point(cls, scenario):
        return cls(((1.0, scenario),))

    @classmethod
    def from_beta(cls, prior, control_rate=None, grid_size=DEFAULTS.design_prior_grid):
        """Discretize a Beta prior on the treatment rate into equal-width cells.

        Each atom sits at its cell midpoint with the exact cell probability.
        """
        edges = np.linspace(0.0, 1.0, grid_size + 1)
        cdf = np.asarray(prior.cdf(edges), float)
        cdf[0], cdf[-1] = 0.0, 1.0
        w = np.diff(cdf)
        w[np.argmax(w)] += 1.0 - math.fsum(w)
        mids = (edges[:-1] + edges[1:]) / 2
        atoms = []
        for wi, t in zip(w, mids):
            rates = (t,) if control_rate is None else (t, control_rate)
            atoms.append((wi, Scenario(rates, label=f"{t:.6g}")))
        return cls(tuple(atoms))


@dataclass(frozen=True)
class OCReport:
    """Operating characteristics of a design under one scenario or design prior.

    ``success_by_look`` and ``failure_by_look`` hold the probability of
    ending the trial at each look with (or without) success; at the final
    look they are the final-analysis verdicts, so together they sum to 1.
    """

    mode: str
    reject_prob: float
    success_by_look: tuple
    failure_by_look: tuple
    expected_sample_size: tuple
    assurance: float = None
    pcd: float = None
    replicates: int = None
    standard_errors: dict = field(default=None, compare=True, hash=False)
    label: str = ""

    def to_dict(self):
        out = {
            "label": self.label,
            "mode": self.mode,
            "reject_prob": self.reject_prob,
            "success_by_look": list(self.success_by_look),
            "failure_by_look": list(self.failure_by_look),
            "expected_sample_size": list(self.expected_sample_size),
        }
        if self.assurance is not None:
            out["assurance"] = self.assurance
            out["pcd"] = self.pcd
        if self.mode == "monte-carlo":
            out["replicates"] = self.replicates
            out["standard_errors"] = self.standard_errors
        return out


@dataclass(frozen=True)
class TrialResult:
    decision: Decision
    stop_look: int
    enrolled: tuple
    evidence: float


# --- decision tables ------------------------------------------------------------

def _one_arm_ppos_vector(design, look):
    n = design.sizes[0][look]
    sched = design.sizes
    return np.array([ppos(InterimState(((y, n),), look, sched), design.priors, design.success)
                     for y in range(n + 1)])


def _two_arm_ppos_matrix(design, look):
    nt, nc = design.sizes[0][look], design.sizes[1][look]
    out = np.empty((nt + 1, nc + 1))
    for yt in range(nt + 1):
        for yc in range(nc + 1):
            st = InterimState(((yt, nt), (yc, nc)), look, design.sizes)
            out[yt, yc] = ppos(st, design.priors, design.success)
    return out


@lru_cache(maxsize=256)
def decision_tables(design):
    """Per-look arrays of CONTINUE / SUCCESS / FAILURE codes over success counts.

    One-arm tables are indexed by y; two-arm tables by (y_treatment, y_control).
    The logic mirrors ``evaluate_interim`` (efficacy before futility).
    """
    rule = design.success
    a = float(rule.effect_threshold)
    mon = design.monitoring
    tables = []
    for k in range(design.looks):
        final = k == design.looks - 1
        if rule.comparison == ONE_ARM:
            n = design.sizes[0][k]
            codes = np.zeros(n + 1, dtype=np.int8)
            ev = one_arm_evidence_table(design.priors[0], n, a)
            if final:
                codes[:] = np.where(ev >= rule.posterior_cutoff, SUCCESS, FAILURE)
            else:
                pp = None
                if mon.kind == "posterior":
                    cut = rule.posterior_cutoff if mon.cutoff is None else mon.cutoff
                    eff = ev >= cut
                elif mon.kind == "ppos":
                    pp = _one_arm_ppos_vector(design, k)
                    eff = pp >= mon.cutoff
                else:
                    eff = np.zeros(n + 1, dtype=bool)
                codes[eff] = SUCCESS
                if design.futility is not None:
                    if pp is None:
                        pp = _one_arm_ppos_vector(design, k)
                    codes[~eff & (pp < design.futility.ppos_cutoff)] = FAILURE
        else:
            nt, nc = design.sizes[0][k], design.sizes[1][k]
            yt = np.arange(nt + 1)[:, None]
            codes = np.zeros((nt + 1, nc + 1), dtype=np.int8)
            if final:
                thr = two_arm_thresholds(design.priors, nt, nc, a, float(rule.posterior_cutoff))
                codes[:] = np.where(yt >= thr[None, :], SUCCESS, FAILURE)
            else:
                pp = None
                if mon.kind == "posterior":
                    cut = rule.posterior_cutoff if mon.cutoff is None else mon.cutoff
                    thr = two_arm_thresholds(design.priors, nt, nc, a, float(cut))
                    eff = yt >= thr[None, :]
                elif mon.kind == "ppos":
                    pp = _two_arm_ppos_matrix(design, k)
                    eff = pp >= mon.cutoff
                else:
                    eff = np.zeros((nt + 1, nc + 1), dtype=bool)
                codes[eff] = SUCCESS
                if design.futility is not None:
                    if pp is None:
                        pp = _two_arm_ppos_matrix(design, k)
                    codes[~eff & (pp < design.futility.ppos_cutoff)] = FAILURE
        codes.setflags(write=False)
        tables.append(codes)
    return tuple(tables)


# --- exact dynamic programming ---------------------------------------------------

def check_exact_budget(design):
    s = DEFAULTS
    if design.arms == 1:
        if design.final_sizes[0] > s.exact_one_arm_max_n:
            raise BudgetExceededError(
                f"exact one-arm DP supports final n <= {s.exact_one_arm_max_n}; "
                "use monte_carlo_oc")
    else:
        nt, nc = design.final_sizes
        if max(nt, nc) > s.exact_two_arm_max_n or (nt + 1) * (nc + 1) > s.exact_cell_budget:
            raise BudgetExceededError(
                f"exact two-arm DP supports per-arm final n <= {s.exact_two_arm_max_n}; "
                "use monte_carlo_oc")


def _transition(n_old, inc, p):
    pmf = binomial_pmf(inc, p)
    t = np.zeros((n_old + inc + 1, n_old + 1))
    for j in range(n_old + 1):
        t[j:j + inc + 1, j] = pmf
    return t


def propagate(sizes, tables, scenario):
    """Exact probability of stopping with success / failure at each look."""
    arms = len(sizes)
    succ, fail = [], []
    if arms == 1:
        probs = np.array([1.0])
        prev = 0
        for k, n in enumerate(sizes[0]):
            probs = np.convolve(probs, binomial_pmf(n - prev, scenario.rate(0, k)))
            prev = n
            codes = tables[k]
            succ.append(math.fsum(probs[codes == SUCCESS]))
            fail.append(math.fsum(probs[codes == FAILURE]))
            probs = np.where(codes == CONTINUE, probs, 0.0)
    else:
        probs = np.ones((1, 1))
        prev_t = prev_c = 0
        for k, (nt, nc) in enumerate(zip(*sizes)):
            tt = _transition(prev_t, nt - prev_t, scenario.rate(0, k))
            tc = _transition(prev_c, nc - prev_c, scenario.rate(1, k))
            probs = tt @ probs @ tc.T
            prev_t, prev_c = nt, nc
            codes = tables[k]
            succ.append(math.fsum(probs[codes == SUCCESS]))
            fail.append(math.fsum(probs[codes == FAILURE]))
            probs = np.where(codes == CONTINUE, probs, 0.0)
    return succ, fail


def _report_from_stops(sizes, succ, fail, mode, label="", **extra):
    stop = [s + f for s, f in zip(succ, fail)]
    ess = tuple(math.fsum(p * n for p, n in zip(stop, arm_sizes)) for arm_sizes in sizes)
    return OCReport(mode=mode, reject_prob=min(1.0, math.fsum(succ)),
                    success_by_look=tuple(succ), failure_by_look=tuple(fail),
                    expected_sample_size=ess, label=label, **extra)


def _check_scenario(design, scenario):
    if len(scenario.rates) != design.arms:
        raise ValueError(f"scenario has {len(scenario.rates)} rates for a {design.arms}-arm design")
    if scenario.drift is not None and len(scenario.drift) != design.looks:
        raise ValueError("drift needs one offset per look")


def exact_oc(design, scenario):
    """Operating characteristics by exact enumeration of success counts."""
    _check_scenario(design, scenario)
    check_exact_budget(design)
    succ, fail = propagate(design.sizes, decision_tables(design), scenario)
    return _report_from_stops(design.sizes, succ, fail, "exact", scenario.label)


def boundary_tables(sizes, critical):
    """One-arm tables for frequentist critical counts (reject when y >= critical)."""
    tables = []
    last = len(sizes) - 1
    for k, (n, c) in enumerate(zip(sizes, critical)):
        y = np.arange(n + 1)
        codes = np.where(y >= c, SUCCESS, FAILURE if k == last else CONTINUE).astype(np.int8)
        tables.append(codes)
    return tuple(tables)


# --- Monte Carlo -------------------------------------------------------------------

def _binomial_cdf(n, p):
    cdf = np.cumsum(binomial_pmf(n, p))
    cdf[-1] = 1.0
    return cdf


def draw_binomial(u, n, p):
    """Inverse-CDF binomial draws from uniforms."""
    if n == 0:
        return np.zeros(np.shape(u), dtype=np.int64)
    return np.searchsorted(_binomial_cdf(n, p), u, side="right").astype(np.int64)


def _simulate_block(design, tables, scenario, scenario_index, master_seed, reps):
    """Integer tallies for a block of replicate ids."""
    looks = design.looks
    succ = np.zeros(looks, dtype=np.int64)
    fail = np.zeros(looks, dtype=np.int64)
    n_sum = np.zeros(design.arms, dtype=np.int64)
    n_sq = np.zeros(design.arms, dtype=np.int64)
    y = np.zeros((reps.size, design.arms), dtype=np.int64)
    alive = np.arange(reps.size)
    prev = [0] * design.arms
    for k in range(looks):
        for arm in range(design.arms):
            n = design.sizes[arm][k]
            u = uniforms(master_seed, reps[alive], k, arm, scenario_index)
            y[alive, arm] += draw_binomial(u, n - prev[arm], scenario.rate(arm, k))
            prev[arm] = n
        if design.arms == 1:
            codes = tables[k][y[alive, 0]]
        else:
            codes = tables[k][y[alive, 0], y[alive, 1]]
        stopped = codes != CONTINUE
        succ[k] += int(np.count_nonzero(codes == SUCCESS))
        fail[k] += int(np.count_nonzero(codes == FAILURE))
        m = int(np.count_nonzero(stopped))
        for arm in range(design.arms):
            n = design.sizes[arm][k]
            n_sum[arm] += m * n
            n_sq[arm] += m * n * n
        alive = alive[~stopped]
    return succ, fail, n_sum, n_sq


def _blocks(replicates, workers, block=25_000):
    count = max(int(workers), math.ceil(replicates / block))
    return [b for b in np.array_split(np.arange(replicates, dtype=np.uint64), count) if b.size]


def monte_carlo_oc(design, scenario, replicates, master_seed, workers=1, scenario_index=0):
    """Operating characteristics by simulation; identical for any ``workers``."""
    _check_scenario(design, scenario)
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    tables = decision_tables(design)
    blocks = _blocks(replicates, workers)
    run = lambda reps: _simulate_block(design, tables, scenario, scenario_index, master_seed, reps)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=int(workers)) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    succ = sum(p[0] for p in parts)
    fail = sum(p[1] for p in parts)
    n_sum = sum(p[2] for p in parts)
    n_sq = sum(p[3] for p in parts)
    return _mc_report(design, succ, fail, n_sum, n_sq, replicates, scenario.label)


def _se(p, r):
    return math.sqrt(max(p * (1.0 - p), 0.0) / r)


def _mc_report(design, succ, fail, n_sum, n_sq, r, label):
    succ_p = tuple(int(c) / r for c in succ)
    fail_p = tuple(int(c) / r for c in fail)
    reject = int(succ.sum()) / r
    ess = tuple(int(s) / r for s in n_sum)
    ess_se = []
    for s, q in zip(n_sum, n_sq):
        mean = int(s) / r
        var = max(int(q) / r - mean * mean, 0.0)
        ess_se.append(math.sqrt(var / r))
    ses = {
        "reject_prob": _se(reject, r),
        "success_by_look": [_se(p, r) for p in succ_p],
        "failure_by_look": [_se(p, r) for p in fail_p],
        "expected_sample_size": ess_se,
        "degenerate": r == 1,
    }
    return OCReport(mode="monte-carlo", reject_prob=reject, success_by_look=succ_p,
                    failure_by_look=fail_p, expected_sample_size=ess, replicates=r,
                    standard_errors=ses, label=label)


def simulate_trial(design, scenario, stream):
    """Run one replicate through the interim rules; deterministic given the stream."""
    _check_scenario(design, scenario)
    counts = [0] * design.arms
    prev = [0] * design.arms
    decision = None
    for k in range(design.looks):
        for arm in range(design.arms):
            n = design.sizes[arm][k]
            u = stream.uniform(k, arm)
            counts[arm] += int(draw_binomial(np.array([u]), n - prev[arm], scenario.rate(arm, k))[0])
            prev[arm] = n
        state = InterimState(tuple((c, design.sizes[a][k]) for a, c in enumerate(counts)),
                             k, design.sizes)
        decision = evaluate_interim(state, design.priors, design.success, design.futility,
                                    design.monitoring)
        if decision.kind.terminal:
            enrolled = tuple(s[k] for s in design.sizes)
            return TrialResult(decision, k, enrolled, decision.evidence)
    raise AssertionError("final look must be terminal")


# --- Bayesian operating characteristics ---------------------------------------------

def bayesian_oc(design, dprior, mode="exact", replicates=10_000, master_seed=0, workers=1):
    """Assurance and probability of a correct decision under a design prior.

    A decision is correct when it declares success and the true effect
    exceeds the rule's threshold, or declares no success otherwise (a true
    effect equal to the threshold counts as no effect).
    """
    if mode not in ("exact", "monte-carlo"):
        raise ValueError("mode must be 'exact' or 'monte-carlo'")
    a = design.success.effect_threshold
    succ = np.zeros(design.looks)
    fail = np.zeros(design.looks)
    ess = np.zeros(design.arms)
    assurance = pcd = 0.0
    var = 0.0
    for i, (w, sc) in enumerate(dprior.atoms):
        if w == 0.0:
            continue
        if mode == "exact":
            rep = exact_oc(design, sc)
        else:
            rep = monte_carlo_oc(design, sc, replicates, master_seed, workers, scenario_index=i)
            var += w * w * rep.standard_errors["reject_prob"] ** 2
        succ += w * np.asarray(rep.success_by_look)
        fail += w * np.asarray(rep.failure_by_look)
        ess += w * np.asarray(rep.expected_sample_size)
        assurance += w * rep.reject_prob
        pcd += w * (rep.reject_prob if sc.effect() > a else 1.0 - rep.reject_prob)
    extra = {}
    if mode == "monte-carlo":
        extra = {"replicates": replicates,
                 "standard_errors": {"assurance": math.sqrt(var), "degenerate": replicates == 1}}
    return OCReport(mode=mode, reject_prob=min(1.0, assurance), success_by_look=tuple(succ),
                    failure_by_look=tuple(fail), expected_sample_size=tuple(ess),
                    assurance=min(1.0, assurance), pcd=min(1.0, pcd), label="design-prior",
                    **extra)


def one_arm_design(sizes, prior=BetaParams(1.0, 1.0), threshold=0.3, cutoff=0.95,
                   futility=None, monitoring=Monitoring()):
    """Convenience constructor for a single-arm design."""
    return TrialDesign((tuple(sizes),), (prior,), SuccessRule(threshold, cutoff),
                       futility, monitoring)

