"""Phase I dose-escalation rules and an escalation trial simulator.

Rule-based (3+3, i3+3), model-assisted (BOIN, mTPI, mTPI-2) and
model-based (CRM) designs share ``DoseToxState`` and ``EscalationDecision``.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
import math

import numpy as np

from .probability import BetaParams, BinomialSummary, GridDensity, update_beta, update_grid
from .rng import uniforms
from .settings import DEFAULTS


class EscalationDecision(str, Enum):
    ESCALATE = "Escalate"
    STAY = "Stay"
    DEESCALATE = "DeEscalate"
    ELIMINATE = "Eliminate"
    STOP_TRIAL = "StopTrial"


@dataclass(frozen=True)
class DoseToxState:
    """Patients treated and DLTs observed per dose, plus elimination flags."""

    treated: tuple
    dlts: tuple
    current_dose: int = 0
    eliminated: tuple = None

    def __post_init__(self):
        treated = tuple(int(v) for v in self.treated)
        dlts = tuple(int(v) for v in self.dlts)
        elim = (tuple(bool(v) for v in self.eliminated) if self.eliminated is not None
                else (False,) * len(treated))
        object.__setattr__(self, "treated", treated)
        object.__setattr__(self, "dlts", dlts)
        object.__setattr__(self, "eliminated", elim)
        if not treated or len(dlts) != len(treated) or len(elim) != len(treated):
            raise ValueError("treated, dlts and eliminated need one entry per dose")
        if any(not 0 <= d <= n for d, n in zip(dlts, treated)):
            raise ValueError("need 0 <= dlts <= treated at every dose")
        if not 0 <= self.current_dose < len(treated):
            raise ValueError("current_dose outside the dose range")

    @classmethod
    def empty(cls, n_doses, current_dose=0):
        return cls((0,) * n_doses, (0,) * n_doses, current_dose)

    @classmethod
    def single(cls, treated, dlts, n_doses=2):
        """A state with data only at dose 0, the current dose."""
        t = (treated,) + (0,) * (n_doses - 1)
        d = (dlts,) + (0,) * (n_doses - 1)
        return cls(t, d, 0)

    @property
    def n_doses(self):
        return len(self.treated)

    @property
    def n(self):
        return self.treated[self.current_dose]

    @property
    def y(self):
        return self.dlts[self.current_dose]

    def add(self, dose, treated, dlts):
        t, d = list(self.treated), list(self.dlts)
        t[dose] += treated
        d[dose] += dlts
        return replace(self, treated=tuple(t), dlts=tuple(d))


def _observed(state):
    if state.n == 0:
        raise ValueError("no patients treated at the current dose")
    return state.y, state.n


def _guard_escalation(state, decision):
    nxt = state.current_dose + 1
    if decision is EscalationDecision.ESCALATE and (
            nxt >= state.n_doses or state.eliminated[nxt]):
        return EscalationDecision.STAY
    return decision


# --- rule-based ------------------------------------------------------------------

def rule_3p3(state):
    """Classic 3+3 at the current dose (3 or 6 patients treated)."""
    y, n = state.y, state.n
    if n == 3:
        if y == 0:
            return EscalationDecision.ESCALATE
        return EscalationDecision.STAY if y == 1 else EscalationDecision.DEESCALATE
    if n == 6:
        return EscalationDecision.ESCALATE if y <= 1 else EscalationDecision.DEESCALATE
    raise ValueError(f"3+3 undefined for {n} patients treated at the current dose")


def rule_i3p3(state, target, ei_low, ei_high):
    """i3+3 with equivalence interval [ei_low, ei_high] around ``target``."""
    if not (0.0 < ei_low < ei_high < 1.0 and ei_low <= target <= ei_high):
        raise ValueError("need 0 < ei_low <= target <= ei_high < 1")
    y, n = _observed(state)
    r = y / n
    if r < ei_low:
        return EscalationDecision.ESCALATE
    if r <= ei_high or (y - 1) / n < ei_low:
        return EscalationDecision.STAY
    return EscalationDecision.DEESCALATE


# --- BOIN ------------------------------------------------------------------------

@dataclass(frozen=True)
class BoinBoundaries:
    target: float
    phi1: float
    phi2: float
    lambda_e: float
    lambda_d: float


def boin_boundaries(target, phi1=None, phi2=None):
    """Escalation and de-escalation boundaries from the likelihood-ratio derivation."""
    phi1 = 0.6 * target if phi1 is None else phi1
    phi2 = 1.4 * target if phi2 is None else phi2
    if not 0.0 < phi1 < target < phi2 < 1.0:
        raise ValueError("need 0 < phi1 < target < phi2 < 1")
    le = (math.log((1 - phi1) / (1 - target))
          / math.log(target * (1 - phi1) / (phi1 * (1 - target))))
    ld = (math.log((1 - target) / (1 - phi2))
          / math.log(phi2 * (1 - target) / (target * (1 - phi2))))
    return BoinBoundaries(target, phi1, phi2, le, ld)


def boin_decide(state, b):
    y, n = _observed(state)
    r = y / n
    if r <= b.lambda_e:
        d = EscalationDecision.ESCALATE
    elif r >= b.lambda_d:
        d = EscalationDecision.DEESCALATE
    else:
        d = EscalationDecision.STAY
    return _guard_escalation(state, d)


# --- mTPI ------------------------------------------------------------------------

@dataclass(frozen=True)
class MtpiSpec:
    target: float
    eps1: float = 0.05
    eps2: float = 0.05
    prior: BetaParams = BetaParams(1.0, 1.0)
    variant: str = "mtpi"

    def __post_init__(self):
        if not 0.0 < self.target - self.eps1 < self.target + self.eps2 < 1.0:
            raise ValueError("need 0 < target - eps1 < target + eps2 < 1")
        if self.variant not in ("mtpi", "mtpi2"):
            raise ValueError("variant must be 'mtpi' or 'mtpi2'")

    def intervals(self):
        """(low, high, decision) per interval; mtpi2 splits the outer regions."""
        lo, hi = self.target - self.eps1, self.target + self.eps2
        if self.variant == "mtpi":
            return [(0.0, lo, EscalationDecision.ESCALATE), (lo, hi, EscalationDecision.STAY),
                    (hi, 1.0, EscalationDecision.DEESCALATE)]
        w = self.eps1 + self.eps2
        out = []
        edge = lo
        while edge > 1e-12:
            out.append((max(0.0, edge - w), edge, EscalationDecision.ESCALATE))
            edge -= w
        out.reverse()
        out.append((lo, hi, EscalationDecision.STAY))
        edge = hi
        while edge < 1.0 - 1e-12:
            out.append((edge, min(1.0, edge + w), EscalationDecision.DEESCALATE))
            edge += w
        return out


def mtpi_upms(state, spec):
    """Unit probability mass of each interval, in interval order."""
    y, n = _observed(state)
    post = update_beta(spec.prior, BinomialSummary(y, n))
    ivs = spec.intervals()
    edges = np.array([ivs[0][0]] + [h for _, h, _ in ivs])
    cdf = np.asarray(post.cdf(edges), float)
    cdf[0], cdf[-1] = 0.0, 1.0
    mass = np.diff(cdf)
    width = np.diff(edges)
    return mass / width, [d for _, _, d in ivs]


def mtpi_decide(state, spec):
    upm, kinds = mtpi_upms(state, spec)
    return _guard_escalation(state, kinds[int(np.argmax(upm))])


# --- CRM -------------------------------------------------------------------------

@dataclass(frozen=True)
class CrmSpec:
    """Power-model CRM: p_j(a) = skeleton_j ** exp(a), a ~ Normal(0, prior_sd) on a grid."""

    skeleton: tuple
    target: float
    prior_sd: float = DEFAULTS.crm_prior_sd
    grid_points: int = DEFAULTS.crm_grid_points
    grid_range: tuple = DEFAULTS.crm_grid_range
    no_skip: bool = True

    def __post_init__(self):
        sk = tuple(float(q) for q in self.skeleton)
        object.__setattr__(self, "skeleton", sk)
        if not sk or any(not 0.0 < q < 1.0 for q in sk) or any(b <= a for a, b in zip(sk, sk[1:])):
            raise ValueError("skeleton must be strictly increasing within (0, 1)")
        if not self.prior_sd > 0:
            raise ValueError("prior_sd must be positive")
        if not 0.0 < self.target < 1.0:
            raise ValueError("target must lie in (0, 1)")

    def prior(self):
        lo, hi = self.grid_range
        a = np.linspace(lo, hi, self.grid_points)
        return GridDensity.from_arrays(a, np.exp(-0.5 * (a / self.prior_sd) ** 2), (lo, hi))


def crm_posterior(state, spec):
    if state.n_doses != len(spec.skeleton):
        raise ValueError("state and skeleton disagree on the number of doses")
    logq = np.log(np.asarray(spec.skeleton))
    n = np.asarray(state.treated, float)
    y = np.asarray(state.dlts, float)

    def loglik(a):
        e = np.exp(a)[:, None]
        logp = e * logq[None, :]
        log1mp = np.log(-np.expm1(logp))
        return (y * logp + (n - y) * log1mp).sum(axis=1)

    return update_grid(spec.prior(), loglik)


def crm_means(state, spec):
    post = crm_posterior(state, spec)
    p = np.asarray(spec.skeleton)[None, :] ** np.exp(post.points)[:, None]
    return post.probs @ p


def crm_recommend(state, spec, tie_tol=1e-12):
    """Dose whose posterior mean toxicity is closest to the target, and all means."""
    means = crm_means(state, spec)
    allowed = [j for j in range(state.n_doses) if not state.eliminated[j]]
    if spec.no_skip:
        allowed = [j for j in allowed if j <= state.current_dose + 1]
    if not allowed:
        return None, means
    dist = np.abs(means - spec.target)
    best = min(dist[j] for j in allowed)
    dose = next(j for j in allowed if dist[j] <= best + tie_tol)
    return dose, means


# --- safety ----------------------------------------------------------------------

@lru_cache(maxsize=65536)
def _overdose_prob(n, y, target):
    return float(BetaParams(1.0 + y, 1.0 + n - y).sf(target))


def overdose_eliminate(state, target, prob_cutoff,
                       min_treated=DEFAULTS.overdose_min_treated):
    """Elimination flags after applying the overdose rule; flags never un-set."""
    if not 0.0 < prob_cutoff < 1.0:
        raise ValueError("prob_cutoff must lie in (0, 1)")
    flags = list(state.eliminated)
    for j, (n, y) in enumerate(zip(state.treated, state.dlts)):
        if n >= min_treated and _overdose_prob(n, y, float(target)) > prob_cutoff:
            for k in range(j, state.n_doses):
                flags[k] = True
            break
    return tuple(a or b for a, b in zip(flags, state.eliminated))


# --- MTD selection -----------------------------------------------------------------

def pava(values, weights):
    """Weighted isotonic (non-decreasing) regression by pooling adjacent violators."""
    blocks = []
    for v, w in zip(values, weights):
        blocks.append([v, w, 1])
        while len(blocks) > 1 and blocks[-2][0] > blocks[-1][0]:
            v2, w2, c2 = blocks.pop()
            v1, w1, c1 = blocks.pop()
            blocks.append([(v1 * w1 + v2 * w2) / (w1 + w2), w1 + w2, c1 + c2])
    out = []
    for v, _, c in blocks:
        out.extend([v] * c)
    return np.array(out)


def select_mtd(state, target, smoothing=DEFAULTS.mtd_smoothing):
    """Isotonic estimate closest to target among tried, non-eliminated doses."""
    tried = [j for j in range(state.n_doses) if state.treated[j] > 0 and not state.eliminated[j]]
    if not tried:
        return None
    a = np.array([smoothing + state.dlts[j] for j in tried])
    b = np.array([smoothing + state.treated[j] - state.dlts[j] for j in tried])
    est = a / (a + b)
    var = a * b / ((a + b) ** 2 * (a + b + 1))
    iso = pava(est, 1.0 / var)
    dist = np.abs(iso - target)
    best = dist.min()
    ties = [i for i in range(len(tried)) if dist[i] <= best + 1e-12]
    # among tied estimates pick the higher dose below target, the lower one above
    i = ties[-1] if iso[ties[0]] < target else ties[0]
    return tried[i]


# --- designs and simulation ----------------------------------------------------------

KINDS = ("3+3", "i3+3", "boin", "mtpi", "mtpi2", "crm")


@dataclass(frozen=True)
class EscalationDesign:
    """A dose-escalation design: the rule plus cohort size, sample size and start dose.

    ``elimination_cutoff`` switches on the overdose rule (None disables it);
    it is ignored by 3+3, whose rule table already stops at toxic doses.
    """

    kind: str
    target: float
    n_doses: int
    cohort_size: int = 3
    max_n: int = 30
    start_dose: int = 0
    elimination_cutoff: float = 0.95
    boin: BoinBoundaries = None
    mtpi: MtpiSpec = None
    crm: CrmSpec = None
    ei: tuple = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown design kind {self.kind!r}")
        if self.max_n < 1:
            raise ValueError("max_n must be at least 1")
        if self.cohort_size < 1:
            raise ValueError("cohort_size must be at least 1")
        if not 0 <= self.start_dose < self.n_doses:
            raise ValueError("start_dose outside the dose range")
        if self.kind == "boin" and self.boin is None:
            object.__setattr__(self, "boin", boin_boundaries(self.target))
        if self.kind in ("mtpi", "mtpi2") and self.mtpi is None:
            object.__setattr__(self, "mtpi", MtpiSpec(self.target, variant=self.kind))
        if self.kind == "i3+3" and self.ei is None:
            object.__setattr__(self, "ei", (self.target - 0.05, self.target + 0.05))
        if self.kind == "crm":
            if self.crm is None:
                raise ValueError("crm design needs a CrmSpec")
            if len(self.crm.skeleton) != self.n_doses:
                raise ValueError("skeleton length must equal n_doses")

    def decide(self, state):
        if self.kind == "3+3":
            return rule_3p3(state)
        if self.kind == "i3+3":
            return _guard_escalation(state, rule_i3p3(state, self.target, *self.ei))
        if self.kind == "boin":
            return boin_decide(state, self.boin)
        return mtpi_decide(state, self.mtpi)


@dataclass(frozen=True)
class EscalationResult:
    """Outcome of one escalation trial; ``path`` lists (dose, cohort size, DLTs) per cohort."""

    mtd: int
    treated: tuple
    dlts: tuple
    stopped_early: bool
    eliminated: tuple
    path: tuple = field(default=(), compare=True)

    @property
    def total_treated(self):
        return sum(self.treated)


def _patient_uniforms(master_seed, replicate, cohorts, size, scenario_index):
    """Uniforms for every potential (cohort, patient) slot of one replicate."""
    return uniforms(master_seed, replicate, np.arange(cohorts)[:, None],
                    np.arange(size)[None, :], scenario_index)


def _cohort_dlts(u, truth, dose, cohort, size):
    return int(np.count_nonzero(u[cohort, :size] < truth[dose]))


def _check_truth(design, truth):
    truth = tuple(float(t) for t in truth)
    if len(truth) != design.n_doses or any(not 0.0 <= t <= 1.0 for t in truth):
        raise ValueError("truth needs one probability in [0, 1] per dose")
    return truth


def _simulate_3p3(design, truth, seed, replicate, scenario_index):
    state = DoseToxState.empty(design.n_doses, design.start_dose)
    u = _patient_uniforms(seed, replicate, design.max_n // 3 + 1, 3, scenario_index)
    ceiling = design.n_doses      # lowest dose judged too toxic
    cohort = 0
    path = []
    mtd = None
    early = False
    while True:
        d = state.current_dose
        if state.treated[d] >= 6 or sum(state.treated) + 3 > design.max_n:
            break
        y = _cohort_dlts(u, truth, d, cohort, 3)
        cohort += 1
        state = state.add(d, 3, y)
        path.append((d, 3, y))
        decision = rule_3p3(state)
        if decision is EscalationDecision.ESCALATE:
            if d + 1 < ceiling and state.treated[d + 1] == 0:
                state = replace(state, current_dose=d + 1)
                continue
            if state.treated[d] == 6 or d + 1 < ceiling:
                mtd = d
                break
            continue    # top dose after 0/3: expand to six
        if decision is EscalationDecision.STAY:
            continue
        ceiling = d
        if d == 0:
            early = True
            break
        below = d - 1
        state = replace(state, current_dose=below)
        if state.treated[below] >= 6:
            mtd = below if state.dlts[below] <= 1 else None
            break
    if mtd is None and not early:
        ok = [j for j in range(min(ceiling, design.n_doses))
              if state.treated[j] == 6 and state.dlts[j] <= 1]
        mtd = ok[-1] if ok else None
    elim = tuple(j >= ceiling for j in range(design.n_doses))
    return EscalationResult(mtd, state.treated, state.dlts, early, elim, tuple(path))


def simulate_escalation(design, truth, master_seed, replicate=0, scenario_index=0):
    """Run one escalation trial; patient outcomes come from counter-keyed uniforms."""
    truth = _check_truth(design, truth)
    if design.kind == "3+3":
        return _simulate_3p3(design, truth, master_seed, replicate, scenario_index)
    state = DoseToxState.empty(design.n_doses, design.start_dose)
    u = _patient_uniforms(master_seed, replicate, -(-design.max_n // design.cohort_size),
                          design.cohort_size, scenario_index)
    cohort = 0
    path = []
    early = False
    while sum(state.treated) < design.max_n:
        d = state.current_dose
        size = min(design.cohort_size, design.max_n - sum(state.treated))
        y = _cohort_dlts(u, truth, d, cohort, size)
        cohort += 1
        state = state.add(d, size, y)
        path.append((d, size, y))
        if design.elimination_cutoff is not None:
            flags = overdose_eliminate(state, design.target, design.elimination_cutoff)
            state = replace(state, eliminated=flags)
            if flags[0]:
                early = True
                break
            if flags[d]:
                state = replace(state, current_dose=flags.index(True) - 1)
                continue
        if design.kind == "crm":
            nxt, _ = crm_recommend(state, design.crm)
        else:
            decision = design.decide(state)
            if decision is EscalationDecision.ESCALATE:
                nxt = d + 1
            elif decision is EscalationDecision.DEESCALATE:
                nxt = max(d - 1, 0)
            else:
                nxt = d
        state = replace(state, current_dose=nxt)
    mtd = None if early else select_mtd(state, design.target)
    return EscalationResult(mtd, state.treated, state.dlts, early, state.eliminated, tuple(path))


@dataclass(frozen=True)
class EscalationOC:
    selection: tuple
    no_selection: float
    mean_treated: tuple
    mean_dlts: tuple
    replicates: int

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def _escalation_block(design, truth, seed, reps, scenario_index):
    sel = np.zeros(design.n_doses + 1, dtype=np.int64)
    treated = np.zeros(design.n_doses, dtype=np.int64)
    dlts = np.zeros(design.n_doses, dtype=np.int64)
    for r in reps:
        res = simulate_escalation(design, truth, seed, int(r), scenario_index)
        sel[design.n_doses if res.mtd is None else res.mtd] += 1
        treated += res.treated
        dlts += res.dlts
    return sel, treated, dlts


def escalation_oc(design, truth, replicates, master_seed, workers=1, scenario_index=0):
    """Selection percentages and average allocation over replicates."""
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    truth = _check_truth(design, truth)
    blocks = np.array_split(np.arange(replicates), max(1, int(workers)))
    run = lambda b: _escalation_block(design, truth, master_seed, b, scenario_index)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=int(workers)) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    sel = sum(p[0] for p in parts)
    treated = sum(p[1] for p in parts)
    dlts = sum(p[2] for p in parts)
    r = replicates
    return EscalationOC(tuple(int(c) / r for c in sel[:-1]), int(sel[-1]) / r,
                        tuple(int(t) / r for t in treated), tuple(int(t) / r for t in dlts), r)


# --- decision tables -------------------------------------------------------------------

def decision_table(design, max_n):
    """Rows (n, y, decision, eliminate) for every cell with n <= max_n."""
    if design.kind == "crm":
        raise ValueError("CRM decisions depend on all doses; no single-dose table exists")
    rows = []
    ns = [3, 6] if design.kind == "3+3" else range(1, max_n + 1)
    for n in ns:
        if n > max_n:
            continue
        for y in range(n + 1):
            st = DoseToxState.single(n, y)
            elim = False
            if design.elimination_cutoff is not None and design.kind != "3+3":
                elim = overdose_eliminate(st, design.target, design.elimination_cutoff)[0]
            rows.append((n, y, design.decide(st).value, elim))
    return rows
