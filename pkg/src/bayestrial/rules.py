"""Posterior, predictive and decision-theoretic trial decision rules."""

from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache
import math

import numpy as np

from .exceptions import BudgetExceededError
from .probability import (BetaMixture, BetaParams, BinomialSummary, GridDensity,
                          posterior)
from .quadrature import adaptive_simpson
from .settings import DEFAULTS
from .special import beta_sf, binomial_pmf

ONE_ARM = "one-arm"
TWO_ARM = "two-arm"


@dataclass(frozen=True)
class SuccessRule:
    """Declare success when Pr(effect > effect_threshold) >= posterior_cutoff."""

    effect_threshold: float
    posterior_cutoff: float
    comparison: str = ONE_ARM

    def __post_init__(self):
        if self.comparison not in (ONE_ARM, TWO_ARM):
            raise ValueError(f"unknown comparison {self.comparison!r}")
        if not 0.0 < self.posterior_cutoff < 1.0:
            raise ValueError("posterior_cutoff must lie in (0, 1)")
        lo = 0.0 if self.comparison == ONE_ARM else -1.0
        if not lo <= self.effect_threshold <= 1.0:
            raise ValueError("effect_threshold outside the effect domain")

    @property
    def arms(self):
        return 1 if self.comparison == ONE_ARM else 2

    def with_cutoff(self, cutoff):
        return replace(self, posterior_cutoff=cutoff)


@dataclass(frozen=True)
class FutilityRule:
    """Stop for futility when the predictive probability of success drops below the cutoff."""

    ppos_cutoff: float

    def __post_init__(self):
        if not 0.0 <= self.ppos_cutoff < 1.0:
            raise ValueError("ppos_cutoff must lie in [0, 1)")


@dataclass(frozen=True)
class Monitoring:
    """Interim efficacy monitoring.

    ``kind`` is ``"posterior"`` (posterior probability against ``cutoff``,
    defaulting to the final success cutoff), ``"ppos"`` (predictive
    probability of final success against ``cutoff``) or ``"none"``.
    """

    kind: str = "posterior"
    cutoff: float = None

    def __post_init__(self):
        if self.kind not in ("posterior", "ppos", "none"):
            raise ValueError(f"unknown monitoring kind {self.kind!r}")
        if self.kind == "ppos" and self.cutoff is None:
            raise ValueError("ppos monitoring needs a cutoff")
        if self.cutoff is not None and not 0.0 < self.cutoff <= 1.0:
            raise ValueError("monitoring cutoff must lie in (0, 1]")


@dataclass(frozen=True)
class LossSpec:
    false_positive_loss: float
    false_negative_loss: float

    def __post_init__(self):
        if not (self.false_positive_loss > 0 and self.false_negative_loss > 0):
            raise ValueError("losses must be strictly positive")


class DecisionKind(str, Enum):
    STOP_EFFICACY = "StopEfficacy"
    STOP_FUTILITY = "StopFutility"
    CONTINUE = "Continue"
    FINAL_SUCCESS = "FinalSuccess"
    FINAL_FAILURE = "FinalFailure"

    @property
    def terminal(self):
        return self is not DecisionKind.CONTINUE

    @property
    def success(self):
        return self in (DecisionKind.STOP_EFFICACY, DecisionKind.FINAL_SUCCESS)


@dataclass(frozen=True)
class Decision:
    kind: DecisionKind
    evidence: float


@dataclass(frozen=True)
class InterimState:
    """Accumulated data per arm at a look of a planned cumulative schedule.

    ``data`` and ``schedule`` are indexed by arm (treatment first);
    ``schedule[arm]`` lists cumulative sample sizes per look.
    """

    data: tuple
    look_index: int
    schedule: tuple

    def __post_init__(self):
        data = tuple(d if isinstance(d, BinomialSummary) else BinomialSummary(*d)
                     for d in self.data)
        schedule = tuple(tuple(int(v) for v in s) for s in self.schedule)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "schedule", schedule)
        if len(data) != len(schedule) or not data:
            raise ValueError("one data summary and one schedule per arm required")
        looks = {len(s) for s in schedule}
        if len(looks) != 1:
            raise ValueError("every arm needs the same number of looks")
        if not 0 <= self.look_index < looks.pop():
            raise ValueError("look_index outside the schedule")
        for d, s in zip(data, schedule):
            if d.trials != s[self.look_index]:
                raise ValueError(f"accumulated trials {d.trials} do not match the planned "
                                 f"size {s[self.look_index]} at look {self.look_index}")

    @property
    def is_final(self):
        return self.look_index == len(self.schedule[0]) - 1

    @property
    def remaining(self):
        return tuple(s[-1] - d.trials for d, s in zip(self.data, self.schedule))


# --- effect probabilities -----------------------------------------------------

def _min_shape(dist):
    if isinstance(dist, BetaParams):
        return min(dist.alpha, dist.beta)
    return float(min(dist.alphas.min(), dist.betas.min()))


def _integrate_density_against(dens, tail_fn):
    """Integrate ``pdf_dens(x) * tail_fn(x)`` over (0, 1) with x = sin^2(phi)."""

    def integrand(phi):
        phi = np.asarray(phi, float)
        s, c = np.sin(phi), np.cos(phi)
        x = s * s
        out = np.zeros_like(phi)
        ok = (x > 0.0) & (x < 1.0)
        xo = x[ok]
        logj = np.log(2.0 * s[ok] * c[ok])
        out[ok] = np.exp(dens.logpdf(xo) + logj) * tail_fn(xo)
        return out

    return adaptive_simpson(integrand, 0.0, math.pi / 2)


def effect_prob_two_arm(post_t, post_c, a):
    """Pr(p_t - p_c > a) for independent treatment and control posteriors."""
    if not -1.0 <= a <= 1.0:
        raise ValueError("effect threshold must lie in [-1, 1]")
    if isinstance(post_c, GridDensity):
        return float(np.clip(np.dot(post_c.probs, post_t.sf(post_c.points + a)), 0.0, 1.0))
    if isinstance(post_t, GridDensity):
        return float(np.clip(np.dot(post_t.probs, post_c.cdf(post_t.points - a)), 0.0, 1.0))
    # integrate over whichever density is better behaved at the endpoints
    if _min_shape(post_c) >= _min_shape(post_t):
        val = _integrate_density_against(post_c, lambda x: post_t.sf(x + a))
    else:
        val = _integrate_density_against(post_t, lambda y: post_c.cdf(y - a))
    return float(min(1.0, max(0.0, val)))


@lru_cache(maxsize=200_000)
def _cached_two_arm(post_t, post_c, a):
    return effect_prob_two_arm(post_t, post_c, a)


def evidence(posteriors, rule):
    """The posterior probability a success rule compares with its cutoff."""
    if isinstance(posteriors, (BetaParams, BetaMixture, GridDensity)):
        posteriors = (posteriors,)
    if rule.comparison == ONE_ARM:
        return float(posteriors[0].sf(rule.effect_threshold))
    return _cached_two_arm(posteriors[0], posteriors[1], float(rule.effect_threshold))


def posterior_success(ev, rule):
    """Return ``(success, evidence)``; ``ev`` is a probability or the posteriors."""
    if not isinstance(ev, (float, int, np.floating)):
        ev = evidence(ev, rule)
    ev = float(ev)
    return ev >= rule.posterior_cutoff, ev


def loss_threshold(spec):
    """Posterior cutoff that minimizes expected loss in the success/failure choice."""
    return spec.false_positive_loss / (spec.false_positive_loss + spec.false_negative_loss)


def expected_losses(ev, spec):
    """Posterior expected loss of declaring success and of declaring failure."""
    return (1.0 - ev) * spec.false_positive_loss, ev * spec.false_negative_loss


# --- success regions ----------------------------------------------------------

@lru_cache(maxsize=4096)
def one_arm_evidence_table(prior, n, threshold):
    """Pr(theta > threshold | y of n) for y = 0..n."""
    y = np.arange(n + 1)
    if isinstance(prior, BetaParams):
        out = beta_sf(threshold, prior.alpha + y, prior.beta + n - y)
    else:
        out = np.array([float(posterior(prior, BinomialSummary(int(k), n)).sf(threshold))
                        for k in y])
    out.setflags(write=False)
    return out


def _two_arm_evidence(priors, n_t, n_c, yt, yc, a):
    post_t = posterior(priors[0], BinomialSummary(yt, n_t))
    post_c = posterior(priors[1], BinomialSummary(yc, n_c))
    return _cached_two_arm(post_t, post_c, a)


@lru_cache(maxsize=1024)
def two_arm_thresholds(priors, n_t, n_c, a, cutoff):
    """Smallest treatment count meeting the rule for each control count.

    Entry ``n_t + 1`` means no treatment count succeeds. Relies on the
    evidence being non-decreasing in the treatment count (true for any
    prior, by monotone likelihood ratio) and the threshold being
    non-decreasing in the control count.
    """
    out = np.empty(n_c + 1, dtype=np.int64)
    start = 0
    for yc in range(n_c + 1):
        lo, hi = start, n_t + 1
        while lo < hi:
            mid = (lo + hi) // 2
            if _two_arm_evidence(priors, n_t, n_c, mid, yc, a) >= cutoff:
                hi = mid
            else:
                lo = mid + 1
        out[yc] = lo
        start = lo
    out.setflags(write=False)
    return out


def final_success_region(priors, final_sizes, rule):
    """Boolean array over final y (one arm) or threshold array over control y (two arm)."""
    if rule.comparison == ONE_ARM:
        ev = one_arm_evidence_table(priors[0], final_sizes[0], float(rule.effect_threshold))
        return ev >= rule.posterior_cutoff
    return two_arm_thresholds(tuple(priors), final_sizes[0], final_sizes[1],
                              float(rule.effect_threshold), float(rule.posterior_cutoff))


# --- predictive probability -----------------------------------------------------

def _as_priors(priors):
    if isinstance(priors, (BetaParams, BetaMixture, GridDensity)):
        return (priors,)
    return tuple(priors)


def _normalized(pmf):
    return pmf / math.fsum(pmf)


def _indicator_mass(pmf, hit):
    """Probability of the ``hit`` set, summed over the smaller side for accuracy."""
    if hit.sum() * 2 <= hit.size:
        return min(1.0, math.fsum(pmf[hit]))
    return max(0.0, 1.0 - math.fsum(pmf[~hit]))


def ppos(state, priors, rule, budget=DEFAULTS.ppos_cell_budget):
    """Posterior predictive probability that the final analysis succeeds."""
    priors = _as_priors(priors)
    final = tuple(s[-1] for s in state.schedule)
    rem = state.remaining
    if any(r < 0 for r in rem):
        raise ValueError("accumulated data exceed the planned final size")
    cells = math.prod(r + 1 for r in rem)
    if cells > budget:
        raise BudgetExceededError(f"enumeration budget exceeded: {cells} cells > {budget}")
    posts = [posterior(p, d) for p, d in zip(priors, state.data)]
    region = final_success_region(priors, final, rule)
    if rule.comparison == ONE_ARM:
        y = state.data[0].successes
        pmf = _normalized(posts[0].predictive_pmf(rem[0]))
        return _indicator_mass(pmf, region[y:y + rem[0] + 1])
    yt, yc = state.data[0].successes, state.data[1].successes
    pmf_t = _normalized(posts[0].predictive_pmf(rem[0]))
    pmf_c = _normalized(posts[1].predictive_pmf(rem[1]))
    tail_t = np.concatenate([np.cumsum(pmf_t[::-1])[::-1], [0.0]])
    need = region[yc:yc + rem[1] + 1] - yt
    need = np.clip(need, 0, rem[0] + 1)
    return float(np.clip(np.dot(pmf_c, tail_t[need]), 0.0, 1.0))


def conditional_power(state, rates, critical):
    """Probability of reaching the final critical count at assumed true rates.

    One arm: final successes >= ``critical``. Two arms: final treatment minus
    control successes >= ``critical``.
    """
    rates = tuple(float(r) for r in rates)
    if any(not 0.0 <= r <= 1.0 for r in rates):
        raise ValueError("assumed rates must lie in [0, 1]")
    rem = state.remaining
    if len(state.data) == 1:
        need = critical - state.data[0].successes
        if need <= 0:
            return 1.0
        if need > rem[0]:
            return 0.0
        pmf = binomial_pmf(rem[0], rates[0])
        return float(min(1.0, math.fsum(pmf[need:])))
    pmf_t = binomial_pmf(rem[0], rates[0])
    pmf_c = binomial_pmf(rem[1], rates[1])
    # distribution of (future treatment - future control) successes
    diff = np.convolve(pmf_t, pmf_c[::-1])
    offset = rem[1]
    need = critical - (state.data[0].successes - state.data[1].successes)
    idx = need + offset
    if idx <= 0:
        return 1.0
    if idx >= diff.size:
        return 0.0
    return float(min(1.0, math.fsum(diff[idx:])))


# --- interim evaluation --------------------------------------------------------

def evaluate_interim(state, priors, success, futility=None, monitoring=Monitoring()):
    """Decision at the current look; efficacy is checked before futility."""
    priors = _as_priors(priors)
    if len(priors) != success.arms or len(state.data) != success.arms:
        raise ValueError("state, priors and success rule disagree on the number of arms")
    posts = tuple(posterior(p, d) for p, d in zip(priors, state.data))
    if state.is_final:
        ok, ev = posterior_success(posts, success)
        return Decision(DecisionKind.FINAL_SUCCESS if ok else DecisionKind.FINAL_FAILURE, ev)
    stat = None
    if monitoring.kind == "posterior":
        stat = evidence(posts, success)
        cut = success.posterior_cutoff if monitoring.cutoff is None else monitoring.cutoff
        if stat >= cut:
            return Decision(DecisionKind.STOP_EFFICACY, stat)
    elif monitoring.kind == "ppos":
        stat = ppos(state, priors, success)
        if stat >= monitoring.cutoff:
            return Decision(DecisionKind.STOP_EFFICACY, stat)
    if futility is not None:
        pp = stat if monitoring.kind == "ppos" else ppos(state, priors, success)
        if pp < futility.ppos_cutoff:
            return Decision(DecisionKind.STOP_FUTILITY, pp)
    if stat is None:
        stat = evidence(posts, success)
    return Decision(DecisionKind.CONTINUE, stat)
