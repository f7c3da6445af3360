"""Informative priors built from historical binary data.

Power priors discount the historical likelihood by a fixed factor, MAP priors
integrate a Beta-Binomial hierarchical model over a hyperparameter grid,
robust MAP priors add a vague component, and commensurate priors link the
current rate to a historical posterior through a precision on the logit
scale.
"""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy.special import digamma, polygamma

from .probability import BetaMixture, BetaParams, BinomialSummary, GridDensity
from .settings import DEFAULTS
from .special import beta_binomial_logpmf


@dataclass(frozen=True)
class HistoricalData:
    studies: tuple
    labels: tuple = None

    def __post_init__(self):
        studies = tuple(s if isinstance(s, BinomialSummary) else BinomialSummary(*s)
                        for s in self.studies)
        if not studies:
            raise ValueError("historical data needs at least one study")
        object.__setattr__(self, "studies", studies)
        if self.labels is not None:
            labels = tuple(self.labels)
            if len(labels) != len(studies):
                raise ValueError("one label per study required")
            object.__setattr__(self, "labels", labels)

    @property
    def pooled(self):
        total = BinomialSummary(0, 0)
        for s in self.studies:
            total = total + s
        return total


@dataclass(frozen=True)
class PowerPriorSpec:
    discount: float
    baseline: BetaParams = BetaParams(1.0, 1.0)

    def __post_init__(self):
        if not 0.0 <= self.discount <= 1.0:
            raise ValueError("power prior discount must lie in [0, 1]")


@dataclass(frozen=True)
class MapHyperGrid:
    mean_grid: tuple
    concentration_grid: tuple
    hyper_weights: tuple = None

    def __post_init__(self):
        mu = tuple(float(v) for v in self.mean_grid)
        nu = tuple(float(v) for v in self.concentration_grid)
        if not mu or not nu:
            raise ValueError("hyper grids must be non-empty")
        if any(not 0 < m < 1 for m in mu) or any(v <= 0 for v in nu):
            raise ValueError("means must lie in (0, 1) and concentrations be positive")
        object.__setattr__(self, "mean_grid", mu)
        object.__setattr__(self, "concentration_grid", nu)
        if self.hyper_weights is None:
            w = np.full((len(mu), len(nu)), 1.0 / (len(mu) * len(nu)))
        else:
            w = np.asarray(self.hyper_weights, float).reshape(len(mu), len(nu))
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
                raise ValueError("hyper_weights must be non-negative and sum to 1")
        object.__setattr__(self, "hyper_weights", tuple(map(tuple, w)))

    @classmethod
    def default(cls):
        """Flat hyperprior on 99 means in (0.005, 0.995) x 21 log-spaced concentrations."""
        mu = np.linspace(0.005, 0.995, DEFAULTS.map_mean_points)
        lo, hi = DEFAULTS.map_concentration_range
        nu = np.geomspace(lo, hi, DEFAULTS.map_concentration_points)
        return cls(tuple(mu), tuple(nu))


@dataclass(frozen=True)
class RobustMixSpec:
    map_weight: float
    vague: BetaParams = BetaParams(1.0, 1.0)

    def __post_init__(self):
        if not 0.0 <= self.map_weight <= 1.0:
            raise ValueError("map_weight must lie in [0, 1]")


@dataclass(frozen=True)
class CommensurateSpec:
    tau_grid: tuple
    tau_weights: tuple = None
    theta_grid_size: int = DEFAULTS.grid_points

    def __post_init__(self):
        tau = tuple(float(t) for t in self.tau_grid)
        if not tau or any(t <= 0 for t in tau) or any(b <= a for a, b in zip(tau, tau[1:])):
            raise ValueError("tau_grid must be positive and strictly increasing")
        w = self.tau_weights
        w = tuple([1.0 / len(tau)] * len(tau)) if w is None else tuple(float(v) for v in w)
        if len(w) != len(tau) or any(v < 0 for v in w) or abs(math.fsum(w) - 1.0) > 1e-10:
            raise ValueError("tau_weights must match tau_grid and sum to 1")
        if int(self.theta_grid_size) < 3:
            raise ValueError("theta_grid_size must be at least 3")
        object.__setattr__(self, "tau_grid", tau)
        object.__setattr__(self, "tau_weights", w)
        object.__setattr__(self, "theta_grid_size", int(self.theta_grid_size))


def power_prior(spec, hist):
    """Beta(a0 + d*y_h, b0 + d*(n_h - y_h)) for discount d."""
    if isinstance(hist, HistoricalData):
        hist = hist.pooled
    d = spec.discount
    return BetaParams(spec.baseline.alpha + d * hist.successes,
                      spec.baseline.beta + d * hist.failures)


def map_node_log_weights(hist, hyper):
    """Unnormalized log posterior weight of every (mean, concentration) node."""
    mu = np.asarray(hyper.mean_grid)[:, None]
    nu = np.asarray(hyper.concentration_grid)[None, :]
    a, b = mu * nu, (1.0 - mu) * nu
    with np.errstate(divide="ignore"):
        lw = np.log(np.asarray(hyper.hyper_weights))
    for s in hist.studies:
        lw = lw + beta_binomial_logpmf(s.successes, s.trials, a, b)
    return lw, a, b


def map_prior(hist, hyper=None):
    """Meta-analytic predictive prior for a new study's response rate."""
    if not isinstance(hist, HistoricalData):
        hist = HistoricalData(tuple(hist))
    hyper = MapHyperGrid.default() if hyper is None else hyper
    lw, a, b = map_node_log_weights(hist, hyper)
    lw = lw.ravel()
    w = np.exp(lw - np.max(lw))
    return BetaMixture.from_arrays(w, a.ravel(), b.ravel())


def robustify(map_mixture, spec):
    """Mix the MAP prior with a vague component of weight 1 - w."""
    if isinstance(map_mixture, BetaParams):
        map_mixture = BetaMixture.single(map_mixture)
    w = spec.map_weight
    if w == 1.0:
        return map_mixture
    if w == 0.0:
        return BetaMixture.single(spec.vague)
    comps = [(w * wk, p) for wk, p in map_mixture.components]
    comps.append((1.0 - w, spec.vague))
    weights = np.array([c[0] for c in comps])
    weights[-1] += 1.0 - math.fsum(weights)
    return BetaMixture(tuple(zip(weights.tolist(), (c[1] for c in comps))))


def logit_moments(params):
    """Exact mean and variance of logit(theta) for theta ~ Beta(a, b)."""
    a, b = params.alpha, params.beta
    return float(digamma(a) - digamma(b)), float(polygamma(1, a) + polygamma(1, b))


def commensurate_prior(hist_posterior, spec):
    """Prior for the current rate given a historical posterior and a tau grid.

    The historical posterior is summarized by the mean and variance of its
    logit; each commensurability precision tau widens that normal by 1/tau.
    The grid is equally spaced on the logit scale, so point masses are
    proportional to the logit-scale density.
    """
    if hist_posterior.alpha <= 1.0 or hist_posterior.beta <= 1.0:
        warnings.warn("historical posterior has a shape parameter <= 1; logit-normal "
                      "moment matching is unreliable", UserWarning, stacklevel=2)
    centre, hist_var = logit_moments(hist_posterior)
    half = DEFAULTS.commensurate_logit_halfwidth
    eta = np.linspace(centre - half, centre + half, spec.theta_grid_size)
    dens = np.zeros_like(eta)
    for tau, wt in zip(spec.tau_grid, spec.tau_weights):
        v = 1.0 / tau + hist_var
        dens += wt * np.exp(-0.5 * (eta - centre) ** 2 / v) / math.sqrt(2 * math.pi * v)
    theta = 1.0 / (1.0 + np.exp(-eta))
    return GridDensity.from_arrays(theta, dens)


@dataclass(frozen=True)
class BorrowingSummary:
    """Diagnostic numbers reported alongside a borrowing prior."""

    mean: float
    sd: float
    ess: float = field(default=None)


def moment_ess(prior):
    """Effective sample size of a prior by matching a Beta's mean and variance."""
    m, v = prior.mean, prior.var
    return m * (1.0 - m) / v - 1.0


def summarize(prior):
    return BorrowingSummary(mean=prior.mean, sd=math.sqrt(prior.var), ess=moment_ess(prior))
