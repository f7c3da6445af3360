"""Beta, Beta-mixture and grid representations of a response rate.

All three types are immutable and expose the same small interface
(``mean``, ``var``, ``cdf``, ``sf``, ``update``, ``predictive_pmf``) so the
decision rules and the trial engine can treat any prior uniformly.
"""

from dataclasses import dataclass
from functools import cached_property
import math

import numpy as np

from .exceptions import DegenerateUpdateError
from .settings import DEFAULTS
from .special import (beta_binomial_logpmf, beta_cdf_sf, beta_logpdf,
                      binomial_logpmf)


@dataclass(frozen=True)
class BinomialSummary:
    successes: int
    trials: int

    def __post_init__(self):
        if int(self.successes) != self.successes or int(self.trials) != self.trials:
            raise ValueError("successes and trials must be integers")
        object.__setattr__(self, "successes", int(self.successes))
        object.__setattr__(self, "trials", int(self.trials))
        if not 0 <= self.successes <= self.trials:
            raise ValueError(f"need 0 <= successes <= trials, got {self.successes}/{self.trials}")

    def __add__(self, other):
        return BinomialSummary(self.successes + other.successes, self.trials + other.trials)

    @property
    def failures(self):
        return self.trials - self.successes


@dataclass(frozen=True)
class Interval:
    low: float
    high: float
    level: float

    def __post_init__(self):
        if not self.low <= self.high:
            raise ValueError("interval low must not exceed high")
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must lie in (0, 1)")

    def contains(self, x):
        return self.low <= x <= self.high


@dataclass(frozen=True)
class BetaParams:
    """Beta(alpha, beta); alpha and beta act as prior pseudo-counts."""

    alpha: float
    beta: float

    def __post_init__(self):
        a, b = float(self.alpha), float(self.beta)
        if not (math.isfinite(a) and math.isfinite(b) and a > 0 and b > 0):
            raise ValueError(f"Beta parameters must be positive and finite, got ({a}, {b})")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @property
    def mean(self):
        return self.alpha / (self.alpha + self.beta)

    @property
    def var(self):
        s = self.alpha + self.beta
        return self.alpha * self.beta / (s * s * (s + 1.0))

    def cdf(self, x):
        return beta_cdf_sf(x, self.alpha, self.beta)[0]

    def sf(self, x):
        return beta_cdf_sf(x, self.alpha, self.beta)[1]

    def logpdf(self, x):
        return beta_logpdf(x, self.alpha, self.beta)

    def update(self, data):
        return update_beta(self, data)

    def predictive_pmf(self, m):
        k = np.arange(m + 1)
        return np.exp(beta_binomial_logpmf(k, m, self.alpha, self.beta))


@dataclass(frozen=True)
class BetaMixture:
    """Finite mixture ``sum_k w_k Beta(a_k, b_k)``."""

    components: tuple

    def __post_init__(self):
        comps = tuple((float(w), p) for w, p in self.components)
        if not comps:
            raise ValueError("mixture needs at least one component")
        for w, p in comps:
            if not isinstance(p, BetaParams):
                raise TypeError("mixture components must be (weight, BetaParams)")
            if not 0.0 < w <= 1.0:
                raise ValueError(f"mixture weight {w} outside (0, 1]")
        total = math.fsum(w for w, _ in comps)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"mixture weights sum to {total!r}, not 1")
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_arrays(cls, weights, alphas, betas, prune=DEFAULTS.mixture_prune):
        """Build a mixture from unnormalized weights, dropping negligible ones."""
        w = np.asarray(weights, float)
        total = w.sum()
        if not total > 0 or not np.isfinite(total):
            raise DegenerateUpdateError("degenerate mixture update")
        w = w / total
        keep = w >= prune
        w = w[keep] / w[keep].sum()
        # exact renormalization so the weights sum to one in floating point
        w[np.argmax(w)] += 1.0 - math.fsum(w)
        comps = tuple((float(wk), BetaParams(a, b))
                      for wk, a, b in zip(w, np.asarray(alphas, float)[keep],
                                          np.asarray(betas, float)[keep]))
        return cls(comps)

    @classmethod
    def single(cls, params):
        return cls(((1.0, params),))

    @cached_property
    def weights(self):
        return np.array([w for w, _ in self.components])

    @cached_property
    def alphas(self):
        return np.array([p.alpha for _, p in self.components])

    @cached_property
    def betas(self):
        return np.array([p.beta for _, p in self.components])

    @property
    def mean(self):
        return float(np.dot(self.weights, self.alphas / (self.alphas + self.betas)))

    @property
    def var(self):
        a, b = self.alphas, self.betas
        s = a + b
        m = a / s
        second = a * (a + 1.0) / (s * (s + 1.0))
        return float(np.dot(self.weights, second) - np.dot(self.weights, m) ** 2)

    def _tails(self, x):
        x = np.asarray(x, float)
        cdf, sf = beta_cdf_sf(x[..., None], self.alphas, self.betas)
        return cdf @ self.weights, sf @ self.weights

    def cdf(self, x):
        return self._tails(x)[0]

    def sf(self, x):
        return self._tails(x)[1]

    def logpdf(self, x):
        x = np.asarray(x, float)
        lp = beta_logpdf(x[..., None], self.alphas, self.betas) + np.log(self.weights)
        return np.logaddexp.reduce(lp, axis=-1)

    def update(self, data):
        return update_beta_mixture(self, data)

    def predictive_pmf(self, m):
        k = np.arange(m + 1)
        lp = beta_binomial_logpmf(k[:, None], m, self.alphas, self.betas)
        return np.exp(lp) @ self.weights


@dataclass(frozen=True)
class GridDensity:
    """Discretized distribution: point masses on a strictly increasing grid.

    Expectations treat the masses as atoms. Tail probabilities and quantiles
    spread each mass uniformly over its cell (midpoints between neighbouring
    points, clipped to ``domain``), so a threshold that lands on a grid point
    splits that point's mass instead of jumping over it.
    """

    grid: tuple
    masses: tuple
    domain: tuple = (0.0, 1.0)

    def __post_init__(self):
        g = tuple(float(v) for v in self.grid)
        m = tuple(float(v) for v in self.masses)
        if len(g) != len(m) or not g:
            raise ValueError("grid and masses must be non-empty and the same length")
        ga = np.asarray(g)
        if np.any(np.diff(ga) <= 0):
            raise ValueError("grid must be strictly increasing")
        lo, hi = float(self.domain[0]), float(self.domain[1])
        if ga[0] < lo or ga[-1] > hi:
            raise ValueError("grid points outside the parameter domain")
        ma = np.asarray(m)
        if np.any(ma < 0) or not np.all(np.isfinite(ma)):
            raise ValueError("masses must be non-negative and finite")
        if abs(math.fsum(m) - 1.0) > 1e-10:
            raise ValueError("grid masses must sum to 1")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "domain", (lo, hi))

    @classmethod
    def from_arrays(cls, grid, masses, domain=(0.0, 1.0)):
        m = np.asarray(masses, float)
        total = m.sum()
        if not total > 0:
            raise DegenerateUpdateError("likelihood annihilates prior")
        return cls(tuple(np.asarray(grid, float)), tuple(m / total), domain)

    @classmethod
    def uniform(cls, points=DEFAULTS.grid_points):
        """Equal masses at the cell midpoints of ``points`` equal cells of (0, 1)."""
        grid = (np.arange(points) + 0.5) / points
        return cls.from_arrays(grid, np.ones(points))

    @classmethod
    def from_prior(cls, prior, points=DEFAULTS.grid_points):
        """Discretize a Beta or Beta-mixture prior by exact cell probabilities."""
        edges = np.linspace(0.0, 1.0, points + 1)
        cdf = np.asarray(prior.cdf(edges))
        cdf[0], cdf[-1] = 0.0, 1.0
        return cls.from_arrays((edges[:-1] + edges[1:]) / 2, np.diff(cdf))

    @cached_property
    def points(self):
        return np.asarray(self.grid)

    @cached_property
    def probs(self):
        return np.asarray(self.masses)

    @cached_property
    def _edges(self):
        g = self.points
        lo, hi = self.domain
        if g.size == 1:
            return np.array([g[0], g[0]])
        mid = (g[1:] + g[:-1]) / 2
        first = max(lo, g[0] - (g[1] - g[0]) / 2)
        last = min(hi, g[-1] + (g[-1] - g[-2]) / 2)
        return np.concatenate([[first], mid, [last]])

    @cached_property
    def _edge_cdf(self):
        c = np.concatenate([[0.0], np.cumsum(self.probs)])
        c[-1] = 1.0
        return c

    @property
    def mean(self):
        return float(np.dot(self.probs, self.points))

    @property
    def var(self):
        m = self.mean
        return float(np.dot(self.probs, (self.points - m) ** 2))

    def cdf(self, x):
        x = np.asarray(x, float)
        return np.interp(x, self._edges, self._edge_cdf, left=0.0, right=1.0)

    def sf(self, x):
        return 1.0 - self.cdf(x)

    def expect(self, fn):
        """Expectation of ``fn`` evaluated on the grid points."""
        return np.asarray(fn(self.points)).T @ self.probs

    def update(self, data):
        y, n = data.successes, data.trials
        return update_grid(self, lambda t: binomial_logpmf(y, n, t))

    def predictive_pmf(self, m):
        k = np.arange(m + 1)
        lik = np.exp(binomial_logpmf(k[:, None], m, self.points))
        return lik @ self.probs


Distribution = (BetaParams, BetaMixture, GridDensity)


def update_beta(prior, data):
    """Conjugate update: Beta(a + y, b + n - y)."""
    return BetaParams(prior.alpha + data.successes, prior.beta + data.failures)


def beta_binomial_marginal(prior, n, y):
    """Prior predictive probability of y successes in n trials."""
    if not 0 <= y <= n:
        raise ValueError("need 0 <= y <= n")
    return float(np.exp(beta_binomial_logpmf(y, n, prior.alpha, prior.beta)))


def update_beta_mixture(prior, data):
    """Update each component and reweight by its Beta-Binomial marginal."""
    y, n = data.successes, data.trials
    if n == 0:
        return prior
    a, b = prior.alphas, prior.betas
    log_w = np.log(prior.weights) + beta_binomial_logpmf(y, n, a, b)
    if not np.any(np.isfinite(log_w)):
        raise DegenerateUpdateError("degenerate mixture update")
    w = np.exp(log_w - np.max(log_w))
    return BetaMixture.from_arrays(w, a + y, b + n - y)


def update_grid(prior, log_likelihood):
    """Pointwise Bayes update on a grid; ``log_likelihood`` maps grid -> log lik."""
    ll = np.asarray(log_likelihood(prior.points), float)
    if ll.shape != prior.points.shape:
        raise ValueError("log likelihood must return one value per grid point")
    if np.any(np.isnan(ll)) or np.any(ll == np.inf):
        raise ValueError("log likelihood must be finite or -inf at every grid point")
    with np.errstate(divide="ignore"):
        lw = np.log(prior.probs) + ll
    top = np.max(lw)
    if not np.isfinite(top):
        raise DegenerateUpdateError("likelihood annihilates prior")
    w = np.exp(lw - top)
    return GridDensity.from_arrays(prior.points, w, prior.domain)


def posterior(prior, data):
    """Posterior of any supported prior after binomial data."""
    return prior.update(data)


def prob_exceeds(dist, threshold):
    """Pr(theta > threshold)."""
    return float(dist.sf(threshold))


def prior_ess(prior):
    """Prior effective sample size alpha + beta."""
    return prior.alpha + prior.beta


def quantile(dist, q, tol=DEFAULTS.quantile_tol):
    """Quantile by bisection on the tail probability."""
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    if isinstance(dist, GridDensity):
        edges, c = dist._edges, dist._edge_cdf
        i = int(np.searchsorted(c, q, side="left"))
        if i == 0:
            return float(edges[0])
        if i >= len(c):
            return float(edges[-1])
        span = c[i] - c[i - 1]
        frac = 0.0 if span <= 0 else (q - c[i - 1]) / span
        return float(edges[i - 1] + frac * (edges[i] - edges[i - 1]))
    lo, hi = 0.0, 1.0
    target = 1.0 - q
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if dist.sf(mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def credible_interval(dist, level):
    """Equal-tailed credible interval."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    tail = (1.0 - level) / 2.0
    return Interval(quantile(dist, tail), quantile(dist, 1.0 - tail), level)
