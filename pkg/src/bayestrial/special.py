"""Regularized incomplete beta function and Beta-Binomial log masses."""

import numpy as np
from scipy.special import betaln, gammaln

from .settings import DEFAULTS

_TINY = 1e-300


def _betacf(x, a, b, tol, max_iter):
    """Modified Lentz evaluation of the incomplete beta continued fraction.

    Vectorized over broadcast arrays; iterates until every element has
    converged.
    """
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < _TINY, _TINY, d)
    d = 1.0 / d
    h = d.copy()
    active = np.ones(x.shape, dtype=bool)
    for m in range(1, max_iter + 1):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            return h
        xa, aa_, ba, qabA, qapA, qamA = x[idx], a[idx], b[idx], qab[idx], qap[idx], qam[idx]
        ca, da, ha = c[idx], d[idx], h[idx]
        m2 = 2.0 * m
        aa = m * (ba - m) * xa / ((qamA + m2) * (aa_ + m2))
        da = 1.0 + aa * da
        da = np.where(np.abs(da) < _TINY, _TINY, da)
        ca = 1.0 + aa / ca
        ca = np.where(np.abs(ca) < _TINY, _TINY, ca)
        da = 1.0 / da
        ha = ha * da * ca
        aa = -(aa_ + m) * (qabA + m) * xa / ((aa_ + m2) * (qapA + m2))
        da = 1.0 + aa * da
        da = np.where(np.abs(da) < _TINY, _TINY, da)
        ca = 1.0 + aa / ca
        ca = np.where(np.abs(ca) < _TINY, _TINY, ca)
        da = 1.0 / da
        delta = da * ca
        ha = ha * delta
        c[idx], d[idx], h[idx] = ca, da, ha
        active[idx] = np.abs(delta - 1.0) > tol
    raise ArithmeticError("incomplete beta continued fraction did not converge")


_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


def _stirlerr(z):
    """lgamma(z) minus its Stirling approximation."""
    z = np.asarray(z, float)
    out = np.empty_like(z)
    big = z >= 15.0
    zb = z[big]
    zb2 = zb * zb
    out[big] = (1.0 / 12.0 - (1.0 / 360.0 - (1.0 / 1260.0 - 1.0 / (1680.0 * zb2)) / zb2) / zb2) / zb
    zs = z[~big]
    out[~big] = gammaln(zs) - ((zs - 0.5) * np.log(zs) - zs + _HALF_LOG_2PI)
    return out


def lbeta(a, b):
    """log B(a, b), accurate when one argument is large."""
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    small = np.minimum(a, b).ravel()
    large = np.maximum(a, b).ravel()
    out = betaln(small, large)
    s = small + large
    one_big = (large >= 10.0) & (small < 10.0)
    if np.any(one_big):
        p, q, t = small[one_big], large[one_big], s[one_big]
        out[one_big] = (gammaln(p) - p * np.log(t) - (q - 0.5) * np.log1p(p / q) + p
                        + _stirlerr(q) - _stirlerr(t))
    both_big = small >= 10.0
    if np.any(both_big):
        p, q, t = small[both_big], large[both_big], s[both_big]
        out[both_big] = (_HALF_LOG_2PI - 0.5 * np.log(t) + (p - 0.5) * np.log(p / t)
                         + (q - 0.5) * np.log(q / t)
                         + _stirlerr(p) + _stirlerr(q) - _stirlerr(t))
    return out.reshape(a.shape)


def _log_front(x, a, b):
    """log( x^a (1-x)^b / B(a, b) ) without cancellation for large a, b."""
    out = a * np.log(x) + b * np.log1p(-x) - lbeta(a, b)
    big = np.minimum(a, b) >= 10.0
    if np.any(big):
        xb, ab, bb = x[big], a[big], b[big]
        s = ab + bb
        p0 = ab / s
        q0 = bb / s
        dev = ab * np.log1p((xb - p0) / p0) + bb * np.log1p((p0 - xb) / q0)
        out[big] = (dev + 0.5 * np.log(ab * bb / s) - _HALF_LOG_2PI
                    - (_stirlerr(ab) + _stirlerr(bb) - _stirlerr(s)))
    return out


def beta_cdf_sf(x, a, b, tol=DEFAULTS.betainc_tol, max_iter=DEFAULTS.betainc_max_iter):
    """Return ``(I_x(a, b), 1 - I_x(a, b))`` elementwise.

    The continued fraction is evaluated on whichever side of the symmetry
    point ``(a + 1) / (a + b + 2)`` converges fast, and that side's tail is
    returned directly so small upper tails keep their relative accuracy.
    """
    x, a, b = np.broadcast_arrays(np.asarray(x, float), np.asarray(a, float),
                                  np.asarray(b, float))
    shape = x.shape
    x, a, b = x.ravel(), a.ravel(), b.ravel()
    if np.any(a <= 0) or np.any(b <= 0) or not np.all(np.isfinite(a + b)):
        raise ValueError("beta shape parameters must be positive and finite")
    cdf = np.empty_like(x)
    sf = np.empty_like(x)
    lo = x <= 0.0
    hi = x >= 1.0
    cdf[lo], sf[lo] = 0.0, 1.0
    cdf[hi], sf[hi] = 1.0, 0.0
    mid = ~(lo | hi)
    if np.any(mid):
        xm, am, bm = x[mid], a[mid], b[mid]
        log_front = _log_front(xm, am, bm)
        flip = xm > (am + 1.0) / (am + bm + 2.0)
        xs = np.where(flip, 1.0 - xm, xm)
        as_ = np.where(flip, bm, am)
        bs = np.where(flip, am, bm)
        tail = np.exp(log_front) * _betacf(xs, as_, bs, tol, max_iter) / as_
        tail = np.clip(tail, 0.0, 1.0)
        cm = np.where(flip, 1.0 - tail, tail)
        sm = np.where(flip, tail, 1.0 - tail)
        cdf[mid], sf[mid] = cm, sm
    return cdf.reshape(shape), sf.reshape(shape)


def beta_cdf(x, a, b):
    return beta_cdf_sf(x, a, b)[0]


def beta_sf(x, a, b):
    return beta_cdf_sf(x, a, b)[1]


def beta_logpdf(x, a, b):
    x = np.asarray(x, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return (a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x) - lbeta(a, b)


def log_choose(n, k):
    n = np.asarray(n, float)
    k = np.asarray(k, float)
    return gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)


def beta_binomial_logpmf(k, n, a, b):
    """log C(n,k) B(a+k, b+n-k) / B(a, b), broadcasting."""
    k = np.asarray(k, float)
    n = np.asarray(n, float)
    return log_choose(n, k) + lbeta(a + k, b + n - k) - lbeta(a, b)


def binomial_logpmf(k, n, p):
    k = np.asarray(k, float)
    n = np.asarray(n, float)
    p = np.asarray(p, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = log_choose(n, k) + np.where(k > 0, k * np.log(p), 0.0) \
            + np.where(n - k > 0, (n - k) * np.log1p(-p), 0.0)
    return out


def binomial_pmf(n, p):
    """Probability vector of Binomial(n, p) over 0..n."""
    k = np.arange(n + 1)
    return np.exp(binomial_logpmf(k, n, p))
