"""Batched adaptive Simpson quadrature."""

import numpy as np

from .settings import DEFAULTS


def adaptive_simpson(f, lo, hi, tol=DEFAULTS.simpson_tol,
                     panels=DEFAULTS.simpson_initial_panels,
                     max_depth=DEFAULTS.simpson_max_depth):
    """Integrate a vectorized ``f`` over [lo, hi] to absolute tolerance ``tol``.

    The range is cut into ``panels`` equal panels; every panel whose Simpson
    estimate disagrees with the sum of its two halves by more than
    ``15 * tol_panel`` is split, each half inheriting half the tolerance.
    All pending panels of one depth are evaluated in a single call to ``f``.
    """
    edges = np.linspace(lo, hi, panels + 1)
    a, b = edges[:-1], edges[1:]
    m = 0.5 * (a + b)
    fe = f(edges)
    fm = f(m)
    fa, fb = fe[:-1], fe[1:]
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    ptol = np.full(panels, tol / panels)
    total = 0.0
    depth = 0
    while a.size:
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        fx = f(np.concatenate([lm, rm]))
        flm, frm = fx[:a.size], fx[a.size:]
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        delta = left + right - whole
        done = np.abs(delta) <= 15.0 * ptol
        if depth >= max_depth:
            done[:] = True
        total += float(np.sum((left + right + delta / 15.0)[done]))
        keep = ~done
        a, m, b = a[keep], m[keep], b[keep]
        fa, fm, fb = fa[keep], fm[keep], fb[keep]
        flm, frm = flm[keep], frm[keep]
        left, right, ptol = left[keep], right[keep], ptol[keep]
        a, m, b, fa, fm, fb, whole, ptol = (
            np.concatenate([a, m]), np.concatenate([0.5 * (a + m), 0.5 * (m + b)]),
            np.concatenate([m, b]), np.concatenate([fa, fm]), np.concatenate([flm, frm]),
            np.concatenate([fm, fb]), np.concatenate([left, right]),
            np.concatenate([ptol, ptol]) / 2.0)
        depth += 1
    return total
