"""Quadrature helpers: adaptive Simpson, Stieltjes integrals dp(s), and
exact integration of nonincreasing staircase functions.

The Stieltjes integrals show up in the Garsia-Rodemich-Rumsey modulus
bound (integration against a strictly increasing gauge p with p(0)=0);
they are computed in the transformed variable w = p(s), where the
integrand may blow up at the left endpoint (vanishing ball measure).
Dyadic panels toward the singular endpoint keep adaptive Simpson cheap.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np


def _simpson(f: Callable[[float], float], a: float, fa: float, b: float, fb: float,
             m: float, fm: float) -> float:
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                     tol: float = 1e-10, max_depth: int = 48) -> float:
    """Adaptive Simpson on [a, b]; nonfinite node values propagate to inf."""
    if b <= a:
        return 0.0
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    if not (math.isfinite(fa) and math.isfinite(fb) and math.isfinite(fm)):
        return math.inf
    whole = _simpson(f, a, fa, b, fb, m, fm)
    return _rec(f, a, fa, b, fb, m, fm, whole, tol, max_depth)


def _rec(f, a, fa, b, fb, m, fm, whole, tol, depth) -> float:
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    if not (math.isfinite(flm) and math.isfinite(frm)):
        return math.inf
    left = _simpson(f, a, fa, m, fm, lm, flm)
    right = _simpson(f, m, fm, b, fb, rm, frm)
    if depth <= 0:
        return left + right
    err = left + right - whole
    if abs(err) <= 15.0 * tol:
        return left + right + err / 15.0
    return (_rec(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + _rec(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1))


def _gauge_inverse(p: Callable[[float], float], w: float, lo: float, hi: float) -> float:
    """Solve p(s) = w on [lo, hi] for strictly increasing p, by bisection."""
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if p(mid) < w:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * (1.0 + hi):
            break
    return 0.5 * (lo + hi)


def stieltjes_integral(g: Callable[[float], float], p: Callable[[float], float],
                       a: float, b: float, rel_tol: float = 1e-9) -> float:
    """Integral of g(s) dp(s) over [a, b].

    Transformed to the w = p(s) variable (so the measure is Lebesgue) and
    integrated panel by panel, with dyadic panels accumulating toward the
    left endpoint where g may be singular.  Returns inf if g is nonfinite
    at an interior node (zero-ball-measure convention) or if the panel
    contributions fail to contract.
    """
    if b <= a:
        return 0.0
    pa, pb = p(a), p(b)
    if not pb > pa:
        raise ValueError("gauge p must be strictly increasing on the range")

    def g_of_w(w: float) -> float:
        s = _gauge_inverse(p, w, a, b)
        return g(s)

    # Dyadic panels in w toward the singular endpoint pa.
    total = 0.0
    right = pb
    prev = math.inf
    rising = 0
    for k in range(200):
        left = pa + (right - pa) * 0.5
        mid_val = g_of_w(0.5 * (left + right))
        if not math.isfinite(mid_val):
            return math.inf
        # local magnitude keeps the panel tolerance meaningful before any
        # mass has accumulated
        scale = max(abs(total), (right - left) * abs(mid_val), 1e-300)
        panel = adaptive_simpson(g_of_w, left, right, tol=rel_tol * scale / 4.0)
        if math.isinf(panel):
            return math.inf
        total += panel
        if total > 1e300:
            return math.inf
        if panel >= prev > 0.0:
            rising += 1
            if rising >= 60:
                return math.inf
        else:
            rising = 0
        if panel <= rel_tol * max(abs(total), 1e-300) and k >= 4:
            # remaining mass bounded by a geometric tail of the last panel
            return total + panel
        prev = panel
        right = left
    return total


def integrate_staircase(values: np.ndarray, edges: np.ndarray) -> float:
    """Sum of values[i] * (edges[i] - edges[i+1]) for descending edges."""
    widths = edges[:-1] - edges[1:]
    return float(np.dot(values, widths))
