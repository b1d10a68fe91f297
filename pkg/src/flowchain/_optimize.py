"""Scalar minimisation and root bracketing used by the bound evaluators."""

from __future__ import annotations

import math
from typing import Callable

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0  # 1/golden ratio


def golden_section(f: Callable[[float], float], a: float, b: float,
                   tol: float = 1e-12, max_iter: int = 400) -> float:
    """Minimise a unimodal f on [a, b]; returns the midpoint of the final bracket."""
    if not b > a:
        raise ValueError(f"invalid bracket [{a}, {b}]")
    c = b - (b - a) * _INVPHI
    d = a + (b - a) * _INVPHI
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * (1.0 + abs(a) + abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - (b - a) * _INVPHI
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + (b - a) * _INVPHI
            fd = f(d)
    return 0.5 * (a + b)


def bisect_root(f: Callable[[float], float], lo: float, hi: float,
                tol: float = 1e-12, max_iter: int = 200) -> float:
    """Root of f on [lo, hi] with f(lo) < 0 < f(hi), by plain bisection."""
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo > 0.0 or fhi < 0.0:
        raise ValueError("no sign change on the given bracket")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if fm < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * (1.0 + abs(lo) + abs(hi)):
            break
    return 0.5 * (lo + hi)


def expand_bracket(f: Callable[[float], float], lo: float, hi: float,
                   factor: float = 2.0, max_iter: int = 200) -> tuple[float, float]:
    """Grow hi geometrically until f(hi) > 0, assuming f(lo) < 0."""
    if f(lo) >= 0.0:
        raise ValueError("f(lo) must be negative")
    for _ in range(max_iter):
        if f(hi) > 0.0:
            return lo, hi
        hi *= factor
    raise ValueError("could not bracket a sign change")
