"""Closed-form rate functions and growth constants.

The central object is the small-ball rate function

    I(gamma) = (gamma-lam)^2/(2 sigma^2)          for gamma >= lam + sigma^2 d
             = d (gamma - lam - sigma^2 d / 2)    on the middle band
             = 0                                  for gamma <= lam + sigma^2 d/2,

the exponential decay rate (in the horizon T) of the probability that a
cube of side exp(-gamma T) is blown up to diameter u by a flow with
moment parameters (lam, sigma).  From it derive gamma0, the positive
solution of I(gamma) = gamma*Delta, and the almost-sure linear dispersion
constant K = B + A*sqrt(2*gamma0*Delta).  The module also carries the
one-point escape rates, Feller's series for the range of Brownian motion,
the drifted-hitting-time Laplace transform and the finite-horizon bound
for differentiable translation-invariant Brownian flows.
"""

from __future__ import annotations

import math
import warnings
from typing import Callable

import numpy as np
from scipy import integrate, stats

from ._optimize import bisect_root, expand_bracket, golden_section
from .params import DiffFlowParams, DispersionParams, HParams


def small_ball_rate(hp: HParams, gamma: float) -> float:
    """Piecewise rate I(gamma); ties evaluate the upper branch."""
    if gamma < 0.0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    lam, s2, d = hp.lam, hp.sigma ** 2, float(hp.dim)
    if gamma >= lam + s2 * d:
        return (gamma - lam) ** 2 / (2.0 * s2)
    if gamma >= lam + 0.5 * s2 * d:
        return d * (gamma - lam - 0.5 * s2 * d)
    return 0.0


def small_ball_rate_homeo(hp: HParams, gamma: float) -> float:
    """Rate with the dimension lowered by one (homeomorphism flows attain
    the cube supremum on a face).  dim=1 degenerates to the pure quadratic."""
    if hp.dim == 1:
        if gamma >= hp.lam:
            return (gamma - hp.lam) ** 2 / (2.0 * hp.sigma ** 2)
        return 0.0
    lowered = HParams(hp.lam, hp.sigma, hp.cbar, hp.dim - 1)
    return small_ball_rate(lowered, gamma)


def _lambda0(dp: DispersionParams) -> float:
    d = float(dp.hp.dim)
    return dp.hp.sigma ** 2 * d / dp.delta * (d / 2.0 - dp.delta)


def _gamma0_closed_form(dp: DispersionParams) -> float:
    lam, s2, d = dp.hp.lam, dp.hp.sigma ** 2, float(dp.hp.dim)
    delta = dp.delta
    if lam <= _lambda0(dp):
        if delta >= d:
            raise ValueError(
                f"delta={delta} >= dim={d} is incompatible with the "
                "low-drift branch of gamma0")
        return d / (d - delta) * (lam + 0.5 * s2 * d)
    return lam + s2 * delta + math.sqrt(2.0 * lam * s2 * delta + s2 ** 2 * delta ** 2)


def _gamma0_bisection(dp: DispersionParams) -> float:
    lam, s2, d = dp.hp.lam, dp.hp.sigma ** 2, float(dp.hp.dim)
    delta = dp.delta

    def f(g: float) -> float:
        return small_ball_rate(dp.hp, g) - g * delta

    lo = lam + 0.5 * s2 * d + 1e-300  # I vanishes here, so f < 0
    lo, hi = expand_bracket(f, lo, lo + max(lam + s2 * d + delta, 1.0) * 10.0)
    return bisect_root(f, lo, hi, tol=1e-14)


def gamma0(dp: DispersionParams) -> float:
    """Unique positive gamma with I(gamma) = gamma * Delta.

    The closed form is cross-validated against a bisection root; on
    disagreement beyond 1e-10 relative the bisection value is returned
    with a warning.
    """
    closed = _gamma0_closed_form(dp)
    root = _gamma0_bisection(dp)
    if abs(closed - root) > 1e-10 * max(abs(closed), 1.0):
        warnings.warn(
            f"gamma0 closed form {closed!r} disagrees with bisection root "
            f"{root!r}; returning the root", stacklevel=2)
        return root
    return closed


def growth_constant_K(dp: DispersionParams) -> float:
    """Almost-sure linear growth constant.

    Evaluates the two-branch closed form in (Lambda0-split) parameters and
    checks it against the identity K = B + A*sqrt(2*gamma0*Delta)."""
    lam, s2, d = dp.hp.lam, dp.hp.sigma ** 2, float(dp.hp.dim)
    delta, A, B = dp.delta, dp.a_diff, dp.b_drift
    if lam >= _lambda0(dp):
        K = B + A * math.sqrt(
            2.0 * delta * (lam + s2 * delta + math.sqrt(s2 ** 2 * delta ** 2
                                                        + 2.0 * delta * lam * s2)))
    else:
        if delta >= d:
            raise ValueError(
                f"delta={delta} >= dim={d} is incompatible with the "
                "low-drift branch of K")
        K = B + A * math.sqrt(2.0 * delta * d / (d - delta) * (lam + 0.5 * s2 * d))
    identity = B + A * math.sqrt(2.0 * gamma0(dp) * delta)
    if abs(K - identity) > 1e-9 * max(abs(K), 1.0):
        warnings.warn(
            f"growth constant branches disagree: {K!r} vs {identity!r}",
            stacklevel=2)
    return K


def growth_constant_homeo(dp: DispersionParams) -> float:
    """Growth constant with Delta replaced by min(Delta, dim-1)."""
    d = dp.hp.dim
    delta_eff = min(dp.delta, float(d - 1))
    if delta_eff <= 0.0:
        warnings.warn(
            "dim=1 forces the effective box dimension to 0; K degenerates to B",
            stacklevel=2)
        return dp.b_drift
    if delta_eff == dp.delta:
        return growth_constant_K(dp)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lowered = DispersionParams(delta_eff, dp.a_diff, dp.b_drift, dp.hp)
    return growth_constant_K(lowered)


def one_point_rate(k: float, A: float, B: float) -> float:
    """Escape rate exponent for the one-point motion at speed k:
    -(k-B)_+^2/(2A^2) when k >= -B, else 2*B*k/A^2 (B < 0 there)."""
    if not (k > 0 and A > 0):
        raise ValueError("k and A must be positive")
    if k >= -B:
        return -max(k - B, 0.0) ** 2 / (2.0 * A * A)
    return 2.0 * B * k / (A * A)


def diff_flow_rate(xi: float, sigma: float) -> float:
    """Decay rate -xi^2/(2 sigma^2) for differentiable translation
    invariant Brownian flows."""
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if xi < 0:
        raise ValueError(f"xi must be >= 0, got {xi}")
    return -(xi * xi) / (2.0 * sigma * sigma)


def hitting_laplace(lambda_lt: float, hp: HParams, z: float) -> float:
    """Laplace transform E exp(-lambda * tau_z) of the first time
    lam*t + sigma*W_t reaches log(z/cbar):

        exp{(lam - sqrt(2*lambda*sigma^2 + lam^2)) * log(z/cbar) / sigma^2}
    """
    if not lambda_lt > 0:
        raise ValueError(f"lambda must be > 0, got {lambda_lt}")
    if not z > hp.cbar:
        raise ValueError(
            f"z must exceed cbar={hp.cbar} (the hitting time is trivial "
            f"otherwise), got {z}")
    s2 = hp.sigma ** 2
    return math.exp((hp.lam - math.sqrt(2.0 * lambda_lt * s2 + hp.lam ** 2))
                    * math.log(z / hp.cbar) / s2)


def diff_flow_finite_bound(p: DiffFlowParams, T: float,
                           optimize_z: bool = False) -> float:
    """Finite-horizon log-probability bound for the displacement event of a
    differentiable translation-invariant Brownian flow.

    With lambda = ((lam+xi)^2 - lam^2)/(2 sigma^2) and ladder length
    m = floor(((lam+xi)T + log u_hat)/log z) the bound is

        lambda*T + m * log(exp(-(xi/sigma^2) log((z-eps)/cbar)) + eps).

    With ``optimize_z`` the ladder step is tuned by golden section on
    log z over [cbar*e, cbar*e^40] (eps stays fixed).  A nonnegative value
    (xi = 0) is vacuous and returned as such.
    """
    hp = p.hp
    if not T > 0:
        raise ValueError(f"T must be > 0, got {T}")
    if math.exp(-(hp.lam + p.xi) * T) >= p.u_hat:
        raise ValueError(
            "horizon too short: need exp(-(lam+xi)T) < u_hat for the ladder")

    def log_bound(z: float) -> float:
        if z <= p.admissibility_floor or z <= hp.cbar:
            return math.inf
        lam_t = ((hp.lam + p.xi) ** 2 - hp.lam ** 2) / (2.0 * hp.sigma ** 2)
        m = math.floor(((hp.lam + p.xi) * T + math.log(p.u_hat)) / math.log(z))
        per_rung = math.log(
            math.exp(-(p.xi / hp.sigma ** 2) * math.log((z - p.eps) / hp.cbar))
            + p.eps)
        return lam_t * T + m * per_rung

    if not optimize_z:
        result = log_bound(p.z)
    else:
        lo = max(hp.cbar * math.e, p.admissibility_floor * (1.0 + 1e-9))
        hi = hp.cbar * math.exp(40.0)
        t = golden_section(lambda lt: log_bound(math.exp(lt)),
                           math.log(lo), math.log(hi), tol=1e-10)
        result = min(log_bound(math.exp(t)), log_bound(p.z))
    if result >= 0.0:
        warnings.warn("log-probability bound is nonnegative (vacuous)",
                      stacklevel=2)
    return result


def bm_range_density(r: float, tol: float = 1e-12) -> float:
    """Feller's alternating series for the density of the range
    max - min of Brownian motion on [0,1]:

        8 * sum_{j>=1} (-1)^(j-1) j^2 phi(j r),

    truncated once the terms are past their peak and below tol (the
    alternating remainder is at most the first dropped term)."""
    if r < 0:
        raise ValueError(f"range value must be >= 0, got {r}")
    if r == 0.0:
        return 0.0
    peak = math.sqrt(2.0) / r
    total = 0.0
    j = 1
    block = 2048
    while True:
        jj = np.arange(j, j + block, dtype=float)
        terms = jj * jj * np.exp(-0.5 * (jj * r) ** 2) / math.sqrt(2.0 * math.pi)
        signs = np.where(jj % 2 == 1, 1.0, -1.0)
        total += float(np.dot(signs, terms))
        j += block
        if jj[-1] > peak and terms[-1] < tol:
            break
        if j > 10_000_000:
            break
    return 8.0 * total


def bm_range_tail(u: float, tol: float = 1e-12) -> tuple[float, float]:
    """(numeric_tail, analytic_dominator) for the Brownian range on [0,1].

    numeric_tail integrates the density from u; the dominator is the
    termwise-absolute bound 4 * sum_j j * exp(-j^2 u^2/2) (infinite at 0),
    which always dominates the numeric tail."""
    if u < 0:
        raise ValueError(f"u must be >= 0, got {u}")
    if u == 0.0:
        return 1.0, math.inf
    numeric, _ = integrate.quad(lambda r: bm_range_density(r, tol), u, np.inf,
                                limit=200)
    dominator = 0.0
    j = 1
    while True:
        term = j * math.exp(-0.5 * (j * u) ** 2)
        dominator += term
        j += 1
        if j > 1.0 / (u * u) + 2 and term < 1e-16 * max(dominator, 1e-300):
            break
        if j > 10_000_000:
            break
    return float(numeric), 4.0 * dominator


def schilder_infimum(k: float, A: float, b_tilde: float) -> float:
    """Energy infimum over paths building a drift-adjusted rise of k/A:
    (1/2)(k/A + B~)^2 when B~ <= k/A, else 2*B~*k/A."""
    if not (k > 0 and A > 0 and b_tilde > 0):
        raise ValueError("k, A, b_tilde must all be positive")
    ka = k / A
    if b_tilde <= ka:
        return 0.5 * (ka + b_tilde) ** 2
    return 2.0 * b_tilde * ka


def bump_field_rate(gamma: float, xi: float, hp: HParams) -> float:
    """Sharpness expression (xi-gamma)d - (xi-lam)^2/(2 sigma^2) for the
    lattice-of-bumps field with spacing exp(-xi T).

    At xi = lam + sigma^2 d the negative part of this expression equals
    -I(gamma) throughout gamma in (lam, lam + sigma^2 d); callers cap at 0
    where the raw value is positive (the attained rate is 0 there)."""
    if not gamma > hp.lam:
        raise ValueError(f"gamma must exceed lam={hp.lam}, got {gamma}")
    if not xi > gamma:
        raise ValueError(f"xi must exceed gamma={gamma}, got {xi}")
    return (xi - gamma) * hp.dim - (xi - hp.lam) ** 2 / (2.0 * hp.sigma ** 2)


def negative_drift_growth_bound(dp: DispersionParams) -> float:
    """Linear growth bound gamma0*Delta*A^2/(-2B) for strictly inward
    drift (B < 0); flagged when it exceeds -B, where the derivation
    stops being valid."""
    if dp.b_drift >= 0.0:
        raise ValueError(f"b_drift must be negative, got {dp.b_drift}")
    value = gamma0(dp) * dp.delta * dp.a_diff ** 2 / (-2.0 * dp.b_drift)
    if value > -dp.b_drift:
        warnings.warn(
            f"growth bound {value:.6g} exceeds -B={-dp.b_drift}; outside "
            "its validity range", stacklevel=2)
    return value


def gaussian_upper_tail(x: float) -> float:
    """P{N(0,1) >= x}, shared by the analytic oracles."""
    return float(stats.norm.sf(x))
