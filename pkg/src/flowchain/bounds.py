"""Explicit chaining tail bounds.

Four classical routes from two-point tail/moment information to a bound on
the probability that the range diameter of a process exceeds a threshold:

* Kolmogorov continuity criterion with explicit constants,
* basic chaining over nested nets,
* Ledoux-Talagrand chaining through the entropy integral,
* the Garsia-Rodemich-Rumsey (GRR) modulus inequality.

On top of these, ``small_ball_tail_bound`` instantiates the first three
routes for a flow satisfying the geometric-Brownian moment hypothesis
(:class:`~flowchain.params.HParams`) on a cube of side exp(-gamma*T),
with free parameters (moment order q, Hoelder exponent kappa) optimised
numerically.  All route bounds share the T-exponent
(lam - gamma + q*sigma^2/2)*q and are evaluated in log space so that very
large horizons do not overflow.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from ._optimize import golden_section
from ._quad import stieltjes_integral
from ._rng import TAG_VALIDATE, stream
from .params import HParams

BASEL_C = 6.0 / math.pi ** 2  # normaliser making sum C/(j+1)^2 = 1
_LOG2 = math.log(2.0)


def cap_probability(x: float) -> float:
    """Probability bounds are useful raw (>=0) and capped at 1."""
    return min(1.0, x)


# ---------------------------------------------------------------------------
# Kolmogorov continuity criterion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KolmogorovParams:
    """Moment inequality data: E rho(Z_x, Z_y)^a <= c |x-y|_1^(dim + b)."""

    a: float      # moment order, > 0
    b: float      # excess exponent, > 0
    c: float      # moment constant, > 0
    dim: int      # spatial dimension of the unit-cube index set
    kappa: float  # Hoelder exponent, in (0, b/a)

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.c > 0):
            raise ValueError("a, b, c must all be positive")
        if not (isinstance(self.dim, int) and self.dim >= 1):
            raise ValueError(f"dim must be a positive integer, got {self.dim}")
        if not 0.0 < self.kappa < self.b / self.a:
            raise ValueError(
                f"kappa must lie in (0, {self.b / self.a}), got {self.kappa}; "
                "outside that range the dyadic moment series diverges")


@dataclass(frozen=True)
class KolmogorovBounds:
    tail_bound: float         # raw bound on P{sup rho >= u}
    tail_bound_capped: float  # min(tail_bound, 1)
    s_moment_bound: float     # bound on E S^a for the dyadic modulus variable
    modulus_coeff: float      # sup rho <= modulus_coeff * S * r^kappa


def kolmogorov_bounds(p: KolmogorovParams, u: float) -> KolmogorovBounds:
    """Tail, moment and modulus constants of the continuity criterion.

    tail = (2d/(1-2^-kappa))^a * c*d*2^(a*kappa-b)/(1-2^(a*kappa-b)) * u^-a
    """
    if not u > 0:
        raise ValueError(f"u must be > 0, got {u}")
    d = p.dim
    log_modulus = math.log(2.0 * d) - math.log1p(-(2.0 ** (-p.kappa)))
    t = p.a * p.kappa - p.b  # < 0 by the kappa constraint
    log_s_moment = math.log(p.c) + math.log(d) + t * _LOG2 - math.log1p(-(2.0 ** t))
    log_tail = p.a * log_modulus + log_s_moment - p.a * math.log(u)
    tail = math.exp(log_tail) if log_tail < 709.0 else math.inf
    return KolmogorovBounds(
        tail_bound=tail,
        tail_bound_capped=cap_probability(tail),
        s_moment_bound=math.exp(log_s_moment) if log_s_moment < 709.0 else math.inf,
        modulus_coeff=math.exp(log_modulus),
    )


# ---------------------------------------------------------------------------
# Basic chaining over nested nets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChainNetSpec:
    """Net radii delta_j, budget fractions eps_j and net cardinalities.

    ``log_cardinalities`` carries exact logs for nets whose cardinalities
    overflow float64 (the chaining sum only ever consumes the logs).
    """

    deltas: np.ndarray
    epsilons: np.ndarray
    cardinalities: np.ndarray
    log_cardinalities: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        deltas = np.asarray(self.deltas, dtype=float)
        epsilons = np.asarray(self.epsilons, dtype=float)
        cards = np.asarray(self.cardinalities, dtype=float)
        object.__setattr__(self, "deltas", deltas)
        object.__setattr__(self, "epsilons", epsilons)
        object.__setattr__(self, "cardinalities", cards)
        if self.log_cardinalities is None:
            object.__setattr__(self, "log_cardinalities", np.log(cards))
        else:
            object.__setattr__(
                self, "log_cardinalities",
                np.asarray(self.log_cardinalities, dtype=float))
        if not (len(deltas) == len(epsilons) == len(cards) == len(self.log_cardinalities)):
            raise ValueError("deltas, epsilons, cardinalities must have equal length")
        if len(deltas) == 0:
            raise ValueError("net must have at least one level")
        if not np.all(deltas > 0.0):
            raise ValueError("all net radii must be positive")
        if not np.all(epsilons > 0.0):
            raise ValueError("all budget fractions must be positive")
        if float(np.sum(epsilons)) > 1.0 + 1e-12:
            raise ValueError(f"budget fractions sum to {np.sum(epsilons)} > 1")
        if cards[0] != 1.0:
            raise ValueError("the coarsest net must be a singleton")


def default_net_spec(gamma: float, T: float, hp: HParams, j_max: int) -> ChainNetSpec:
    """Dyadic net for a cube of side exp(-gamma*T) in dimension hp.dim.

    delta_j = exp(-gamma*T)*sqrt(d)*2^(-j-1), |Theta_j| = 2^(j*d),
    eps_j = (6/pi^2)/(j+1)^2 (summing to 1 over all j).
    """
    if not (gamma > 0 and T > 0):
        raise ValueError("gamma and T must be positive")
    if not (isinstance(j_max, int) and j_max >= 0):
        raise ValueError("j_max must be a nonnegative integer")
    j = np.arange(j_max + 1, dtype=float)
    log_deltas = -gamma * T + 0.5 * math.log(hp.dim) - (j + 1.0) * _LOG2
    # radii below the float range are floored: a larger radius only makes
    # the net easier to realise, so the bound stays valid
    deltas = np.maximum(np.exp(log_deltas), 5e-324)
    epsilons = BASEL_C / (j + 1.0) ** 2
    log_cards = j * hp.dim * _LOG2
    cards = np.exp(log_cards)
    return ChainNetSpec(deltas, epsilons, cards, log_cards)


def basic_chaining_bound(net: ChainNetSpec,
                         pairwise_tail: Callable[[float, float], float],
                         u: float,
                         capped: bool = True,
                         cutoff: float = 1e-12) -> float:
    """Chaining sum  sum_j |Theta_j| * pairwise_tail(delta_j, eps_j*u/2).

    ``pairwise_tail(delta, t)`` must bound P{rho(Z_x,Z_y) >= t} over all
    pairs with d(x,y) <= delta; nonnegative values above 1 are vacuous but
    legal.  Once the terms decay geometrically the remaining tail is
    bounded analytically and added, so truncation only increases the
    bound.  Returns inf if partial sums overflow.
    """
    if not u > 0:
        raise ValueError(f"u must be > 0, got {u}")
    log_sum = -math.inf
    prev_log_term = None
    for j in range(len(net.deltas)):
        tail_j = float(pairwise_tail(float(net.deltas[j]), float(net.epsilons[j]) * u / 2.0))
        if tail_j < 0.0 or math.isnan(tail_j):
            raise ValueError(f"pairwise_tail returned {tail_j} at level {j}")
        log_term = net.log_cardinalities[j] + (math.log(tail_j) if tail_j > 0.0 else -math.inf)
        log_sum = np.logaddexp(log_sum, log_term)
        if log_sum > 709.0:
            return math.inf
        if prev_log_term is not None and log_term > -math.inf:
            ratio = math.exp(min(log_term - prev_log_term, 700.0))
            if ratio < 1.0:
                log_tail_rest = log_term + math.log(ratio / (1.0 - ratio))
                if log_tail_rest < math.log(cutoff) + log_sum:
                    log_sum = np.logaddexp(log_sum, log_tail_rest)
                    break
        prev_log_term = log_term if log_term > -math.inf else prev_log_term
    total = float(np.exp(log_sum))
    return cap_probability(total) if capped else total


# ---------------------------------------------------------------------------
# Entropy integrals and Ledoux-Talagrand chaining
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EntropySpec:
    """Covering data for the entropy integral J = int_0^D N(eps)^(1/q) deps."""

    diameter: float
    covering_fn: Callable[[float], float]  # eps -> N(Theta, d; eps), nonincreasing
    young_exponent: float                  # q of Psi(x) = x^q, > 1
    c_psi: float = 1.0                     # submultiplicativity constant (1 for powers)
    cube_hint: tuple[float, int] | None = None  # (side L, dim) for the exact series

    def __post_init__(self):
        if not self.diameter > 0:
            raise ValueError("diameter must be positive")
        if not self.young_exponent > 1.0:
            raise ValueError("young_exponent must exceed 1")
        n_at_d = float(self.covering_fn(self.diameter))
        if abs(n_at_d - 1.0) > 1e-9:
            raise ValueError(f"covering_fn(diameter) must be 1, got {n_at_d}")
        eps_grid = self.diameter * np.exp(np.linspace(math.log(1e-6), 0.0, 12))
        vals = np.array([float(self.covering_fn(e)) for e in eps_grid])
        if np.any(np.diff(vals) > 1e-9):
            raise ValueError("covering_fn must be nonincreasing in eps")


def cube_covering_count(side: float, dim: int) -> Callable[[float], float]:
    """Covering-number bound for [0, side]^dim with Euclidean balls:
    N(eps) = ceil(side*sqrt(dim)/(2 eps))^dim (a radius-eps ball contains a
    cube of edge 2 eps / sqrt(dim))."""
    c = side * math.sqrt(dim)

    def covering(eps: float) -> float:
        if eps <= 0:
            return math.inf
        return float(math.ceil(c / (2.0 * eps))) ** dim

    return covering


def cube_entropy_spec(side: float, dim: int, q: float) -> EntropySpec:
    return EntropySpec(
        diameter=side * math.sqrt(dim),
        covering_fn=cube_covering_count(side, dim),
        young_exponent=q,
        cube_hint=(side, dim),
    )


def cube_entropy_J(side: float, dim: int, q: float) -> float:
    """Exact value of the cube entropy integral via a Riemann-zeta series.

    With s = dim/q < 1 the staircase integrates piecewise to
    (sqrt(dim)*side/2) * (1 + sum_{k>=0} (zeta(2+k-s) - 1)),
    a geometrically convergent series.
    """
    if not q > dim:
        raise ValueError(f"need q > dim for a finite integral, got q={q}, dim={dim}")
    s = dim / q
    acc = 1.0
    for k in range(200):
        term = float(special.zeta(2.0 + k - s)) - 1.0
        acc += term
        if term < 1e-17 * acc:
            break
    return 0.5 * math.sqrt(dim) * side * acc


def _staircase_pieces(spec: EntropySpec, max_pieces: int):
    """Enumerate constant pieces of an integer staircase from D downward.

    Yields (right_edge, left_edge, value); stops at max_pieces or when the
    staircase is flat all the way to 0.
    """
    cover = spec.covering_fn
    right = spec.diameter
    v = float(cover(right))
    for _ in range(max_pieces):
        lo = right * 0.5
        halvings = 0
        while float(cover(lo)) <= v + 0.5:
            lo *= 0.5
            halvings += 1
            if lo < 1e-300:
                yield right, 0.0, v
                return
            if halvings > 1100:
                yield right, 0.0, v
                return
        hi = right if halvings == 0 else lo * 2.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if float(cover(mid)) <= v + 0.5:
                hi = mid
            else:
                lo = mid
            if hi - lo <= 1e-16 * hi:
                break
        edge = hi
        yield right, edge, v
        right = edge
        v = float(cover(edge * (1.0 - 1e-12)))


def _entropy_integral_numeric(spec: EntropySpec, max_pieces: int = 12000):
    """(value, error_estimate) for a general covering function."""
    q = spec.young_exponent
    D = spec.diameter

    def g(eps: float) -> float:
        n = float(spec.covering_fn(eps))
        if math.isinf(n):
            return math.inf
        return n ** (1.0 / q)

    # divergence probe: integrand growing at least like 1/eps near 0
    a, b = 1e-9 * D, 1e-6 * D
    ga, gb = g(a), g(b)
    if math.isinf(ga) or (gb > 0 and math.log(ga / gb) / math.log(b / a) >= 1.0 - 1e-9):
        return math.inf, 0.0

    # integer staircase?
    probe = D * np.exp(np.linspace(math.log(1e-5), 0.0, 24))
    probe_vals = [float(spec.covering_fn(e)) for e in probe]
    is_staircase = all(abs(v - round(v)) < 1e-9 for v in probe_vals)

    if not is_staircase:
        val, err = integrate.quad(g, 0.0, D, limit=400)
        return float(val), float(err)

    total = 0.0
    last_edge = D
    complete = False
    n_pieces = 0
    for right, left, v in _staircase_pieces(spec, max_pieces):
        total += (v ** (1.0 / q)) * (right - left)
        last_edge = left
        n_pieces += 1
        if left == 0.0:
            complete = True
            break
    if complete or last_edge <= 0.0:
        return total, 1e-16 * total

    # geometric-band midpoint continuation below the enumerated pieces;
    # the enumerated piece count proxies the jump density per octave
    err = 0.0
    right = last_edge
    n_scale = max(n_pieces, 2)
    for k in range(900):
        left = right * 0.5
        if left < 1e-280:
            # analytic power-law remainder for what float range cannot reach
            beta = math.log(g(right * 1.0000001) / g(right * 2.0)) / _LOG2
            if beta >= 1.0:
                return math.inf, 0.0
            rem = g(right) * right / (1.0 - beta)
            total += rem
            err += 0.05 * rem
            break
        mids = np.linspace(left, right, 257)[1:-1:2]
        vals = np.array([g(m) for m in mids])
        if not np.all(np.isfinite(vals)):
            return math.inf, 0.0
        band = float(np.sum(vals)) * (right - left) / len(mids)
        total += band
        err += band / (n_scale * 2.0 ** k)  # staircase-vs-midpoint mismatch
        if band < 1e-10 * total and k > 4:
            beta = math.log(g(left) / g(right)) / _LOG2
            if beta < 1.0:
                total += g(left) * left / (1.0 - beta)
            break
        right = left
    return total, err


def entropy_integral_J(spec: EntropySpec) -> float:
    """Entropy integral J; inf when the covering numbers grow too fast."""
    if spec.cube_hint is not None:
        side, dim = spec.cube_hint
        if spec.young_exponent <= dim:
            return math.inf
        return cube_entropy_J(side, dim, spec.young_exponent)
    value, err = _entropy_integral_numeric(spec)
    if math.isfinite(value) and err > 1e-8 * max(value, 1e-300):
        warnings.warn(
            f"entropy integral error estimate {err:.3g} exceeds 1e-8 relative",
            stacklevel=2)
    return value


def lt_tail_bound(spec: EntropySpec, c: float, u: float, capped: bool = True) -> float:
    """Chaining-through-entropy tail bound (Psi(u / (8 c c_Psi J)))^-1.

    For the power Young function Psi(x)=x^q this is (8 c c_Psi J / u)^q.
    ``c`` is the Lipschitz constant of the increments in Orlicz norm.
    Infinite J gives the vacuous bound 1.
    """
    if not u > 0:
        raise ValueError(f"u must be > 0, got {u}")
    if not c > 0:
        raise ValueError(f"c must be > 0, got {c}")
    J = entropy_integral_J(spec)
    if math.isinf(J):
        return 1.0
    q = spec.young_exponent
    log_bound = q * (math.log(8.0 * c * spec.c_psi * J) - math.log(u))
    raw = math.exp(log_bound) if log_bound < 709.0 else math.inf
    return cap_probability(raw) if capped else raw


def orlicz_power_norm(q: float, qth_moment: float) -> float:
    """Orlicz norm for Psi(x)=x^q: ||Z||_Psi = (E|Z|^q)^(1/q)."""
    if not q >= 1.0:
        raise ValueError(f"q must be >= 1, got {q}")
    if qth_moment < 0.0:
        raise ValueError("qth_moment must be nonnegative")
    return qth_moment ** (1.0 / q)


# ---------------------------------------------------------------------------
# Garsia-Rodemich-Rumsey modulus bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GrrInstance:
    """Discretised data for the GRR inequality on a metric grid.

    ``points`` are grid coordinates in Theta, ``measure_weights`` the mass
    m assigns to each grid cell, ``field_values`` samples of f.  The gauge
    ``p_fn`` must be strictly increasing with p(0)=0; ``ball_measure_fn``
    returns m(K_s(z)) for a point z and radius s.
    """

    points: np.ndarray
    measure_weights: np.ndarray
    field_values: np.ndarray
    ball_measure_fn: Callable[[np.ndarray, float], float]
    p_fn: Callable[[float], float]
    young_exponent: float
    metric_fn: Callable[[np.ndarray, np.ndarray], float] | None = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] == 1 and np.asarray(self.points).ndim == 1:
            pts = pts.T
        object.__setattr__(self, "points", pts)
        w = np.asarray(self.measure_weights, dtype=float)
        object.__setattr__(self, "measure_weights", w)
        f = np.asarray(self.field_values, dtype=float)
        object.__setattr__(self, "field_values", f)
        if not np.all(w > 0.0):
            raise ValueError("all measure weights must be positive")
        if len(w) != len(pts) or len(f) != len(pts):
            raise ValueError("points, weights and field values must align")
        if not self.young_exponent > 1.0:
            raise ValueError("young_exponent must exceed 1")
        if abs(float(self.p_fn(0.0))) > 1e-15:
            raise ValueError("gauge must satisfy p(0) = 0")
        ss = np.linspace(1e-6, 1.0, 7)
        pv = [float(self.p_fn(s)) for s in ss]
        if np.any(np.diff(pv) <= 0.0):
            raise ValueError("gauge must be strictly increasing")
        self._check_metric_axioms()

    def _check_metric_axioms(self, n_triples: int = 256):
        rng = stream(0, TAG_VALIDATE, len(self.points))
        n = len(self.points)
        if n < 3:
            return
        idx = rng.integers(0, n, size=(n_triples, 3))
        for i, j, k in idx:
            dij = self.distance(self.points[i], self.points[j])
            dji = self.distance(self.points[j], self.points[i])
            if abs(dij - dji) > 1e-9 * (1.0 + dij):
                raise ValueError("metric is not symmetric on sampled pairs")
            dik = self.distance(self.points[i], self.points[k])
            dkj = self.distance(self.points[k], self.points[j])
            if dij > dik + dkj + 1e-9 * (1.0 + dij):
                raise ValueError("metric violates the triangle inequality")

    def distance(self, x: np.ndarray, y: np.ndarray) -> float:
        if self.metric_fn is not None:
            return float(self.metric_fn(x, y))
        return float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))

    def distance_matrix(self) -> np.ndarray:
        if self.metric_fn is None:
            diff = self.points[:, None, :] - self.points[None, :, :]
            return np.sqrt(np.sum(diff * diff, axis=-1))
        n = len(self.points)
        out = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                out[i, j] = self.distance(self.points[i], self.points[j])
        return out

    def field_distance_matrix(self) -> np.ndarray:
        f = self.field_values
        if f.ndim == 1:
            return np.abs(f[:, None] - f[None, :])
        diff = f[:, None, :] - f[None, :, :]
        return np.sqrt(np.sum(diff * diff, axis=-1))


def grr_functional(g: GrrInstance) -> tuple[float, float]:
    """(V, N): the double Psi-energy of the field over the grid and its
    Orlicz normalisation N = V^(1/q) (exact for power Psi).

    Diagonal 0/0 terms count as zero; a positive field increment across a
    zero gauge distance makes V infinite.
    """
    q = g.young_exponent
    d = g.distance_matrix()
    rho = g.field_distance_matrix()
    flat = d.ravel()
    try:
        p_of_d_flat = np.asarray(g.p_fn(flat), dtype=float)
        if p_of_d_flat.shape != flat.shape:
            raise TypeError
    except (TypeError, ValueError):
        p_of_d_flat = np.array([float(g.p_fn(s)) for s in flat])
    p_of_d = p_of_d_flat.reshape(d.shape)

    ratio = np.zeros_like(d)
    zero_gauge = p_of_d <= 0.0
    bad = zero_gauge & (rho > 0.0)
    if np.any(bad):
        return math.inf, math.inf
    ok = ~zero_gauge
    ratio[ok] = rho[ok] / p_of_d[ok]
    with np.errstate(over="ignore"):
        powered = ratio ** q
    w = g.measure_weights
    V = float(w @ powered @ w)
    if not math.isfinite(V):
        return math.inf, math.inf
    return V, V ** (1.0 / q)


def grr_modulus_bound(g: GrrInstance, x: np.ndarray, y: np.ndarray,
                      precomputed: tuple[float, float] | None = None,
                      rel_tol: float = 1e-9) -> tuple[float, float]:
    """GRR bounds on rho(f(x), f(y)).

    bound_v = 8 max_{z in {x,y}} int_0^{4 d(x,y)} (4V / m(K_{s/2}(z))^2)^(1/q) dp(s)
    bound_n = 8 N  max_{z in {x,y}} int_0^{4 d(x,y)} (4  / m(K_{s/2}(z))^2)^(1/q) dp(s)

    A vanishing ball measure at positive radius makes the bound infinite.
    """
    V, N = precomputed if precomputed is not None else grr_functional(g)
    if math.isinf(V):
        return math.inf, math.inf
    rho = g.distance(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    if rho == 0.0:
        return 0.0, 0.0
    q = g.young_exponent

    def make_integrand(z: np.ndarray, numerator: float) -> Callable[[float], float]:
        def integrand(s: float) -> float:
            mm = float(g.ball_measure_fn(z, s / 2.0))
            if mm <= 0.0:
                return math.inf
            return (4.0 * numerator) ** (1.0 / q) * mm ** (-2.0 / q)
        return integrand

    def max_integral(numerator: float) -> float:
        vals = []
        for z in (x, y):
            vals.append(stieltjes_integral(
                make_integrand(np.asarray(z, dtype=float), numerator),
                g.p_fn, 0.0, 4.0 * rho, rel_tol=rel_tol))
        return max(vals)

    bound_v = 8.0 * max_integral(V) if V > 0.0 else 0.0
    if V == 0.0:
        # still need the zero-ball convention check along the range
        probe = max_integral(1.0)
        bound_v = math.inf if math.isinf(probe) else 0.0
    bound_n = 8.0 * N * max_integral(1.0) if N > 0.0 else (
        math.inf if math.isinf(bound_v) else 0.0)
    return bound_v, bound_n


# ---------------------------------------------------------------------------
# Small-ball tail bounds for flows under the moment hypothesis
# ---------------------------------------------------------------------------

ROUTES = ("kolmogorov", "basic", "lt")


def hp_pairwise_tail(hp: HParams, T: float, q: float) -> Callable[[float, float], float]:
    """Chebychev tail from the moment hypothesis:
    P{sup_t rho >= t} <= (cbar * delta * e^((lam+q sigma^2/2)T) / t)^q
    for pairs at distance <= delta.  Deliberately uncapped."""
    log_growth = math.log(hp.cbar) + (hp.lam + 0.5 * q * hp.sigma ** 2) * T

    def tail(delta: float, threshold: float) -> float:
        if threshold <= 0.0:
            return math.inf
        return math.exp(q * (math.log(delta) + log_growth - math.log(threshold)))

    return tail


def _kolmo_log_prefactor(q: float, d: int, kappa: float) -> float:
    """log of the kappa-dependent part of the Kolmogorov-route bound."""
    b = q - d
    t = q * kappa - b
    return (q * (math.log(2.0 * d) - math.log1p(-(2.0 ** (-kappa))))
            + math.log(d) + t * _LOG2 - math.log1p(-(2.0 ** t)))


def optimal_kappa(q: float, d: int) -> float:
    """Hoelder exponent minimising the Kolmogorov-route prefactor."""
    hi = (q - d) / q
    return golden_section(lambda k: _kolmo_log_prefactor(q, d, k),
                          hi * 1e-9, hi * (1.0 - 1e-9), tol=1e-12)


def _basic_series_log(d: int, q: float, cutoff: float = 1e-14,
                      j_cap: int = 1 << 25) -> float:
    """log of  sum_j 2^((d-q)j) * eps_j^(-q)  with eps_j = (6/pi^2)/(j+1)^2.

    Terms rise polynomially, then decay geometrically with monotone ratio;
    once past the peak the analytic geometric tail is added so truncation
    only enlarges the bound.  Near q = d the peak sits at j ~ 1/(q-d), so
    the summation is vectorised in blocks.
    """
    log_c = math.log(BASEL_C)
    dq = (d - q) * _LOG2
    log_sum = -math.inf
    block = 8192
    j0 = 0
    while j0 < j_cap:
        j = np.arange(j0, min(j0 + block, j_cap), dtype=float)
        lt = dq * j + q * (2.0 * np.log(j + 1.0) - log_c)
        log_sum = float(np.logaddexp(log_sum, special.logsumexp(lt)))
        if len(lt) >= 2:
            ratio = math.exp(min(float(lt[-1] - lt[-2]), 700.0))
            if ratio < 1.0:
                log_rest = float(lt[-1]) + math.log(ratio / (1.0 - ratio))
                if log_rest < math.log(cutoff) + log_sum:
                    return float(np.logaddexp(log_sum, log_rest))
        j0 += block
    return float(log_sum)


@dataclass(frozen=True)
class ExponentResult:
    rate: float         # inf over q > d of (lam-gamma)q + sigma^2 q^2/2 (limit value)
    q_star: float       # minimiser, clamped to d at the boundary
    at_boundary: bool   # True when the unconstrained minimiser is <= d


def _exponent_quadratic(hp: HParams, gamma: float, q: float) -> float:
    return (hp.lam - gamma) * q + 0.5 * hp.sigma ** 2 * q * q


def _q_bracket(hp: HParams, gamma: float) -> tuple[float, float]:
    d = float(hp.dim)
    lo = d * (1.0 + 1e-6)
    hi = max(10.0 * d, 4.0 * (gamma - hp.lam) / hp.sigma ** 2)
    return lo, max(hi, lo * 2.0)


def optimized_exponent(hp: HParams, gamma: float,
                       method: str = "closed_form") -> ExponentResult:
    """Best decay exponent over the admissible moment orders q > d.

    Closed form: the quadratic (lam-gamma)q + sigma^2 q^2/2 has its
    unconstrained minimum at q = (gamma-lam)/sigma^2; when that is <= d the
    infimum over the open constraint is the limit value at q = d and the
    boundary flag is set.  ``method="golden"`` instead searches log q over
    a convex-safe bracket and snaps to the boundary when it lands there.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    d = float(hp.dim)
    if method == "closed_form":
        q_u = (gamma - hp.lam) / hp.sigma ** 2
        if q_u > d:
            return ExponentResult(_exponent_quadratic(hp, gamma, q_u), q_u, False)
        return ExponentResult(_exponent_quadratic(hp, gamma, d), d, True)
    if method == "golden":
        lo, hi = _q_bracket(hp, gamma)
        t = golden_section(
            lambda lt: _exponent_quadratic(hp, gamma, math.exp(lt)),
            math.log(lo), math.log(hi), tol=1e-13)
        q = math.exp(t)
        if q <= lo * (1.0 + 1e-5):
            return ExponentResult(_exponent_quadratic(hp, gamma, d), d, True)
        return ExponentResult(_exponent_quadratic(hp, gamma, q), q, False)
    raise ValueError(f"unknown method {method!r}")


def _resolve_q(hp: HParams, gamma: float, q: float | None) -> float:
    d = float(hp.dim)
    if q is None:
        res = optimized_exponent(hp, gamma)
        return max(res.q_star, d * (1.0 + 1e-6))
    if not q > d:
        raise ValueError(f"q must exceed the dimension d={hp.dim}, got {q}")
    return float(q)


def small_ball_tail_log_bound(route: str, hp: HParams, gamma: float, T: float,
                              u: float, q: float | None = None) -> float:
    """log of the raw finite-horizon bound on
    P{sup over a cube of side e^(-gamma T) of sup_{t<=T} rho >= u}.

    Every route decays with T-exponent (lam - gamma + q sigma^2/2) q; they
    differ only in the T-free prefactor.  q=None optimises the exponent
    over the admissible bracket.
    """
    if route not in ROUTES:
        raise ValueError(f"route must be one of {ROUTES}, got {route!r}")
    if not (gamma > 0 and T > 0 and u > 0):
        raise ValueError("gamma, T, u must all be positive")
    qq = _resolve_q(hp, gamma, q)
    d = hp.dim
    expo = _exponent_quadratic(hp, gamma, qq) * T
    log_cbar = math.log(hp.cbar)
    if route == "kolmogorov":
        kappa = optimal_kappa(qq, d)
        return (qq * log_cbar + expo - qq * math.log(u)
                + _kolmo_log_prefactor(qq, d, kappa))
    if route == "basic":
        return (qq * log_cbar + 0.5 * qq * math.log(d) + expo
                - qq * math.log(u) + _basic_series_log(d, qq))
    # lt: J for the cube scales exactly linearly in the side length
    log_j_unit = math.log(cube_entropy_J(1.0, d, qq))
    return qq * (math.log(8.0) + log_j_unit + log_cbar - math.log(u)) + expo


def small_ball_tail_bound(route: str, hp: HParams, gamma: float, T: float,
                          u: float, q: float | None = None,
                          capped: bool = True) -> float:
    log_b = small_ball_tail_log_bound(route, hp, gamma, T, u, q)
    raw = math.exp(log_b) if log_b < 709.0 else math.inf
    return cap_probability(raw) if capped else raw
