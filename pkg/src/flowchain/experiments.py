"""Monte Carlo harness: tail estimation with exact-count confidence
intervals, rate fitting, moment-hypothesis checks, pathwise GRR audits,
dispersion growth experiments and bound-vs-estimate comparisons.

Paths are processed in fixed 4096-path chunks, each with its own Philox
stream keyed by (seed, tag, chunk index).  Workers parallelise over
chunks and results are aggregated as integer counts or per-path arrays in
chunk order, so every report is bit-identical for any worker count.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import bounds as bounds_mod
from ._rng import (TAG_GRR, TAG_MC_BUMP, TAG_MC_LINEAR, TAG_MC_SDE,
                   chunk_ranges, chunk_stream)
from .bounds import GrrInstance, grr_functional, small_ball_tail_bound
from .flows import BumpFieldModel, LinearFlowModel, SdeFlowModel, _bump_cells
from .params import DispersionParams, HParams
from .rates import growth_constant_K

DEFAULT_CI_ALPHA = 0.01  # 99% exact-count intervals


def resolve_workers(workers: int | None) -> int:
    if workers is not None:
        if workers < 1:
            raise ValueError(f"workers must be positive, got {workers}")
        return workers
    env = os.environ.get("FLOWCHAIN_WORKERS")
    if env:
        return max(1, int(env))
    return min(os.cpu_count() or 1, 8)


def _map_chunks(fn: Callable, path_count: int, workers: int) -> list:
    ranges = chunk_ranges(path_count)
    if workers > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, ranges))
    return [fn(r) for r in ranges]


def clopper_pearson(k: int, n: int, alpha: float = DEFAULT_CI_ALPHA) -> tuple[float, float]:
    """Exact binomial confidence interval: normal approximations understate
    the upper limit for rare events, which would corrupt dominance tests."""
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    lo = 0.0 if k == 0 else float(stats.beta.ppf(alpha / 2.0, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1.0 - alpha / 2.0, k + 1, n - k))
    return lo, hi


# ---------------------------------------------------------------------------
# estimates and fits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TailEstimate:
    p_hat: float
    ci_low: float
    ci_high: float
    exceed_count: int
    path_count: int
    seed: int
    u: float
    T: float

    def __post_init__(self):
        if self.path_count > 0 and self.exceed_count * 1.0 / self.path_count != self.p_hat:
            raise ValueError("p_hat must equal exceed_count/path_count exactly")
        if not self.ci_low <= self.p_hat <= self.ci_high:
            raise ValueError("confidence interval must contain p_hat")


def make_tail_estimate(exceed: int, n: int, seed: int, u: float, T: float,
                       alpha: float = DEFAULT_CI_ALPHA) -> TailEstimate:
    lo, hi = clopper_pearson(exceed, n, alpha)
    return TailEstimate(exceed / n, lo, hi, exceed, n, seed, u, T)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    T_grid: np.ndarray
    log_p: np.ndarray
    residual_max: float

    @property
    def per_horizon_rates(self) -> np.ndarray:
        """(1/T) log p at each retained horizon."""
        return self.log_p / self.T_grid


def fit_rate_values(T_grid: Sequence[float], p_values: Sequence[float]) -> RateFit:
    """Least-squares slope of log p against T; zero probabilities drop
    their horizon with a warning."""
    T = np.asarray(T_grid, dtype=float)
    p = np.asarray(p_values, dtype=float)
    keep = p > 0.0
    if not np.all(keep):
        warnings.warn(
            f"dropping {int(np.sum(~keep))} horizon(s) with zero exceedances",
            stacklevel=2)
    T, p = T[keep], p[keep]
    if len(T) < 3:
        raise ValueError(f"need at least 3 usable horizons, got {len(T)}")
    log_p = np.log(p)
    slope, intercept = np.polyfit(T, log_p, 1)
    residual = np.max(np.abs(slope * T + intercept - log_p))
    return RateFit(float(slope), float(intercept), T, log_p, float(residual))


def fit_rate(estimates: Sequence[TailEstimate]) -> RateFit:
    return fit_rate_values([e.T for e in estimates], [e.p_hat for e in estimates])


# ---------------------------------------------------------------------------
# experiment specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CompactSet:
    """Axis-aligned cube (origin + side) or a finite point cloud, with its
    declared box dimension (no dimension estimation is attempted)."""

    kind: str                     # "cube" | "points"
    delta: float                  # declared box dimension
    side: float = 1.0
    origin: tuple[float, ...] = (0.0,)
    points: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("cube", "points"):
            raise ValueError(f"unknown compact-set kind {self.kind!r}")
        if self.kind == "cube" and not self.side > 0:
            raise ValueError("cube side must be positive")
        if not self.delta > 0:
            raise ValueError("declared box dimension must be positive "
                             "(use a small floor such as 0.01 for point sets)")


FlowModel = LinearFlowModel | BumpFieldModel | SdeFlowModel


@dataclass(frozen=True)
class ExperimentSpec:
    model: FlowModel
    gamma: float
    u: float
    T: float
    path_count: int
    seed: int
    n_steps: int | None = None      # default: 2^12 * T on the grid method
    sup_method: str = "grid"        # "grid" (biased down) | "bridge" (exact, linear only)
    workers: int | None = None
    compact: CompactSet | None = None
    ci_alpha: float = DEFAULT_CI_ALPHA

    def __post_init__(self):
        if not (self.gamma > 0 and self.T > 0):
            raise ValueError("gamma and T must be positive")
        if self.u < 0:
            raise ValueError("threshold u must be nonnegative")
        if self.path_count < 100:
            raise ValueError("path_count must be at least 100")
        if self.sup_method not in ("grid", "bridge"):
            raise ValueError(f"unknown sup_method {self.sup_method!r}")
        if self.sup_method == "bridge" and not isinstance(self.model, LinearFlowModel):
            raise ValueError("the bridge supremum is exact only for the linear flow")

    def resolved_n_steps(self) -> int:
        if self.n_steps is not None:
            return self.n_steps
        if self.sup_method == "bridge":
            return 64
        return max(16, int(round(4096 * self.T)))

    @property
    def hp(self) -> HParams:
        if isinstance(self.model, (LinearFlowModel, BumpFieldModel)):
            return self.model.hp
        from .flows import lipschitz_to_H_params
        return lipschitz_to_H_params(self.model)

    def cube_side(self) -> float:
        return math.exp(-self.gamma * self.T)


# ---------------------------------------------------------------------------
# vectorised kernels (per-chunk, streaming over time blocks)
# ---------------------------------------------------------------------------

def _time_block(n_paths: int, n_series: int = 1, budget: int = 1 << 21) -> int:
    return max(8, budget // max(n_paths * n_series, 1))


def linear_sup_exponents(hp: HParams, T: float, n_steps: int, seed: int,
                         path_count: int, method: str = "grid",
                         workers: int | None = None) -> np.ndarray:
    """Per-path supremum of lam*t + sigma*W_t over [0, T].

    method="grid" takes the maximum over the time grid (biased down for
    the continuous-time sup); method="bridge" additionally samples the
    exact maximum of each Brownian bridge segment, which makes the sample
    exact in distribution for any n_steps.
    """
    dt = T / n_steps
    sig2dt = 2.0 * hp.sigma ** 2 * dt

    def run(chunk: tuple[int, int, int]) -> np.ndarray:
        idx, start, stop = chunk
        n = stop - start
        rng = chunk_stream(seed, TAG_MC_LINEAR, idx)
        level = np.zeros(n)
        run_max = np.zeros(n)  # path starts at 0
        done = 0
        block = _time_block(n)
        while done < n_steps:
            b = min(block, n_steps - done)
            incr = rng.standard_normal((n, b)) * (hp.sigma * math.sqrt(dt)) + hp.lam * dt
            path = level[:, None] + np.cumsum(incr, axis=1)
            if method == "bridge":
                uu = rng.random((n, b))
                left = np.concatenate([level[:, None], path[:, :-1]], axis=1)
                gap = path - left
                bridge = 0.5 * (left + path + np.sqrt(gap * gap - sig2dt * np.log(uu)))
                run_max = np.maximum(run_max, bridge.max(axis=1))
            else:
                run_max = np.maximum(run_max, path.max(axis=1))
            level = path[:, -1]
            done += b
        return run_max

    parts = _map_chunks(run, path_count, resolve_workers(workers))
    return np.concatenate(parts)


@dataclass(frozen=True)
class SdeBatchStats:
    sup_pair_dist: np.ndarray   # (paths, n_pairs) sup_t |phi_t(x_i)-phi_t(x_j)|
    sup_norm: np.ndarray        # (paths, n_points) sup_t |phi_t(x_k)|
    sup_diam: np.ndarray        # (paths,) sup_t over all point pairs
    order_ok: np.ndarray        # (paths,) bool, 1-d order preservation
    nonfinite_count: int


def sde_batch_stats(model: SdeFlowModel, points: np.ndarray, T: float,
                    n_steps: int, seed: int, path_count: int,
                    pairs: Sequence[tuple[int, int]] = (),
                    workers: int | None = None) -> SdeBatchStats:
    """Euler-Maruyama over many paths at once; every initial point within a
    path shares the noise increments.  Nonfinite paths are dropped and
    counted."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    P, d = pts.shape
    if d != model.dim:
        raise ValueError(f"points must have dimension {model.dim}")
    dt = T / n_steps
    if dt > model.stable_dt() * (1.0 + 1e-12):
        raise ValueError(
            f"step {dt:.4g} exceeds the stability heuristic "
            f"{model.stable_dt():.4g}; increase n_steps")
    m = len(model.diffusions)
    pair_idx = np.asarray(pairs, dtype=int).reshape(-1, 2)
    iu, ju = np.triu_indices(P, k=1)
    order_1d = (d == 1) and np.all(np.diff(pts[:, 0]) >= 0.0)

    def run(chunk: tuple[int, int, int]):
        idx, start, stop = chunk
        n = stop - start
        rng = chunk_stream(seed, TAG_MC_SDE, idx)
        x = np.repeat(pts[None, :, :], n, axis=0)  # (n, P, d)

        def pair_d(xx):
            if len(pair_idx) == 0:
                return np.zeros((n, 0))
            diff = xx[:, pair_idx[:, 0], :] - xx[:, pair_idx[:, 1], :]
            return np.linalg.norm(diff, axis=-1)

        def diam(xx):
            if P < 2:
                return np.zeros(n)
            diff = xx[:, iu, :] - xx[:, ju, :]
            return np.max(np.linalg.norm(diff, axis=-1), axis=1)

        sup_pair = pair_d(x)
        sup_norm = np.repeat(np.linalg.norm(pts, axis=1)[None, :], n, axis=0)
        sup_diam = diam(x)
        order_ok = np.ones(n, dtype=bool)
        for _ in range(n_steps):
            dw = rng.standard_normal((n, m)) * math.sqrt(dt)
            flat = x.reshape(n * P, d)
            incr = np.asarray(model.drift(flat)) * dt
            for i, sig in enumerate(model.diffusions):
                incr = incr + np.asarray(sig(flat)) * np.repeat(dw[:, i], P)[:, None]
            x = (flat + incr).reshape(n, P, d)
            sup_pair = np.maximum(sup_pair, pair_d(x))
            sup_norm = np.maximum(sup_norm, np.linalg.norm(x, axis=-1))
            sup_diam = np.maximum(sup_diam, diam(x))
            if order_1d:
                order_ok &= np.all(np.diff(x[:, :, 0], axis=1) >= 0.0, axis=1)
        finite = np.isfinite(sup_diam) & np.all(np.isfinite(sup_norm), axis=1)
        if len(pair_idx):
            finite &= np.all(np.isfinite(sup_pair), axis=1)
        return (sup_pair[finite], sup_norm[finite], sup_diam[finite],
                order_ok[finite], int(np.sum(~finite)))

    parts = _map_chunks(run, path_count, resolve_workers(workers))
    return SdeBatchStats(
        sup_pair_dist=np.concatenate([p[0] for p in parts]),
        sup_norm=np.concatenate([p[1] for p in parts]),
        sup_diam=np.concatenate([p[2] for p in parts]),
        order_ok=np.concatenate([p[3] for p in parts]),
        nonfinite_count=sum(p[4] for p in parts),
    )


@dataclass(frozen=True)
class BumpBatchStats:
    sup_diam: np.ndarray        # (paths,) cube diameter sup
    sup_field: np.ndarray       # (paths,)
    inf_field: np.ndarray       # (paths,)
    sup_pair_dist: np.ndarray   # (paths, n_pairs)
    cell_sup_factor: np.ndarray  # (paths, n_cells) sup_t exp(lam t + sigma W^c_t)


def bump_batch_stats(model: BumpFieldModel, cube_side: float, T: float,
                     n_steps: int, seed: int, path_count: int,
                     pair_points: Sequence[tuple] = (),
                     grid_step: float | None = None,
                     workers: int | None = None) -> BumpBatchStats:
    """Vectorised bump-field statistics; one independent exponent path per
    lattice cell, stream keyed by the chunk."""
    delta = model.spacing
    hp = model.hp
    if grid_step is None:
        grid_step = min(delta, cube_side) / 4.0
    if grid_step > delta:
        raise ValueError("spatial grid coarser than the bump spacing")
    from .flows import _bump_grid
    cells = _bump_cells(model, cube_side)
    grid = _bump_grid(model, cube_side, grid_step)
    cell_of_point = np.rint(grid / delta)
    h_vals = delta * np.asarray(model.bump(grid / delta - cell_of_point))
    cell_key = {tuple(c): k for k, c in enumerate(cells)}
    C = len(cells)
    h_max = np.zeros(C)
    h_min = np.full(C, np.inf)
    for val, cell in zip(h_vals, cell_of_point):
        k = cell_key[tuple(cell)]
        h_max[k] = max(h_max[k], val)
        h_min[k] = min(h_min[k], val)
    occ = np.isfinite(h_min)

    pair_data = []
    for (xa, ya) in pair_points:
        xa = np.atleast_1d(np.asarray(xa, dtype=float))
        ya = np.atleast_1d(np.asarray(ya, dtype=float))
        ca = np.rint(xa / delta)
        cb = np.rint(ya / delta)
        for c in (ca, cb):
            if tuple(c) not in cell_key:
                raise ValueError(f"pair point cell {c} lies outside the cube cells")
        ha = delta * float(np.asarray(model.bump((xa / delta - ca)[None, :]))[0])
        hb = delta * float(np.asarray(model.bump((ya / delta - cb)[None, :]))[0])
        pair_data.append((cell_key[tuple(ca)], cell_key[tuple(cb)], ha, hb))

    dt = T / n_steps
    lam_dt = hp.lam * dt
    sq = hp.sigma * math.sqrt(dt)

    def run(chunk: tuple[int, int, int]):
        idx, start, stop = chunk
        n = stop - start
        rng = chunk_stream(seed, TAG_MC_BUMP, idx)
        level = np.zeros((n, C))
        sup_e = np.ones((n, C))          # exp at t=0
        sup_diam = np.zeros(n)
        sup_field = np.full(n, np.max(h_max[occ]))
        inf_field = np.full(n, np.min(h_min[occ]))
        sup_pair = np.zeros((n, len(pair_data)))
        for p_i, (ca, cb, ha, hb) in enumerate(pair_data):
            sup_pair[:, p_i] = abs(ha - hb)
        t_max0 = np.max(h_max[occ]) - np.min(h_min[occ])
        sup_diam[:] = t_max0
        done = 0
        block = _time_block(n, C)
        while done < n_steps:
            b = min(block, n_steps - done)
            incr = rng.standard_normal((n, C, b)) * sq + lam_dt
            path = level[:, :, None] + np.cumsum(incr, axis=2)
            e = np.exp(path)
            sup_e = np.maximum(sup_e, e.max(axis=2))
            per_t_max = np.max(h_max[occ][None, :, None] * e[:, occ, :], axis=1)
            per_t_min = np.min(h_min[occ][None, :, None] * e[:, occ, :], axis=1)
            sup_field = np.maximum(sup_field, per_t_max.max(axis=1))
            inf_field = np.minimum(inf_field, per_t_min.min(axis=1))
            sup_diam = np.maximum(sup_diam, (per_t_max - per_t_min).max(axis=1))
            for p_i, (ca, cb, ha, hb) in enumerate(pair_data):
                if ca == cb:
                    vals = abs(ha - hb) * e[:, ca, :].max(axis=1)
                else:
                    vals = np.abs(ha * e[:, ca, :] - hb * e[:, cb, :]).max(axis=1)
                sup_pair[:, p_i] = np.maximum(sup_pair[:, p_i], vals)
            level = path[:, :, -1]
            done += b
        return sup_diam, sup_field, inf_field, sup_pair, sup_e

    parts = _map_chunks(run, path_count, resolve_workers(workers))
    return BumpBatchStats(
        sup_diam=np.concatenate([p[0] for p in parts]),
        sup_field=np.concatenate([p[1] for p in parts]),
        inf_field=np.concatenate([p[2] for p in parts]),
        sup_pair_dist=np.concatenate([p[3] for p in parts]),
        cell_sup_factor=np.concatenate([p[4] for p in parts]),
    )


# ---------------------------------------------------------------------------
# tail estimation
# ---------------------------------------------------------------------------

def _cube_points(origin: np.ndarray, side: float, dim: int,
                 include_center: bool = True) -> np.ndarray:
    corners = np.array(
        [[origin[i] + side * ((k >> i) & 1) for i in range(dim)]
         for k in range(1 << dim)])
    if include_center:
        return np.vstack([corners, origin + side / 2.0])
    return corners


def estimate_tail(spec: ExperimentSpec) -> TailEstimate:
    """P{sup over the shrunken cube of the pathwise diameter >= u}.

    The linear flow reduces exactly to a scalar exponent path; other
    models measure the diameter over sampled initial points / spatial
    grid, which can only lower the estimate (conservative for dominance
    comparisons).
    """
    n_steps = spec.resolved_n_steps()
    L = spec.cube_side()
    if spec.u == 0.0:
        return make_tail_estimate(spec.path_count, spec.path_count, spec.seed,
                                  spec.u, spec.T, spec.ci_alpha)
    if isinstance(spec.model, LinearFlowModel):
        hp = spec.model.hp
        sups = linear_sup_exponents(hp, spec.T, n_steps, spec.seed,
                                    spec.path_count, spec.sup_method, spec.workers)
        threshold = math.log(spec.u) - math.log(math.sqrt(hp.dim) * L)
        exceed = int(np.sum(sups >= threshold))
    elif isinstance(spec.model, BumpFieldModel):
        stats_ = bump_batch_stats(spec.model, L, spec.T, n_steps, spec.seed,
                                  spec.path_count, workers=spec.workers)
        exceed = int(np.sum(stats_.sup_diam >= spec.u))
    else:
        pts = _cube_points(np.zeros(spec.model.dim), L, spec.model.dim)
        stats_ = sde_batch_stats(spec.model, pts, spec.T, n_steps, spec.seed,
                                 spec.path_count, workers=spec.workers)
        if stats_.nonfinite_count >= spec.path_count:
            raise RuntimeError("all paths went nonfinite; lower the step size")
        exceed = int(np.sum(stats_.sup_diam >= spec.u))
        return make_tail_estimate(exceed, len(stats_.sup_diam), spec.seed,
                                  spec.u, spec.T, spec.ci_alpha)
    return make_tail_estimate(exceed, spec.path_count, spec.seed, spec.u,
                              spec.T, spec.ci_alpha)


# ---------------------------------------------------------------------------
# moment-hypothesis verification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MomentCheckRow:
    pair: tuple
    distance: float
    ratio: float          # empirical (E sup rho^q)^(1/q) / |x-y|
    bound: float          # cbar * exp((lam + q sigma^2/2) T)
    rel_se: float         # relative standard error of the q-th moment
    ok: bool              # ratio <= bound within 3 standard errors
    heavy_tail: bool      # rel_se > 20%


@dataclass(frozen=True)
class MomentCheckReport:
    rows: tuple[MomentCheckRow, ...]
    q: float
    T: float
    passed: bool


def moment_hypothesis_check(model: FlowModel, hp: HParams, q: float, T: float,
                            pair_list: Sequence[tuple], path_count: int,
                            seed: int, n_steps: int | None = None,
                            workers: int | None = None) -> MomentCheckReport:
    """Empirical check of the q-th moment growth bound
    (E sup_t rho^q)^(1/q) <= cbar |x-y| e^((lam + q sigma^2/2) T)
    with a 3-standard-error statistical margin per pair."""
    if not q >= 1:
        raise ValueError(f"q must be >= 1, got {q}")
    bound = hp.cbar * math.exp((hp.lam + 0.5 * q * hp.sigma ** 2) * T)

    def finish(pair, dist, sup_samples) -> MomentCheckRow:
        y = sup_samples ** q
        mhat = float(np.mean(y))
        se = float(np.std(y, ddof=1)) / math.sqrt(len(y))
        rel_se = se / mhat if mhat > 0 else math.inf
        ratio = mhat ** (1.0 / q) / dist
        ok = ratio <= bound * (1.0 + 3.0 * rel_se / q)
        heavy = rel_se > 0.2
        if heavy:
            warnings.warn(
                f"heavy-tail variance: relative standard error {rel_se:.1%} "
                f"for pair {pair}", stacklevel=3)
        return MomentCheckRow(pair, dist, ratio, bound, rel_se, ok, heavy)

    rows: list[MomentCheckRow] = []
    if isinstance(model, LinearFlowModel):
        steps = n_steps if n_steps is not None else 4096
        sups = linear_sup_exponents(model.hp, T, steps, seed, path_count,
                                    "grid", workers)
        factor = np.exp(sups)
        for pair in pair_list:
            x, y = (np.atleast_1d(np.asarray(p, dtype=float)) for p in pair)
            dist = float(np.linalg.norm(x - y))
            rows.append(finish(pair, dist, dist * factor))
    elif isinstance(model, BumpFieldModel):
        steps = n_steps if n_steps is not None else 1024
        all_pts = [p for pair in pair_list for p in pair]
        side = float(np.max(np.abs(all_pts))) + model.spacing
        stats_ = bump_batch_stats(model, side, T, steps, seed, path_count,
                                  pair_points=tuple(pair_list), workers=workers)
        for j, pair in enumerate(pair_list):
            x, y = (np.atleast_1d(np.asarray(p, dtype=float)) for p in pair)
            dist = float(np.linalg.norm(x - y))
            rows.append(finish(pair, dist, stats_.sup_pair_dist[:, j]))
    else:
        pts = np.vstack([np.atleast_1d(np.asarray(p, dtype=float))
                         for pair in pair_list for p in pair])
        pair_idx = [(2 * i, 2 * i + 1) for i in range(len(pair_list))]
        steps = n_steps if n_steps is not None else max(
            64, int(math.ceil(T / model.stable_dt())) * 4)
        stats_ = sde_batch_stats(model, pts, T, steps, seed, path_count,
                                 pairs=pair_idx, workers=workers)
        for j, pair in enumerate(pair_list):
            x, y = (np.atleast_1d(np.asarray(p, dtype=float)) for p in pair)
            dist = float(np.linalg.norm(x - y))
            rows.append(finish(pair, dist, stats_.sup_pair_dist[:, j]))
    return MomentCheckReport(tuple(rows), q, T, all(r.ok for r in rows))


# ---------------------------------------------------------------------------
# pathwise GRR audit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GrrAuditReport:
    violations: int
    pairs_checked: int
    paths_used: int
    paths_excluded: int
    min_ratio: float      # min over pairs of bound / realized increment
    median_ratio: float


def _lebesgue_ball(t_max: float) -> Callable[[np.ndarray, float], float]:
    # min(z, s) + min(t_max - z, s) equals |[z-s, z+s] ∩ [0, t_max]| without
    # the catastrophic cancellation of min(z+s,..) - max(z-s,..) at tiny s
    def ball(z: np.ndarray, s: float) -> float:
        zz = float(np.atleast_1d(z)[0])
        return min(zz, s) + min(t_max - zz, s)
    return ball


def _grr_g_table(t_grid: np.ndarray, q: float, alpha: float) -> np.ndarray:
    """G[z_index, k] = int_0^{4*k*h} m(K_{s/2}(z))^(-2/q) dp(s), p(s)=s^alpha.

    Substituting s = 4*rho*v^4 regularises the endpoint singularity, so
    plain Simpson in v is accurate.  Requires alpha > 2/q for finiteness.
    """
    n = len(t_grid)
    t_max = float(t_grid[-1])
    h = t_grid[1] - t_grid[0]
    if alpha <= 2.0 / q:
        return np.full((n, n - 1), np.inf)
    n_v = 513
    v = np.linspace(0.0, 1.0, n_v)
    v[0] = 1e-9
    out = np.empty((n, n - 1))
    rho_all = h * np.arange(1, n)
    z = t_grid[:, None, None]
    simpson_w = np.ones(n_v)
    simpson_w[1:-1:2] = 4.0
    simpson_w[2:-1:2] = 2.0
    for k0 in range(0, n - 1, 32):
        rho = rho_all[k0:k0 + 32][None, :, None]
        s = 4.0 * rho * v[None, None, :] ** 4
        r = s / 2.0
        mlen = np.minimum(z, r) + np.minimum(t_max - z, r)
        # dp(s) = alpha s^(alpha-1) ds;  ds = 16 rho v^3 dv
        integrand = (mlen ** (-2.0 / q) * alpha * s ** (alpha - 1.0)
                     * 16.0 * rho * v[None, None, :] ** 3)
        out[:, k0:k0 + 32] = (integrand @ simpson_w) / (3.0 * (n_v - 1))
    return out


def grr_pathwise_audit(field: str | Callable[[np.ndarray, np.random.Generator], np.ndarray],
                       grid_n: int = 256, q: float = 4.0, p_exponent: float = 1.0,
                       path_count: int = 100, seed: int = 0,
                       t_max: float = 1.0) -> GrrAuditReport:
    """Audit the GRR modulus bound pathwise: for every simulated field and
    every grid pair, the bound built from the field's own energy V must
    dominate the realized increment.  Returns the (required-zero)
    violation count and tightness statistics.

    ``field`` is "brownian", "linear:<slope>", or a callable
    (t_grid, rng) -> values.
    """
    t_grid = np.linspace(0.0, t_max, grid_n)
    weights = np.full(grid_n, t_max / grid_n)
    ball = _lebesgue_ball(t_max)
    alpha = p_exponent
    g_table = _grr_g_table(t_grid, q, alpha)
    h = t_grid[1] - t_grid[0]

    def sample(rng: np.random.Generator) -> np.ndarray:
        if callable(field):
            return np.asarray(field(t_grid, rng), dtype=float)
        if field == "brownian":
            dw = rng.standard_normal(grid_n - 1) * math.sqrt(h)
            return np.concatenate(([0.0], np.cumsum(dw)))
        if field.startswith("linear:"):
            c = float(field.split(":", 1)[1])
            return c * t_grid
        raise ValueError(f"unknown field {field!r}")

    ii, jj = np.triu_indices(grid_n, k=1)
    k_idx = (jj - ii) - 1
    g_max = np.maximum(g_table[ii, k_idx], g_table[jj, k_idx])

    violations = 0
    pairs_checked = 0
    used = 0
    excluded = 0
    ratios_min = math.inf
    ratio_medians = []
    for path_id in range(path_count):
        rng = chunk_stream(seed, TAG_GRR, path_id)
        f = sample(rng)
        inst = GrrInstance(
            points=t_grid[:, None],
            measure_weights=weights,
            field_values=f,
            ball_measure_fn=ball,
            p_fn=lambda s, a=alpha: np.power(s, a),
            young_exponent=q,
        )
        V, _ = grr_functional(inst)
        if not math.isfinite(V):
            excluded += 1
            continue
        used += 1
        bound = 8.0 * (4.0 * V) ** (1.0 / q) * g_max
        incr = np.abs(f[jj] - f[ii])
        pairs_checked += len(incr)
        violations += int(np.sum(bound < incr))
        pos = incr > 0
        if np.any(pos):
            r = bound[pos] / incr[pos]
            ratios_min = min(ratios_min, float(np.min(r)))
            ratio_medians.append(float(np.median(r)))
    return GrrAuditReport(
        violations=violations,
        pairs_checked=pairs_checked,
        paths_used=used,
        paths_excluded=excluded,
        min_ratio=ratios_min,
        median_ratio=float(np.median(ratio_medians)) if ratio_medians else math.inf,
    )


# ---------------------------------------------------------------------------
# dispersion growth experiment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DispersionReport:
    covering_count: int
    covering_bound: float
    covering_ok: bool
    covering_eps: float
    s1_center_escape: TailEstimate   # worst sampled center, threshold kappa*T - 1
    s2_cell_diameter: TailEstimate   # worst sampled cell, threshold 1
    s1_total: float                  # covering_count * worst escape p_hat
    s2_total: float
    kappa: float
    growth_max: float                # empirical max over paths of sup_t |phi_t|/T
    K: float
    growth_ok: bool
    subsampled: bool


def dispersion_experiment(spec: ExperimentSpec, dp: DispersionParams,
                          kappa: float | None = None,
                          max_cells: int = 4,
                          max_centers: int = 6) -> DispersionReport:
    """Covering + escape/diameter split behind the linear-growth theorem.

    Covers the compact set with cubes of side exp(-gamma T), estimates the
    escape probability of sampled centers past kappa*T - 1 and the unit
    diameter probability of sampled cells, and compares empirical growth
    against the constant K."""
    if spec.compact is None:
        raise ValueError("dispersion experiments need a compact set descriptor")
    if not isinstance(spec.model, SdeFlowModel):
        raise ValueError("dispersion experiments drive the SDE flow model")
    compact = spec.compact
    K = growth_constant_K(dp)
    kap = K if kappa is None else kappa
    side = spec.cube_side()
    eps = 0.1
    d = spec.model.dim

    if compact.kind == "cube":
        per_axis = int(math.ceil(compact.side / side))
        covering_count = per_axis ** d
        origin = np.asarray(compact.origin, dtype=float)
        max_idx = per_axis ** d
        n_cells = min(max_cells, max_idx)
        subsampled = max_idx > n_cells
        # deterministic spread of sampled cells along the diagonal
        picks = np.linspace(0, per_axis - 1, n_cells).astype(int)
        cell_origins = [origin + side * np.full(d, k, dtype=float) for k in picks]
    else:
        pts = np.atleast_2d(np.asarray(compact.points, dtype=float))
        covering_count = len(pts)
        n_cells = min(max_cells, len(pts))
        subsampled = len(pts) > n_cells
        cell_origins = [pts[i] for i in range(n_cells)]
    covering_bound = math.exp(spec.gamma * spec.T * (compact.delta + eps))
    covering_ok = covering_count <= covering_bound

    centers = np.vstack([o + side / 2.0 for o in cell_origins])[:max_centers]
    n_steps = spec.n_steps if spec.n_steps is not None else max(
        64, int(math.ceil(spec.T / spec.model.stable_dt())) * 4)
    center_stats = sde_batch_stats(spec.model, centers, spec.T, n_steps,
                                   spec.seed, spec.path_count, workers=spec.workers)
    escape_threshold = kap * spec.T - 1.0
    worst_escape = 0
    for k in range(len(centers)):
        worst_escape = max(worst_escape,
                           int(np.sum(center_stats.sup_norm[:, k] >= escape_threshold)))
    n_used = len(center_stats.sup_norm)
    s1 = make_tail_estimate(worst_escape, n_used, spec.seed,
                            escape_threshold, spec.T, spec.ci_alpha)

    worst_diam = 0
    n_diam = spec.path_count
    for o in cell_origins:
        cell_pts = _cube_points(np.asarray(o, dtype=float), side, d)
        st = sde_batch_stats(spec.model, cell_pts, spec.T, n_steps, spec.seed,
                             spec.path_count, workers=spec.workers)
        n_diam = min(n_diam, len(st.sup_diam))
        worst_diam = max(worst_diam, int(np.sum(st.sup_diam >= 1.0)))
    s2 = make_tail_estimate(worst_diam, n_diam, spec.seed, 1.0, spec.T,
                            spec.ci_alpha)

    growth_max = float(np.max(center_stats.sup_norm)) / spec.T
    return DispersionReport(
        covering_count=covering_count,
        covering_bound=covering_bound,
        covering_ok=covering_ok,
        covering_eps=eps,
        s1_center_escape=s1,
        s2_cell_diameter=s2,
        s1_total=covering_count * s1.p_hat,
        s2_total=covering_count * s2.p_hat,
        kappa=kap,
        growth_max=growth_max,
        K=K,
        growth_ok=growth_max <= K,
        subsampled=subsampled,
    )


# ---------------------------------------------------------------------------
# bound vs estimate comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundComparisonRow:
    route: str
    bound: float       # capped at 1
    p_hat: float
    ci_high: float
    dominant: bool     # bound >= ci_high


@dataclass(frozen=True)
class BoundsComparison:
    rows: tuple[BoundComparisonRow, ...]
    estimate: TailEstimate
    gamma: float
    T: float
    u: float
    all_dominant: bool


def compare_bounds(spec: ExperimentSpec,
                   routes: Sequence[str] = bounds_mod.ROUTES) -> BoundsComparison:
    """Each chaining route's capped bound against the Monte Carlo upper
    confidence limit on identical (gamma, T, u, hp)."""
    est = estimate_tail(spec)
    hp = spec.hp
    rows = []
    for route in routes:
        b = small_ball_tail_bound(route, hp, spec.gamma, spec.T, spec.u, q=None)
        rows.append(BoundComparisonRow(
            route=route, bound=b, p_hat=est.p_hat, ci_high=est.ci_high,
            dominant=b >= est.ci_high))
    return BoundsComparison(tuple(rows), est, spec.gamma, spec.T, spec.u,
                            all(r.dominant for r in rows))
