"""Flow models and path simulation.

Three models share the geometric-Brownian two-point moment hypothesis:

* the exact linear flow phi_t(x) = x * exp(lam*t + sigma*W_t), whose cube
  diameter reduces to a scalar functional of one Brownian path (no spatial
  discretisation at all);
* a lattice-of-bumps field with one independent geometric Brownian
  exponent per lattice cell (at most one bump is active at any point);
* a generic SDE flow advanced by Euler-Maruyama with the SAME noise
  increments for every initial point (flow coupling).

All simulation is deterministic given (seed, path_id, config); see
``flowchain._rng`` for the stream layout.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from ._rng import (TAG_PATH_BUMP, TAG_PATH_LINEAR, TAG_PATH_SDE, TAG_VALIDATE,
                   pathwise_stream, stream)
from .params import HParams


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearFlowModel:
    """x -> x * exp(lam*t + sigma*W_t) with a single driving Brownian motion."""

    hp: HParams


def default_bump(x: np.ndarray) -> np.ndarray:
    """Radial tent max(0, 1 - 2|x|): value 1 at 0, support inside
    [-1/2, 1/2]^d, Euclidean Lipschitz constant exactly 2 in every dimension."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return np.maximum(0.0, 1.0 - 2.0 * np.linalg.norm(x, axis=-1))


@dataclass(frozen=True)
class BumpFieldModel:
    """Lattice of scaled bumps, one independent exponent per cell:
    phi_t(x) = sum_i spacing * h(x/spacing - i) * exp(lam*t + sigma*W^i_t)."""

    hp: HParams
    spacing: float
    bump: Callable[[np.ndarray], np.ndarray] = default_bump

    def __post_init__(self):
        if not self.spacing > 0:
            raise ValueError(f"spacing must be > 0, got {self.spacing}")
        d = self.hp.dim
        h0 = float(np.asarray(self.bump(np.zeros((1, d))))[0])
        if abs(h0 - 1.0) > 1e-12:
            raise ValueError(f"bump must satisfy h(0)=1, got {h0}")
        rng = stream(0, TAG_VALIDATE, d)
        pts = rng.uniform(-0.8, 0.8, size=(256, d))
        vals = np.asarray(self.bump(pts), dtype=float)
        outside = np.any(np.abs(pts) > 0.5 + 1e-12, axis=1)
        if np.any(vals[outside] != 0.0):
            raise ValueError("bump must vanish outside [-1/2, 1/2]^d")
        other = rng.uniform(-0.8, 0.8, size=(256, d))
        ovals = np.asarray(self.bump(other), dtype=float)
        dist = np.linalg.norm(pts - other, axis=1)
        lip = np.max(np.abs(vals - ovals) / np.maximum(dist, 1e-300))
        if lip > 2.0 + 1e-9:
            raise ValueError(f"sampled bump Lipschitz constant {lip} exceeds 2")


@dataclass(frozen=True)
class SdeFlowModel:
    """dX = b(X) dt + sum_i sigma_i(X) dW_i with Lipschitz coefficients.

    ``drift`` and each diffusion field map (n, dim) arrays to (n, dim)
    arrays.  ``b_lip`` bounds the drift Lipschitz constant; ``a_lip``
    bounds the diffusion in the quadratic-variation operator-norm sense,
    || sum_i (s_i(x)-s_i(y))(s_i(x)-s_i(y))^T || <= a_lip^2 |x-y|^2.
    """

    drift: Callable[[np.ndarray], np.ndarray]
    diffusions: tuple[Callable[[np.ndarray], np.ndarray], ...]
    dim: int
    b_lip: float
    a_lip: float

    def __post_init__(self):
        if not (isinstance(self.dim, int) and self.dim >= 1):
            raise ValueError(f"dim must be a positive integer, got {self.dim}")
        if self.b_lip < 0 or self.a_lip < 0:
            raise ValueError("declared Lipschitz constants must be nonnegative")
        if len(self.diffusions) == 0:
            raise ValueError("at least one diffusion field is required")

    def stable_dt(self) -> float:
        scale = max(self.b_lip, self.a_lip ** 2, 1e-12)
        return 0.1 / scale


def estimate_sde_lipschitz(model: SdeFlowModel, box_radius: float = 5.0,
                           n_pairs: int = 512, seed: int = 0) -> tuple[float, float]:
    """Sampled-pair estimates of (b_lip, a_lip) inside a centred box."""
    rng = stream(seed, TAG_VALIDATE, model.dim, n_pairs)
    x = rng.uniform(-box_radius, box_radius, size=(n_pairs, model.dim))
    y = rng.uniform(-box_radius, box_radius, size=(n_pairs, model.dim))
    dist = np.linalg.norm(x - y, axis=1)
    keep = dist > 1e-9
    x, y, dist = x[keep], y[keep], dist[keep]
    db = np.asarray(model.drift(x)) - np.asarray(model.drift(y))
    b_hat = float(np.max(np.linalg.norm(db, axis=1) / dist))
    quad = np.zeros((len(x), model.dim, model.dim))
    for sig in model.diffusions:
        ds = np.asarray(sig(x)) - np.asarray(sig(y))
        quad += ds[:, :, None] * ds[:, None, :]
    op_norm = np.linalg.eigvalsh(quad)[:, -1]
    a_hat = float(np.max(np.sqrt(np.maximum(op_norm, 0.0)) / dist))
    return b_hat, a_hat


def validate_sde_lipschitz(model: SdeFlowModel, box_radius: float = 5.0,
                           n_pairs: int = 512, seed: int = 0) -> None:
    b_hat, a_hat = estimate_sde_lipschitz(model, box_radius, n_pairs, seed)
    if b_hat > model.b_lip * (1.0 + 1e-6) + 1e-12:
        raise ValueError(f"sampled drift Lipschitz {b_hat} exceeds declared {model.b_lip}")
    if a_hat > model.a_lip * (1.0 + 1e-6) + 1e-12:
        raise ValueError(f"sampled diffusion Lipschitz {a_hat} exceeds declared {model.a_lip}")


def lipschitz_to_H_params(m: SdeFlowModel) -> HParams:
    """Moment-hypothesis parameters guaranteed by Lipschitz coefficients:
    sigma = a_lip, lam = b_lip + (dim-1) a_lip^2 / 2, cbar = 2."""
    if not m.a_lip > 0:
        raise ValueError("a_lip must be positive to yield sigma > 0")
    lam = m.b_lip + (m.dim - 1) * m.a_lip ** 2 / 2.0
    return HParams(lam=lam, sigma=m.a_lip, cbar=2.0, dim=m.dim)


# ---------------------------------------------------------------------------
# path containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PathEnsemble:
    """Simulated positions: values[path, point, time, coord]."""

    initial_points: np.ndarray
    time_grid: np.ndarray
    values: np.ndarray
    seed: int
    path_count: int
    nonfinite_points: tuple[int, ...] = ()

    def __post_init__(self):
        tg = np.asarray(self.time_grid, dtype=float)
        if np.any(np.diff(tg) <= 0.0):
            raise ValueError("time grid must be strictly increasing")
        start = self.values[:, :, 0, :]
        expected = np.broadcast_to(self.initial_points, start.shape)
        if not np.array_equal(start, expected):
            raise ValueError("values at t0 must equal the initial points exactly")


@dataclass(frozen=True)
class LinearPathResult:
    """One linear-flow path reduced to its exact diameter functionals."""

    sup_diam: float    # sup_t of the cube diameter sqrt(d)*L*exp(X_t)
    sup_factor: float  # max over the grid of exp(lam*t + sigma*W_t)
    cube_side: float
    dim: int

    def sup_modulus(self, r: float) -> float:
        """sup_t |phi_t(x)-phi_t(y)| for any pair at distance r."""
        return r * self.sup_factor


@dataclass(frozen=True)
class BumpFieldPathResult:
    sup_field: float
    inf_field: float
    sup_diam: float


# ---------------------------------------------------------------------------
# simulators
# ---------------------------------------------------------------------------

def simulate_linear(model: LinearFlowModel, cube_side: float, T: float,
                    n_steps: int, path_id: int, seed: int,
                    zero_noise: bool = False) -> LinearPathResult:
    """Exact reduction of the cube diameter under the linear flow.

    sup_{x,y in cube} |phi_t(x)-phi_t(y)| = sqrt(d)*L*exp(lam*t+sigma*W_t),
    so a single scalar path suffices.  ``zero_noise`` is a test hook that
    freezes W at 0.
    """
    if not (cube_side > 0 and T > 0):
        raise ValueError("cube_side and T must be positive")
    if not (isinstance(n_steps, int) and n_steps >= 1):
        raise ValueError("n_steps must be a positive integer")
    hp = model.hp
    t = np.linspace(0.0, T, n_steps + 1)
    if zero_noise:
        w = np.zeros(n_steps + 1)
    else:
        rng = pathwise_stream(seed, TAG_PATH_LINEAR, path_id)
        dw = rng.standard_normal(n_steps) * math.sqrt(T / n_steps)
        w = np.concatenate(([0.0], np.cumsum(dw)))
    x = hp.lam * t + hp.sigma * w
    sup_factor = float(np.exp(np.max(x)))
    return LinearPathResult(
        sup_diam=math.sqrt(hp.dim) * cube_side * sup_factor,
        sup_factor=sup_factor,
        cube_side=cube_side,
        dim=hp.dim,
    )


def _bump_cells(model: BumpFieldModel, cube_side: float) -> np.ndarray:
    """Integer lattice cells whose bump support can intersect [0, L]^d."""
    per_axis = range(0, int(math.floor(cube_side / model.spacing + 0.5)) + 1)
    cells = np.array(list(itertools.product(per_axis, repeat=model.hp.dim)),
                     dtype=float)
    return cells


def _bump_grid(model: BumpFieldModel, cube_side: float,
               grid_step: float) -> np.ndarray:
    d = model.hp.dim
    axis = np.arange(0.0, cube_side + grid_step * 0.5, grid_step)
    if axis[-1] < cube_side:
        axis = np.append(axis, cube_side)
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def simulate_bump_field(model: BumpFieldModel, cube_side: float, T: float,
                        n_steps: int, path_id: int, seed: int,
                        grid_step: float | None = None) -> BumpFieldPathResult:
    """Field statistics over a spatial sample grid and the time grid.

    Each lattice cell carries its own independent exponent path, keyed by
    (seed, path_id, cell index), so enlarging the cube never perturbs the
    noise of existing cells.
    """
    if not (cube_side > 0 and T > 0):
        raise ValueError("cube_side and T must be positive")
    delta = model.spacing
    if grid_step is None:
        grid_step = min(delta, cube_side) / 4.0
    if grid_step > delta:
        raise ValueError(
            f"spatial grid step {grid_step} is coarser than the bump "
            f"spacing {delta}; bumps could be missed entirely")
    hp = model.hp
    cells = _bump_cells(model, cube_side)
    grid = _bump_grid(model, cube_side, grid_step)
    cell_of_point = np.rint(grid / delta)
    h_vals = delta * np.asarray(model.bump(grid / delta - cell_of_point))

    # group grid points by their cell
    cell_index = {tuple(c): k for k, c in enumerate(cells)}
    h_max = np.zeros(len(cells))
    h_min = np.full(len(cells), np.inf)
    for val, cell in zip(h_vals, cell_of_point):
        k = cell_index[tuple(cell)]
        h_max[k] = max(h_max[k], val)
        h_min[k] = min(h_min[k], val)
    occupied = np.isfinite(h_min)

    t = np.linspace(0.0, T, n_steps + 1)
    sqrt_dt = math.sqrt(T / n_steps)
    log_paths = np.empty((len(cells), n_steps + 1))
    for k in range(len(cells)):
        rng = pathwise_stream(seed, TAG_PATH_BUMP, path_id, k)
        dw = rng.standard_normal(n_steps) * sqrt_dt
        w = np.concatenate(([0.0], np.cumsum(dw)))
        log_paths[k] = hp.lam * t + hp.sigma * w
    e_paths = np.exp(log_paths)

    per_t_max = np.max(h_max[occupied, None] * e_paths[occupied], axis=0)
    per_t_min = np.min(h_min[occupied, None] * e_paths[occupied], axis=0)
    return BumpFieldPathResult(
        sup_field=float(np.max(per_t_max)),
        inf_field=float(np.min(per_t_min)),
        sup_diam=float(np.max(per_t_max - per_t_min)),
    )


def simulate_sde_flow(model: SdeFlowModel, initial_points: Sequence,
                      T: float, n_steps: int, path_id: int,
                      seed: int) -> PathEnsemble:
    """Euler-Maruyama flow advance: every initial point sees the same noise
    increments, so the simulated map x -> phi_t(x) is a coupled flow."""
    if not T > 0:
        raise ValueError(f"T must be > 0, got {T}")
    pts = np.atleast_2d(np.asarray(initial_points, dtype=float))
    if pts.shape[1] != model.dim:
        raise ValueError(f"initial points must have dimension {model.dim}")
    dt = T / n_steps
    if dt > model.stable_dt() * (1.0 + 1e-12):
        raise ValueError(
            f"step {dt:.4g} exceeds the stability heuristic "
            f"{model.stable_dt():.4g}; increase n_steps")
    rng = pathwise_stream(seed, TAG_PATH_SDE, path_id)
    m = len(model.diffusions)
    dw = rng.standard_normal((n_steps, m)) * math.sqrt(dt)
    values = np.empty((1, len(pts), n_steps + 1, model.dim))
    x = pts.copy()
    values[0, :, 0, :] = x
    for k in range(n_steps):
        drift = np.asarray(model.drift(x))
        incr = drift * dt
        for i, sig in enumerate(model.diffusions):
            incr = incr + np.asarray(sig(x)) * dw[k, i]
        x = x + incr
        values[0, :, k + 1, :] = x
    bad = tuple(int(i) for i in np.nonzero(
        ~np.all(np.isfinite(values[0]), axis=(1, 2)))[0])
    return PathEnsemble(
        initial_points=pts,
        time_grid=np.linspace(0.0, T, n_steps + 1),
        values=values,
        seed=seed,
        path_count=1,
        nonfinite_points=bad,
    )


def order_preserving(ensemble: PathEnsemble) -> bool:
    """For 1-d flows with sorted initial points: does x -> phi_t(x) stay
    order preserving at every time step (homeomorphism proxy)?"""
    if ensemble.values.shape[-1] != 1:
        raise ValueError("order preservation is checked for 1-d flows only")
    vals = ensemble.values[:, :, :, 0]
    return bool(np.all(np.diff(vals, axis=1) >= 0.0))


def crossing_prob(a: float, mu: float, T: float) -> float:
    """P{sup_{t<=T} (mu*t + W_t) >= a}
    = Phi_bar((a-mu*T)/sqrt(T)) + e^(2*mu*a) * Phi_bar((a+mu*T)/sqrt(T))
    for a > 0, and 1 otherwise."""
    if not T > 0:
        raise ValueError(f"T must be > 0, got {T}")
    if a <= 0.0:
        return 1.0
    rt = math.sqrt(T)
    first = float(stats.norm.sf((a - mu * T) / rt))
    second = math.exp(2.0 * mu * a + float(stats.norm.logsf((a + mu * T) / rt)))
    return min(1.0, first + second)


# ---------------------------------------------------------------------------
# ready-made SDE models
# ---------------------------------------------------------------------------

def sine_sde_model() -> SdeFlowModel:
    """1-d flow dX = -sin(X) dt + (1 + 0.5 sin(X)) dW; b_lip=1, a_lip=0.5."""
    return SdeFlowModel(
        drift=lambda x: -np.sin(x),
        diffusions=(lambda x: 1.0 + 0.5 * np.sin(x),),
        dim=1,
        b_lip=1.0,
        a_lip=0.5,
    )


def contracting_sde_model(dim: int = 1, noise: float = 1.0) -> SdeFlowModel:
    """dX = -X dt + noise dW (additive noise cancels in two-point motion)."""
    return SdeFlowModel(
        drift=lambda x: -x,
        diffusions=(lambda x, n=noise: np.full_like(x, n),),
        dim=dim,
        b_lip=1.0,
        a_lip=0.0,
    )


def bounded_sde_model(A: float = 1.0, B: float = 0.5) -> SdeFlowModel:
    """1-d flow with bounded coefficients: dX = B*tanh(X) dt +
    A*(0.8 + 0.2 cos X) dW.  Radial drift limsup is B, diffusion bound A."""
    return SdeFlowModel(
        drift=lambda x, b=B: b * np.tanh(x),
        diffusions=(lambda x, a=A: a * (0.8 + 0.2 * np.cos(x)),),
        dim=1,
        b_lip=abs(B),
        a_lip=0.2 * A,
    )
