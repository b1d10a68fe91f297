"""Shared parameter containers.

``HParams`` carries the geometric-Brownian moment hypothesis on two-point
distances of a flow: for all q >= 1 and T > 0,

    (E sup_{t<=T} rho(phi_t(x), phi_t(y))^q)^(1/q)
        <= cbar * |x-y| * exp((lam + q*sigma^2/2) * T).

``DispersionParams`` adds the one-point dispersion data (box dimension of
the compact set, diffusion bound A, radial drift bound B) from which the
almost-sure linear growth constant K is derived.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass


@dataclass(frozen=True)
class HParams:
    """Moment-hypothesis triple (lam, sigma, cbar) plus spatial dimension."""

    lam: float          # drift exponent, 1/time, >= 0
    sigma: float        # volatility, 1/sqrt(time), > 0
    cbar: float = 2.0   # moment constant, dimensionless, >= 1
    dim: int = 1        # spatial dimension, >= 1

    def __post_init__(self):
        if not self.lam >= 0.0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if not self.cbar >= 1.0:
            raise ValueError(f"cbar must be >= 1, got {self.cbar}")
        if not (isinstance(self.dim, int) and self.dim >= 1):
            raise ValueError(f"dim must be a positive integer, got {self.dim}")


@dataclass(frozen=True)
class DispersionParams:
    """Box dimension and one-point bounds feeding the growth constant K."""

    delta: float    # box (upper entropy) dimension of the compact set, > 0
    a_diff: float   # diffusion bound A, > 0
    b_drift: float  # radial drift bound B, any sign
    hp: HParams

    def __post_init__(self):
        if not self.delta > 0.0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if not self.a_diff > 0.0:
            raise ValueError(f"a_diff must be > 0, got {self.a_diff}")
        if self.delta > self.hp.dim:
            warnings.warn(
                f"box dimension delta={self.delta} exceeds ambient dim={self.hp.dim}",
                stacklevel=2,
            )


@dataclass(frozen=True)
class DiffFlowParams:
    """Parameters of the finite-horizon bound for differentiable
    translation-invariant Brownian flows.

    ``z`` is the multiplicative step of the hitting-time ladder, ``eps``
    the slack in the Laplace-transform comparison, ``u_hat`` the
    displacement cap.  Admissibility (for xi > 0) requires

        z > eps + cbar * (1 - eps)^(-sigma^2/xi),

    which makes the per-rung log factor negative.
    """

    hp: HParams
    xi: float       # excess exponent, >= 0
    z: float        # ladder step, > cbar
    eps: float      # slack in (0, 1)
    u_hat: float    # displacement cap, > 0

    def __post_init__(self):
        if not self.xi >= 0.0:
            raise ValueError(f"xi must be >= 0, got {self.xi}")
        if not 0.0 < self.eps < 1.0:
            raise ValueError(f"eps must be in (0,1), got {self.eps}")
        if not self.u_hat > 0.0:
            raise ValueError(f"u_hat must be > 0, got {self.u_hat}")
        if not self.z > self.hp.cbar:
            raise ValueError(f"z must exceed cbar={self.hp.cbar}, got {self.z}")
        if self.xi > 0.0:
            floor = self.eps + self.hp.cbar * math.exp(
                -(self.hp.sigma ** 2 / self.xi) * math.log1p(-self.eps))
            if not self.z > floor:
                raise ValueError(
                    f"inadmissible (z, eps): need z > {floor:.6g}, got z={self.z}")

    @property
    def admissibility_floor(self) -> float:
        if self.xi == 0.0:
            return self.hp.cbar
        return self.eps + self.hp.cbar * math.exp(
            -(self.hp.sigma ** 2 / self.xi) * math.log1p(-self.eps))
