"""First corrector equation in one dimension and the resulting no-trade regions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .frictionless import ko_weight, ko_weight_sensitivity
from .models import KimOmbergParams

Units = Literal["weight", "monetary"]


class UnitMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class CorrectorSolution:
    c2: float
    c4: float
    a: float
    delta_xi: float
    alpha_sq: float
    v_z: float
    v_zz: float

    @property
    def degenerate(self) -> bool:
        return bool(np.all(np.asarray(self.alpha_sq) == 0))


@dataclass(frozen=True)
class NoTradeRegion:
    center: float
    halfwidth: float
    cost_lambda: float
    units: Units = "weight"

    @property
    def lower(self):
        return self.center - self.halfwidth

    @property
    def upper(self):
        return self.center + self.halfwidth

    def contains(self, x, tol: float = 0.0):
        return (self.lower - tol <= x) & (x <= self.upper + tol)

    def halfwidth_ratio(self, other: "NoTradeRegion"):
        if other.units != self.units:
            raise UnitMismatchError(f"cannot compare {self.units} region with {other.units} region")
        return self.halfwidth / other.halfwidth


def alpha_squared(theta, theta_z, theta_f, sigma_S, sigma_F, rho):
    """Diffusion coefficient of the deviation from the frictionless position."""
    x = sigma_S * theta * (1.0 - theta_z)
    y = sigma_F * theta_f
    return x * x - 2.0 * rho * x * y + y * y


def solve_corrector_1d(v_z, v_zz, sigma_S, alpha_sq) -> CorrectorSolution:
    """Explicit solution ``(w, a)`` of the first corrector equation.

    Works elementwise on arrays. Where ``alpha_sq == 0`` the region is empty:
    ``delta_xi = a = 0`` and ``w`` vanishes identically.
    """
    v_z, v_zz, sigma_S, alpha_sq = np.broadcast_arrays(
        *(np.asarray(x, dtype=float) for x in (v_z, v_zz, sigma_S, alpha_sq))
    )
    if np.any(v_z <= 0) or np.any(v_zz >= 0):
        raise ValueError("corrector requires v_z > 0 and v_zz < 0")
    if np.any(sigma_S <= 0) or np.any(alpha_sq < 0):
        raise ValueError("corrector requires sigma_S > 0 and alpha_sq >= 0")
    s2 = sigma_S**2
    delta_xi = np.cbrt(-v_z / v_zz * 3.0 * alpha_sq / (2.0 * s2))
    a = s2 * v_zz * delta_xi**2 / 2.0
    live = alpha_sq > 0
    safe = np.where(live, alpha_sq, 1.0)
    c4 = np.where(live, s2 * v_zz / (12.0 * safe), 0.0)
    c2 = np.where(live, -a / safe, 0.0)
    return CorrectorSolution(
        c2=c2[()], c4=c4[()], a=a[()], delta_xi=delta_xi[()],
        alpha_sq=alpha_sq[()], v_z=v_z[()], v_zz=v_zz[()],
    )  # fmt: skip


def w_eval(sol: CorrectorSolution, xi):
    """Evaluate the corrector potential; linear with slope ``+-v_z`` outside the region."""
    xi = np.asarray(xi, dtype=float)
    if sol.degenerate:
        return np.zeros_like(xi)[()]
    d = sol.delta_xi
    inside = sol.c4 * xi**4 + sol.c2 * xi**2
    edge = sol.c4 * d**4 + sol.c2 * d**2
    outside = edge + sol.v_z * (np.abs(xi) - d)
    return np.where(np.abs(xi) <= d, inside, outside)[()]


def power_halfwidth(pi, pi_f, gamma, sigma_S, sigma_F, rho=0.0):
    """Normalized weight half-width: the region is ``pi +- lambda**(1/3) * power_halfwidth``."""
    x = np.asarray(pi, dtype=float) * (1.0 - np.asarray(pi, dtype=float))
    y = np.asarray(pi_f, dtype=float) * sigma_F / sigma_S
    quad = x * x - 2.0 * rho * x * y + y * y
    return np.cbrt(1.5 / gamma * np.maximum(quad, 0.0))[()]


def ntregion_power(pi, pi_f, gamma, sigma_S, sigma_F, lambda_p, rho=0.0) -> NoTradeRegion:
    if not gamma > 0 or not sigma_S > 0:
        raise ValueError("gamma and sigma_S must be positive")
    if not 0 <= lambda_p < 1:
        raise ValueError("lambda_p must lie in [0, 1)")
    hw = np.cbrt(lambda_p) * power_halfwidth(pi, pi_f, gamma, sigma_S, sigma_F, rho)
    return NoTradeRegion(center=np.asarray(pi, dtype=float)[()], halfwidth=hw, cost_lambda=lambda_p, units="weight")


def ntregion_monetary(theta, sol: CorrectorSolution, lambda_p) -> NoTradeRegion:
    """Region in currency units around the frictionless position ``theta``."""
    return NoTradeRegion(center=theta, halfwidth=np.cbrt(lambda_p) * sol.delta_xi, cost_lambda=lambda_p, units="monetary")


def ko_ntregion(ko: KimOmbergParams, gamma: float, T: float, t, f, lambda_p) -> NoTradeRegion:
    pi = ko_weight(ko, gamma, T, t, f)
    pi_f = ko_weight_sensitivity(ko, gamma, T, t)
    return ntregion_power(pi, pi_f, gamma, ko.sigma_S, ko.sigma_F, lambda_p, rho=ko.rho)
