"""Frictionless value functions and optimal risky weights.

Black-Scholes (constant coefficients) and Kim-Omberg (Ornstein-Uhlenbeck
expected excess return) with power utility. Riccati coefficients are always
evaluated on time-to-horizon ``tau = T - u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .models import BlackScholesParams, KimOmbergParams, validate


class ComplexDiscriminantError(ValueError):
    """The normal-solution branch of the Riccati system does not apply."""


@dataclass(frozen=True)
class RiccatiCoefficients:
    A: float
    B: float
    C: float
    time_to_horizon: float


@dataclass(frozen=True)
class FrictionlessPolicy:
    weight_fn: Callable
    weight_sensitivity_fn: Callable

    def __call__(self, t, f):
        return self.weight_fn(t, f)


@dataclass(frozen=True)
class StationaryPolicy:
    B_bar: float
    C_bar: float
    pi_bar_intercept: float
    pi_bar_slope: float

    def weight(self, f):
        return self.pi_bar_intercept + self.pi_bar_slope * np.asarray(f, dtype=float)


# ---------------------------------------------------------------- Black-Scholes


def merton_weight(bs: BlackScholesParams, gamma: float) -> float:
    validate(bs)
    return bs.mu / (gamma * bs.sigma**2)


def bs_growth_rate(bs: BlackScholesParams, gamma: float) -> float:
    """Exponent rate ``(1-gamma)(r + mu^2/(2 gamma sigma^2))`` of the value function."""
    return (1.0 - gamma) * (bs.r + bs.mu**2 / (2.0 * gamma * bs.sigma**2))


def bs_value(bs: BlackScholesParams, gamma: float, T: float, t, z):
    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=float)
    return z ** (1.0 - gamma) / (1.0 - gamma) * np.exp(bs_growth_rate(bs, gamma) * (T - t))


def bs_policy(bs: BlackScholesParams, gamma: float) -> FrictionlessPolicy:
    pi = merton_weight(bs, gamma)
    return FrictionlessPolicy(
        weight_fn=lambda t, f: np.full(np.broadcast(t, f).shape, pi)[()],
        weight_sensitivity_fn=lambda t, f: np.zeros(np.broadcast(t, f).shape)[()],
    )


# ------------------------------------------------------------------ Kim-Omberg


@dataclass(frozen=True)
class _KOConstants:
    q: float  # (1 - gamma) / gamma
    b: float
    a2: float  # quadratic coefficient of the C-Riccati equation
    eta: float


def _ko_constants(ko: KimOmbergParams, gamma: float) -> _KOConstants:
    validate(ko)
    if not gamma > 1:
        raise ValueError("the Kim-Omberg closed form requires gamma > 1")
    q = (1.0 - gamma) / gamma
    ratio = ko.sigma_F / ko.sigma_S
    b = 2.0 * (q * ratio * ko.rho - ko.kappa)
    a2 = ko.sigma_F**2 * (1.0 + q * ko.rho**2)
    eta_sq = b * b - 4.0 * q * ratio**2 * (1.0 + q * ko.rho**2)
    if not eta_sq > 0:
        raise ComplexDiscriminantError(f"complex discriminant: eta^2 = {eta_sq:.6g} <= 0")
    return _KOConstants(q=q, b=b, a2=a2, eta=math.sqrt(eta_sq))


def riccati_arrays(ko: KimOmbergParams, gamma: float, tau):
    """Vectorized ``(A, B, C)`` at time-to-horizon ``tau`` (scalar or array)."""
    k = _ko_constants(ko, gamma)
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("time to horizon must be nonnegative")
    q, b, eta, a2 = k.q, k.b, k.eta, k.a2
    s2 = ko.sigma_S**2
    kfb = ko.kappa * ko.F_bar

    E = np.exp(-eta * tau)
    Eh = np.exp(-eta * tau / 2.0)
    D = 2.0 * eta - (b + eta) * (1.0 - E)

    C = q * 2.0 / s2 * (1.0 - E) / D
    B = 4.0 * q * kfb / s2 * (1.0 - Eh) ** 2 / (eta * D)
    A = (
        q * (gamma * ko.r + 2.0 * kfb**2 / (s2 * eta**2) + ko.sigma_F**2 / (s2 * (eta - b))) * tau
        + q * 4.0 * kfb**2 / s2 * ((2.0 * b + eta) * E - 4.0 * b * Eh + 2.0 * b - eta) / (eta**3 * D)
        - ko.sigma_F**2 / (2.0 * a2) * np.log(np.abs(D) / (2.0 * eta))
    )
    return A, B, C


def ko_riccati(ko: KimOmbergParams, gamma: float, T: float, u: float) -> RiccatiCoefficients:
    if u > T:
        raise ValueError("current time u must not exceed the horizon T")
    tau = float(T - u)
    A, B, C = riccati_arrays(ko, gamma, tau)
    return RiccatiCoefficients(A=float(A), B=float(B), C=float(C), time_to_horizon=tau)


def _weight_from_bc(ko: KimOmbergParams, gamma: float, B, C, f):
    hedge = ko.rho * ko.sigma_F / (gamma * ko.sigma_S)
    return f / (gamma * ko.sigma_S**2) + hedge * (B + C * f)


def _slope_from_c(ko: KimOmbergParams, gamma: float, C):
    return 1.0 / (gamma * ko.sigma_S**2) + ko.rho * ko.sigma_F / (gamma * ko.sigma_S) * C


def ko_weight(ko: KimOmbergParams, gamma: float, T: float, t, f):
    t = np.asarray(t, dtype=float)
    if np.any(t > T):
        raise ValueError("time must not exceed the horizon T")
    _, B, C = riccati_arrays(ko, gamma, T - t)
    return _weight_from_bc(ko, gamma, B, C, np.asarray(f, dtype=float))[()]


def ko_weight_sensitivity(ko: KimOmbergParams, gamma: float, T: float, t):
    """Derivative of the Kim-Omberg weight in the factor; independent of ``f``."""
    t = np.asarray(t, dtype=float)
    _, _, C = riccati_arrays(ko, gamma, T - t)
    return _slope_from_c(ko, gamma, C)[()]


def ko_policy(ko: KimOmbergParams, gamma: float, T: float) -> FrictionlessPolicy:
    return FrictionlessPolicy(
        weight_fn=lambda t, f: ko_weight(ko, gamma, T, t, f),
        weight_sensitivity_fn=lambda t, f: np.broadcast_to(
            ko_weight_sensitivity(ko, gamma, T, t), np.broadcast(t, f).shape
        )[()],
    )


def ko_value(ko: KimOmbergParams, gamma: float, T: float, t, z, f):
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise ValueError("wealth must be positive")
    f = np.asarray(f, dtype=float)
    A, B, C = riccati_arrays(ko, gamma, T - np.asarray(t, dtype=float))
    return (z ** (1.0 - gamma) / (1.0 - gamma) * np.exp(A + B * f + 0.5 * C * f * f))[()]


def ko_stationary(ko: KimOmbergParams, gamma: float) -> StationaryPolicy:
    k = _ko_constants(ko, gamma)
    if k.eta == k.b:
        raise ValueError("eta equals b")
    s2 = ko.sigma_S**2
    C_bar = k.q * 2.0 / (s2 * (k.eta - k.b))
    B_bar = 4.0 * k.q * ko.kappa * ko.F_bar / (s2 * k.eta * (k.eta - k.b))
    return StationaryPolicy(
        B_bar=B_bar,
        C_bar=C_bar,
        pi_bar_intercept=float(_weight_from_bc(ko, gamma, B_bar, C_bar, 0.0)),
        pi_bar_slope=float(_slope_from_c(ko, gamma, C_bar)),
    )


# ------------------------------------------------------------- HJB residual


def _model_coefficients(model):
    """(r, mu_S(f), mu_F(f), sigma_S, sigma_F, rho) for either model."""
    if isinstance(model, BlackScholesParams):
        return model.r, (lambda f: model.mu + 0.0 * f), (lambda f: 0.0 * f), model.sigma, 0.0, 0.0
    if isinstance(model, KimOmbergParams):
        return (
            model.r,
            lambda f: f,
            lambda f: model.kappa * (model.F_bar - f),
            model.sigma_S,
            model.sigma_F,
            model.rho,
        )
    raise TypeError(f"unsupported model {type(model).__name__}")


def hjb_residual(model, gamma: float, T: float, t_grid, z_grid, f_grid, steps=(1e-4, 1e-4, 1e-4), value=None) -> float:
    """Maximum of ``|A v| / (1 + |v|)`` over the tensor grid.

    ``A v`` is the frictionless dynamic programming operator with the optimal
    position plugged in; every derivative is a central finite difference of
    ``value(t, z, f)`` (the model's closed form unless given explicitly).
    """
    validate(model)
    if value is None:
        if isinstance(model, KimOmbergParams):
            value = lambda t, z, f: ko_value(model, gamma, T, t, z, f)  # noqa: E731
        else:
            value = lambda t, z, f: bs_value(model, gamma, T, t, z) + 0.0 * f  # noqa: E731
    r, mu_S, mu_F, sS, sF, rho = _model_coefficients(model)
    ht, hz, hf = steps
    t, z, f = np.meshgrid(
        np.asarray(t_grid, float), np.asarray(z_grid, float), np.asarray(f_grid, float), indexing="ij"
    )

    v = value(t, z, f)
    v_t = (value(t + ht, z, f) - value(t - ht, z, f)) / (2 * ht)
    v_z = (value(t, z + hz, f) - value(t, z - hz, f)) / (2 * hz)
    v_f = (value(t, z, f + hf) - value(t, z, f - hf)) / (2 * hf)
    v_zz = (value(t, z + hz, f) - 2 * v + value(t, z - hz, f)) / hz**2
    v_ff = (value(t, z, f + hf) - 2 * v + value(t, z, f - hf)) / hf**2
    v_zf = (
        value(t, z + hz, f + hf) - value(t, z + hz, f - hf) - value(t, z - hz, f + hf) + value(t, z - hz, f - hf)
    ) / (4 * hz * hf)

    mu = mu_S(f)
    num = mu * v_z + rho * sS * sF * v_zf
    with np.errstate(divide="ignore", invalid="ignore"):
        theta = np.where(v_zz != 0, num / (-sS**2 * v_zz), 0.0)
    Av = (
        v_t
        + mu_F(f) * v_f
        + 0.5 * sF**2 * v_ff
        + r * z * v_z
        + mu * theta * v_z
        + 0.5 * sS**2 * theta**2 * v_zz
        + theta * sS * sF * rho * v_zf
    )
    return float(np.max(np.abs(Av) / (1.0 + np.abs(v))))
