"""Leading-order welfare losses from small proportional costs.

All losses scale exactly as ``lambda_p ** (2/3)``: every routine computes the
normalized (unit-cost) quantity first and multiplies by that prefactor last.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import integrate
from scipy.signal import lfilter

from ._parallel import batch_map
from .corrector import power_halfwidth
from .frictionless import StationaryPolicy, ko_stationary, merton_weight, riccati_arrays
from .models import BlackScholesParams, KimOmbergParams, validate
from .simulate import ou_step_coefficients


class NonpositiveTiltError(ValueError):
    pass


class QuadratureError(RuntimeError):
    def __init__(self, message: str, error_estimate: float):
        super().__init__(message)
        self.error_estimate = error_estimate


@dataclass(frozen=True)
class TiltedOUParams:
    kappa_tilde: float
    F_tilde: float
    sigma_F: float

    @property
    def stationary_variance(self) -> float:
        return self.sigma_F**2 / (2.0 * self.kappa_tilde)

    @property
    def stationary_sd(self) -> float:
        return math.sqrt(self.stationary_variance)


@dataclass(frozen=True)
class ESRLossResult:
    delta_esr: float
    lambda_p: float
    quadrature_error_estimate: float = 0.0


@dataclass(frozen=True)
class CELResult:
    cel: float
    standard_error: float
    n_paths: int
    n_steps: int
    units: Literal["wealth_fraction", "currency"] = "wealth_fraction"


@dataclass(frozen=True)
class MCEstimate:
    value: float
    standard_error: float
    n_paths: int
    n_steps: int


@dataclass(frozen=True)
class MonteCarloConfig:
    seed: int = 0
    dt: float = 1.0 / 250
    n_paths: int = 1000
    batch_size: int = 250

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_paths < 2 or self.batch_size < 1:
            raise ValueError("need at least two paths and a positive batch size")


@dataclass(frozen=True)
class QuadratureConfig:
    n_sd: float = 8.0
    epsabs: float = 1e-13
    epsrel: float = 1e-10
    limit: int = 200


def _prefactor(lambda_p: float) -> float:
    if not 0 <= lambda_p < 1:
        raise ValueError("lambda_p must lie in [0, 1)")
    return lambda_p ** (2.0 / 3.0)


def _time_grid(horizon: float, dt: float) -> np.ndarray:
    n = max(1, math.ceil(horizon / dt - 1e-9))
    return np.linspace(0.0, horizon, n + 1)


def _mean_and_se(samples: np.ndarray) -> tuple[float, float]:
    return float(samples.mean()), float(samples.std(ddof=1) / math.sqrt(samples.size))


# ----------------------------------------------------------- tilted factor law


def tilt_coefficients(ko: KimOmbergParams, gamma: float, B, C, intercept, slope):
    """``(kappa_tilde, kappa_tilde * F_tilde)`` of the affine tilted drift."""
    cross = (1.0 - gamma) * ko.sigma_F * ko.sigma_S * ko.rho
    speed = ko.kappa - cross * slope - C * ko.sigma_F**2
    level = ko.kappa * ko.F_bar + cross * intercept + B * ko.sigma_F**2
    return speed, level


def tilted_ou(ko: KimOmbergParams, gamma: float, stationary: StationaryPolicy | None = None) -> TiltedOUParams:
    stationary = ko_stationary(ko, gamma) if stationary is None else stationary
    speed, level = tilt_coefficients(
        ko, gamma, stationary.B_bar, stationary.C_bar, stationary.pi_bar_intercept, stationary.pi_bar_slope
    )
    if not speed > 0:
        raise NonpositiveTiltError(f"nonpositive tilted speed: kappa_tilde = {speed:.6g}")
    return TiltedOUParams(kappa_tilde=float(speed), F_tilde=float(level / speed), sigma_F=ko.sigma_F)


def simulate_tilted_factor(tilt: TiltedOUParams, n_steps: int, dt: float, seed: int = 0, f0: float | None = None):
    """One long stationary-tilt path with exact OU transitions (``n_steps + 1`` points)."""
    rng = np.random.default_rng(seed)
    decay, sd = ou_step_coefficients(tilt.kappa_tilde, tilt.sigma_F, dt)
    if f0 is None:
        f0 = tilt.F_tilde + tilt.stationary_sd * rng.standard_normal()
    # AR(1) recursion x_{k+1} = decay * x_k + e_k, run by lfilter
    e = sd * rng.standard_normal(n_steps)
    x = lfilter([1.0], [1.0, -decay], e, zi=[decay * (f0 - tilt.F_tilde)])[0]
    return tilt.F_tilde + np.concatenate(([f0 - tilt.F_tilde], x))


@dataclass(frozen=True)
class MomentCheck:
    mean: float
    mean_se: float
    variance: float
    variance_se: float


def ar1_moment_check(path: np.ndarray, decay: float, variance: float) -> MomentCheck:
    """Sample mean and variance of a stationary AR(1) path with their standard errors.

    Standard errors use the exact long-run variance factors of a Gaussian
    AR(1) with coefficient ``decay`` and marginal variance ``variance``.
    """
    n = path.size
    se_mean = math.sqrt(variance / n * (1 + decay) / (1 - decay))
    se_var = math.sqrt(2 * variance**2 / n * (1 + decay**2) / (1 - decay**2))
    return MomentCheck(float(path.mean()), se_mean, float(path.var(ddof=1)), se_var)


# ------------------------------------------------------------------ ESR loss


def esr_loss_bs(bs: BlackScholesParams, gamma: float, lambda_p: float) -> ESRLossResult:
    validate(bs)
    pi = merton_weight(bs, gamma)
    core = 1.5 / gamma * (pi * (1.0 - pi)) ** 2
    normalized = gamma * bs.sigma**2 / 2.0 * core ** (2.0 / 3.0)
    return ESRLossResult(delta_esr=_prefactor(lambda_p) * normalized, lambda_p=lambda_p)


def _stationary_integrand(ko: KimOmbergParams, gamma: float, stationary: StationaryPolicy):
    slope = stationary.pi_bar_slope

    def g(f):
        hw = power_halfwidth(stationary.weight(f), slope, gamma, ko.sigma_S, ko.sigma_F, ko.rho)
        return 0.5 * gamma * ko.sigma_S**2 * hw**2

    return g


def esr_loss_ko(
    ko: KimOmbergParams, gamma: float, lambda_p: float, quad: QuadratureConfig = QuadratureConfig()
) -> ESRLossResult:
    """Stationary-law average of the squared half-width, by adaptive quadrature.

    The reported error adds the quadrature estimate on the truncated interval
    to the mass of the two discarded Gaussian tails.
    """
    prefactor = _prefactor(lambda_p)
    stationary = ko_stationary(ko, gamma)
    tilt = tilted_ou(ko, gamma, stationary)
    g = _stationary_integrand(ko, gamma, stationary)
    m, s = tilt.F_tilde, tilt.stationary_sd

    def weighted(f):
        return float(g(f)) * math.exp(-0.5 * ((f - m) / s) ** 2) / (s * math.sqrt(2 * math.pi))

    lo, hi = m - quad.n_sd * s, m + quad.n_sd * s
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, err = integrate.quad(weighted, lo, hi, epsabs=quad.epsabs, epsrel=quad.epsrel, limit=quad.limit)
            tail_hi, _ = integrate.quad(weighted, hi, math.inf, limit=quad.limit)
            tail_lo, _ = integrate.quad(weighted, -math.inf, lo, limit=quad.limit)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"quadrature did not converge: {exc}", math.nan) from exc
    total_err = err + abs(tail_hi) + abs(tail_lo)
    if not total_err <= max(quad.epsabs, quad.epsrel * abs(value)) * 100:
        raise QuadratureError(f"quadrature error {total_err:.3g} exceeds tolerance", total_err)
    return ESRLossResult(delta_esr=prefactor * value, lambda_p=lambda_p, quadrature_error_estimate=prefactor * total_err)


def esr_loss_ko_mc(
    ko: KimOmbergParams, gamma: float, lambda_p: float, horizon: float = 50.0, cfg: MonteCarloConfig = MonteCarloConfig()
) -> MCEstimate:
    """Time-averaged stationary loss rate along simulated tilted paths.

    Paths start from the stationary tilted law, evolve with exact OU steps and
    the stationary policy, and the per-path time average is taken with the
    trapezoid rule. Independent of the quadrature in :func:`esr_loss_ko`.
    """
    prefactor = _prefactor(lambda_p)
    stationary = ko_stationary(ko, gamma)
    tilt = tilted_ou(ko, gamma, stationary)
    g = _stationary_integrand(ko, gamma, stationary)
    times = _time_grid(horizon, cfg.dt)
    decay, sd = ou_step_coefficients(tilt.kappa_tilde, tilt.sigma_F, times[1] - times[0])

    def batch(rng, count):
        x = tilt.stationary_sd * rng.standard_normal(count)
        vals = np.empty((count, times.size))
        vals[:, 0] = g(tilt.F_tilde + x)
        for k in range(1, times.size):
            x = decay * x + sd * rng.standard_normal(count)
            vals[:, k] = g(tilt.F_tilde + x)
        return integrate.trapezoid(vals, times, axis=1) / horizon

    samples = np.concatenate(batch_map(batch, cfg.seed, cfg.n_paths, cfg.batch_size))
    mean, se = _mean_and_se(samples)
    return MCEstimate(prefactor * mean, prefactor * se, cfg.n_paths, times.size - 1)


def bs_esr(bs: BlackScholesParams, gamma: float) -> float:
    """Frictionless equivalent safe rate."""
    return bs.r + bs.mu**2 / (2.0 * gamma * bs.sigma**2)


def ko_esr(ko: KimOmbergParams, gamma: float) -> float:
    """Frictionless long-run equivalent safe rate, from the linear growth of ``A``."""
    # slope of A in tau, read off at two long horizons
    tau = np.array([400.0, 800.0])
    A, _, _ = riccati_arrays(ko, gamma, tau)
    return float((A[1] - A[0]) / (tau[1] - tau[0]) / (1.0 - gamma))


# ------------------------------------------------------------------ CEL


def cel_monte_carlo(
    ko: KimOmbergParams,
    gamma: float,
    T: float,
    lambda_p: float,
    cfg: MonteCarloConfig = MonteCarloConfig(),
    t: float = 0.0,
    f: float | None = None,
    z: float | None = None,
) -> CELResult:
    """Certainty-equivalent loss under the tilted measure with its time-dependent drift.

    Without ``z`` the result is relative to current wealth; with ``z`` it is in
    currency. Each step freezes the affine tilted drift at the step start and
    applies the exact OU transition; the time integral uses the trapezoid rule.
    """
    validate(ko)
    if not T > t:
        raise ValueError("horizon must exceed the current time")
    prefactor = _prefactor(lambda_p)
    f = ko.F_bar if f is None else f
    times = t + _time_grid(T - t, cfg.dt)
    dt = times[1] - times[0]
    _, B, C = riccati_arrays(ko, gamma, T - times)
    hedge = ko.rho * ko.sigma_F / (gamma * ko.sigma_S)
    intercept = hedge * B
    slope = 1.0 / (gamma * ko.sigma_S**2) + hedge * C
    speed, level = tilt_coefficients(ko, gamma, B, C, intercept, slope)
    steps = []
    for k in range(times.size - 1):
        kap = speed[k]
        if abs(kap) * dt < 1e-12:
            steps.append((1.0, level[k] * dt, ko.sigma_F * math.sqrt(dt)))
            continue
        decay, sd = ou_step_coefficients(kap, ko.sigma_F, dt) if kap > 0 else (
            math.exp(-kap * dt), ko.sigma_F * math.sqrt(math.expm1(-2 * kap * dt) / (-2 * kap)))
        steps.append((decay, level[k] / kap * (1 - decay), sd))  # fmt: skip

    def integrand(k, F):
        hw = power_halfwidth(intercept[k] + slope[k] * F, slope[k], gamma, ko.sigma_S, ko.sigma_F, ko.rho)
        return 0.5 * gamma * ko.sigma_S**2 * hw**2

    def batch(rng, count):
        F = np.full(count, float(f))
        vals = np.empty((count, times.size))
        vals[:, 0] = integrand(0, F)
        for k, (decay, shift, sd) in enumerate(steps):
            F = decay * F + shift + sd * rng.standard_normal(count)
            vals[:, k + 1] = integrand(k + 1, F)
        return integrate.trapezoid(vals, times, axis=1)

    samples = np.concatenate(batch_map(batch, cfg.seed, cfg.n_paths, cfg.batch_size))
    mean, se = _mean_and_se(samples)
    scale = prefactor * (1.0 if z is None else z)
    return CELResult(
        cel=scale * mean, standard_error=scale * se, n_paths=cfg.n_paths, n_steps=len(steps),
        units="wealth_fraction" if z is None else "currency",
    )  # fmt: skip


# ---------------------------------------------------------- second corrector


def second_corrector_u(
    model, gamma: float, T: float, t: float, z: float, f: float = 0.0, cfg: MonteCarloConfig = MonteCarloConfig()
) -> MCEstimate:
    """Unit-cost second corrector ``u`` by Feynman-Kac along frictionless optimal paths.

    Uses ``-a = (gamma sigma_S^2 / 2) * Z^(1-gamma) * exp(A + B F + C F^2 / 2) * dpi^2``,
    which is the corrector constant with power-utility derivatives substituted.
    Multiply by ``lambda_p ** (2/3)`` for a given cost.
    """
    validate(model)
    if t > T:
        raise ValueError("time must not exceed the horizon")
    if not z > 0:
        raise ValueError("wealth must be positive")
    if t == T:
        return MCEstimate(0.0, 0.0, cfg.n_paths, 0)
    times = t + _time_grid(T - t, cfg.dt)
    dt = times[1] - times[0]
    tau = T - times

    if isinstance(model, BlackScholesParams):
        sS, r, rho, sF = model.sigma, model.r, 0.0, 0.0
        k = (1.0 - gamma) * (model.r + model.mu**2 / (2.0 * gamma * model.sigma**2))
        A, B, C = k * tau, np.zeros_like(tau), np.zeros_like(tau)
        pi0 = merton_weight(model, gamma)
        intercept, slope = np.full_like(tau, pi0), np.zeros_like(tau)
        pi_f = np.zeros_like(tau)
        factor_step = None
        f = 0.0

        def excess(F):
            return model.mu
    elif isinstance(model, KimOmbergParams):
        sS, r, rho, sF = model.sigma_S, model.r, model.rho, model.sigma_F
        A, B, C = riccati_arrays(model, gamma, tau)
        hedge = rho * sF / (gamma * sS)
        intercept = hedge * B
        slope = 1.0 / (gamma * sS**2) + hedge * C
        pi_f = slope
        factor_step = ou_step_coefficients(model.kappa, sF, dt)

        def excess(F):
            return F
    else:
        raise TypeError(f"unsupported model {type(model).__name__}")

    def neg_a(k, logZ, F):
        pi = intercept[k] + slope[k] * F
        hw = power_halfwidth(pi, pi_f[k], gamma, sS, sF, rho)
        level = np.exp((1.0 - gamma) * logZ + A[k] + B[k] * F + 0.5 * C[k] * F * F)
        return 0.5 * gamma * sS**2 * hw**2 * level

    def batch(rng, count):
        F = np.full(count, float(f))
        logZ = np.full(count, math.log(z))
        vals = np.empty((count, times.size))
        vals[:, 0] = neg_a(0, logZ, F)
        for k in range(times.size - 1):
            pi = intercept[k] + slope[k] * F
            eF = rng.standard_normal(count)
            eS = rho * eF + math.sqrt(1.0 - rho**2) * rng.standard_normal(count)
            logZ = logZ + (r + pi * excess(F) - 0.5 * (pi * sS) ** 2) * dt + pi * sS * math.sqrt(dt) * eS
            if factor_step is not None:
                decay, sd = factor_step
                F = model.F_bar + (F - model.F_bar) * decay + sd * eF
            vals[:, k + 1] = neg_a(k + 1, logZ, F)
        return integrate.trapezoid(vals, times, axis=1)

    samples = np.concatenate(batch_map(batch, cfg.seed, cfg.n_paths, cfg.batch_size))
    mean, se = _mean_and_se(samples)
    return MCEstimate(mean, se, cfg.n_paths, times.size - 1)
