"""Sample paths of the factor, the frictionless target and frictional trading policies."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .corrector import ko_ntregion
from .frictionless import ko_weight
from .models import KimOmbergParams, validate


@dataclass(frozen=True)
class PathConfig:
    seed: int = 0
    dt: float = 1.0 / 2520
    T: float = 1.0
    n_paths: int = 1
    # draw noise on a grid `noise_refinement` times finer and aggregate it, so that
    # runs with dt and dt / k share Brownian paths (common random numbers)
    noise_refinement: int = 1

    def __post_init__(self):
        if not self.dt > 0 or not self.T > 0:
            raise ValueError("dt and T must be positive")
        if self.n_paths < 1 or self.noise_refinement < 1:
            raise ValueError("n_paths and noise_refinement must be at least 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def normals(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Standard normals of shape ``(n, n_steps)`` built from the refined draws."""
        k = self.noise_refinement
        raw = rng.standard_normal((n, self.n_steps * k))
        return raw.reshape(n, self.n_steps, k).sum(axis=2) / math.sqrt(k) if k > 1 else raw

    def rng(self, path_index: int = 0) -> np.random.Generator:
        """Per-path generator derived deterministically from the master seed."""
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(path_index,)))


@dataclass(frozen=True, eq=False)
class FrictionalPath:
    times: np.ndarray
    factor: np.ndarray
    pi: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    weight: np.ndarray
    L: np.ndarray
    M: np.ndarray
    trades: np.ndarray  # cumulative trade count
    wealth: np.ndarray
    bankrupt: bool = False

    COLUMNS = ("time", "factor", "pi", "lower", "upper", "weight", "L", "M", "trades")

    @property
    def trade_count(self) -> int:
        return int(self.trades[-1])

    def to_csv(self, path, comment: str | None = None) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            writer = csv.writer(fh)
            writer.writerow(self.COLUMNS)
            for row in zip(self.times, self.factor, self.pi, self.lower, self.upper, self.weight, self.L, self.M, self.trades):
                writer.writerow([repr(float(x)) for x in row[:-1]] + [int(row[-1])])


@dataclass(frozen=True)
class TradingStats:
    turnover: float
    trade_count: int
    max_deviation: float
    boundary_fraction: float


def ou_step_coefficients(kappa: float, sigma_F: float, dt: float) -> tuple[float, float]:
    """Decay factor and innovation standard deviation of an exact OU transition."""
    decay = math.exp(-kappa * dt)
    sd = sigma_F * math.sqrt(-math.expm1(-2 * kappa * dt) / (2 * kappa))
    return decay, sd


def _factor_and_shocks(ko: KimOmbergParams, cfg: PathConfig, rng, n: int, f0: float):
    """Factor paths (n, steps+1) and standardized innovations of the factor."""
    steps = cfg.n_steps
    decay, sd = ou_step_coefficients(ko.kappa, ko.sigma_F, cfg.dt)
    eps = cfg.normals(rng, n)
    F = np.empty((n, steps + 1))
    F[:, 0] = f0
    for k in range(steps):
        F[:, k + 1] = ko.F_bar + (F[:, k] - ko.F_bar) * decay + sd * eps[:, k]
    return F, eps


def simulate_factor(ko: KimOmbergParams, cfg: PathConfig, f0: float | None = None) -> np.ndarray:
    """Exact OU transition sampling; shape ``(n_paths, n_steps + 1)``."""
    validate(ko)
    f0 = ko.F_bar if f0 is None else f0
    return np.vstack([_factor_and_shocks(ko, cfg, cfg.rng(i), 1, f0)[0] for i in range(cfg.n_paths)])


def _run_policy(ko, cfg, rng, f0, w0, target_of: Callable, bounds_of: Callable, lambda_p, fixed_cost, deduct_costs):
    """Shared stepping loop; ``target_of`` returns the post-trade weight or None."""
    validate(ko)
    times = cfg.times()
    F, eps = _factor_and_shocks(ko, cfg, rng, 1, f0)
    F, eps = F[0], eps[0]
    other = cfg.normals(rng, 1)[0]
    dW_S = math.sqrt(cfg.dt) * (ko.rho * eps + math.sqrt(1 - ko.rho**2) * other)
    pi, lower, upper = bounds_of(times, F)

    n = cfg.n_steps + 1
    weight = np.empty(n)
    L = np.zeros(n)
    M = np.zeros(n)
    trades = np.zeros(n, dtype=int)
    wealth = np.ones(n)
    weight[0] = pi[0] if w0 is None else w0
    growth_B = math.exp(ko.r * cfg.dt)
    bankrupt = False
    p, W, cumL, cumM, count = weight[0], 1.0, 0.0, 0.0, 0
    for k in range(1, n):
        g_S = math.exp((ko.r + F[k - 1] - 0.5 * ko.sigma_S**2) * cfg.dt + ko.sigma_S * dW_S[k - 1])
        gross = p * g_S + (1 - p) * growth_B
        if gross <= 0:
            bankrupt = True
            n = k
            break
        p = p * g_S / gross
        W *= gross
        q = target_of(k, p, pi, lower, upper)
        if q is not None:
            lam = lambda_p if deduct_costs else 0.0
            c = fixed_cost / W if deduct_costs else 0.0
            if q * (1 - c) > p:
                dL = (q * (1 - c) - p) / (1 + lam * q)
                cumL += dL * W
                spent = lam * dL + c
            else:
                dM = (p - q * (1 - c)) / (1 - lam * q)
                cumM += dM * W
                spent = lam * dM + c
            W *= 1 - spent
            if W <= 0:
                bankrupt = True
                n = k
                break
            p = q
            count += 1
        weight[k], L[k], M[k], trades[k], wealth[k] = p, cumL, cumM, count, W
    sl = slice(0, n)
    return FrictionalPath(
        times=times[sl], factor=F[sl], pi=pi[sl], lower=lower[sl], upper=upper[sl],
        weight=weight[sl], L=L[sl], M=M[sl], trades=trades[sl], wealth=wealth[sl], bankrupt=bankrupt,
    )  # fmt: skip


def simulate_proportional(
    ko: KimOmbergParams,
    gamma: float,
    T: float,
    lambda_p: float,
    cfg: PathConfig,
    path_index: int = 0,
    f0: float | None = None,
    w0: float | None = None,
    deduct_costs: bool = True,
) -> FrictionalPath:
    """Minimal trading that keeps the weight inside the asymptotic no-trade region.

    ``T`` is the planning horizon of the frictionless problem; the path covers
    ``[0, cfg.T]`` with ``cfg.T <= T``. L and M are cumulative purchases and
    sales in units of initial wealth.
    """
    if cfg.T > T + 1e-12:
        raise ValueError("simulation length exceeds the planning horizon")

    def bounds_of(times, F):
        region = ko_ntregion(ko, gamma, T, np.minimum(times, T), F, lambda_p)
        return np.asarray(region.center), np.asarray(region.lower), np.asarray(region.upper)

    def target_of(k, p, pi, lower, upper):
        if p > upper[k]:
            return upper[k]
        if p < lower[k]:
            return lower[k]
        return None

    f0 = ko.F_bar if f0 is None else f0
    return _run_policy(ko, cfg, cfg.rng(path_index), f0, w0, target_of, bounds_of, lambda_p, 0.0, deduct_costs)


def simulate_fixed(
    ko: KimOmbergParams,
    gamma: float,
    T: float,
    halfwidth_fn: Callable,
    cfg: PathConfig,
    path_index: int = 0,
    f0: float | None = None,
    w0: float | None = None,
    lambda_p: float = 0.0,
    fixed_cost: float = 0.0,
    deduct_costs: bool = True,
) -> FrictionalPath:
    """Rebalance all the way to the frictionless weight on leaving ``[pi - h, pi + h]``.

    ``halfwidth_fn(t, f, pi)`` supplies the band (vectorized); ``fixed_cost`` is
    the per-trade fee as a fraction of initial wealth.
    """
    if cfg.T > T + 1e-12:
        raise ValueError("simulation length exceeds the planning horizon")

    def bounds_of(times, F):
        pi = np.asarray(ko_weight(ko, gamma, T, np.minimum(times, T), F))
        h = np.broadcast_to(np.asarray(halfwidth_fn(times, F, pi), dtype=float), pi.shape)
        if np.any(h < 0):
            raise ValueError("half-width must be nonnegative")
        return pi, pi - h, pi + h

    def target_of(k, p, pi, lower, upper):
        if p > upper[k] or p < lower[k]:
            return pi[k]
        return None

    f0 = ko.F_bar if f0 is None else f0
    return _run_policy(ko, cfg, cfg.rng(path_index), f0, w0, target_of, bounds_of, lambda_p, fixed_cost, deduct_costs)


def trading_stats(path: FrictionalPath) -> TradingStats:
    traded = np.diff(path.trades) > 0
    return TradingStats(
        turnover=float(path.L[-1] + path.M[-1]),
        trade_count=path.trade_count,
        max_deviation=float(np.max(np.abs(path.weight - path.pi))),
        boundary_fraction=float(traded.mean()) if traded.size else 0.0,
    )
