import math

import numpy as np
import pytest

from smallcost.simulate import (
    PathConfig,
    simulate_factor,
    simulate_fixed,
    simulate_proportional,
    trading_stats,
)

from .conftest import GAMMA, KO


def test_path_config_validation():
    with pytest.raises(ValueError):
        PathConfig(dt=0.0)
    with pytest.raises(ValueError):
        PathConfig(n_paths=0)
    assert PathConfig(dt=0.25, T=1.0).n_steps == 4


def test_factor_paths_are_deterministic_and_stationary():
    cfg = PathConfig(seed=5, dt=0.05, T=2000.0, n_paths=1)
    a, b = simulate_factor(KO, cfg), simulate_factor(KO, cfg)
    assert np.array_equal(a, b)
    var = KO.sigma_F**2 / (2 * KO.kappa)
    phi = math.exp(-KO.kappa * cfg.dt)
    se = math.sqrt(var / a.size * (1 + phi) / (1 - phi))
    assert abs(a.mean() - KO.F_bar) < 3 * se


def test_factor_without_noise_decays():
    quiet = type(KO)(**{**KO.__dict__, "sigma_F": 1e-300})
    path = simulate_factor(quiet, PathConfig(dt=0.1, T=5.0), f0=0.2)[0]
    t = np.arange(path.size) * 0.1
    np.testing.assert_allclose(path, KO.F_bar + (0.2 - KO.F_bar) * np.exp(-KO.kappa * t), rtol=1e-12)


@pytest.fixture(scope="module")
def prop_path():
    return simulate_proportional(KO, GAMMA, 40.0, 0.01, PathConfig(seed=1, dt=1 / 2520, T=5.0))


def test_proportional_containment_and_monotone_transfers(prop_path):
    p = prop_path
    assert not p.bankrupt
    assert np.all(p.weight >= p.lower - 1e-12) and np.all(p.weight <= p.upper + 1e-12)
    dL, dM = np.diff(p.L), np.diff(p.M)
    assert np.all(dL >= 0) and np.all(dM >= 0)
    assert not np.any((dL > 0) & (dM > 0))
    assert np.all(np.diff(p.trades) >= 0)


def test_proportional_stats(prop_path):
    s = trading_stats(prop_path)
    assert s.trade_count > 0 and 0 < s.boundary_fraction < 1
    assert s.turnover == pytest.approx(prop_path.L[-1] + prop_path.M[-1])


def test_same_seed_same_bytes(tmp_path):
    cfg = PathConfig(seed=9, dt=1 / 250, T=1.0)
    for name in ("a.csv", "b.csv"):
        simulate_proportional(KO, GAMMA, 40.0, 0.01, cfg).to_csv(tmp_path / name, comment="x")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    header = (tmp_path / "a.csv").read_text().splitlines()[1]
    assert header == "time,factor,pi,lower,upper,weight,L,M,trades"


def test_wide_region_means_no_trading():
    p = simulate_proportional(KO, GAMMA, 40.0, 0.99, PathConfig(seed=2, dt=1 / 250, T=1.0))
    assert p.L[-1] == 0 and p.M[-1] == 0 and p.trade_count == 0
    s = trading_stats(p)
    assert (s.turnover, s.trade_count, s.boundary_fraction) == (0.0, 0, 0.0)


def test_turnover_scales_like_inverse_cube_root():
    def mean_turnover(lam, n=20):
        cfg = PathConfig(seed=3, dt=1 / 250, T=10.0)
        tv = [trading_stats(simulate_proportional(KO, GAMMA, 40.0, lam, cfg, path_index=i)).turnover for i in range(n)]
        return np.mean(tv), np.std(tv, ddof=1) / math.sqrt(n)

    (m1, s1), (m2, s2) = mean_turnover(1e-3), mean_turnover(1e-2)
    ratio = m1 / m2
    se = ratio * math.hypot(s1 / m1, s2 / m2)
    assert abs(ratio - 10 ** (1 / 3)) < 3 * se


@pytest.mark.slow
def test_turnover_converges_in_dt():
    # both resolutions are driven by the same Brownian paths
    def mean_turnover(dt, refinement):
        cfg = PathConfig(seed=4, dt=dt, T=2.0, noise_refinement=refinement)
        paths = (simulate_proportional(KO, GAMMA, 40.0, 0.01, cfg, path_index=i) for i in range(20))
        return np.mean([trading_stats(p).turnover for p in paths])

    coarse, fine = mean_turnover(1 / 2520, 4), mean_turnover(1 / 10080, 1)
    assert abs(fine / coarse - 1) < 0.10


def test_fixed_policy_trades_back_to_target():
    cfg = PathConfig(seed=1, dt=1 / 2520, T=2.0)
    p = simulate_fixed(KO, GAMMA, 40.0, lambda t, f, pi: 0.05, cfg, fixed_cost=1 / 5000)
    traded = np.flatnonzero(np.diff(p.trades) > 0) + 1
    assert traded.size > 0
    assert np.array_equal(p.weight[traded], p.pi[traded])
    assert p.wealth[-1] < simulate_fixed(KO, GAMMA, 40.0, lambda t, f, pi: 0.05, cfg, deduct_costs=False).wealth[-1]


def test_fixed_policy_with_infinite_band_never_trades():
    p = simulate_fixed(KO, GAMMA, 40.0, lambda t, f, pi: math.inf, PathConfig(seed=1, dt=1 / 250, T=1.0))
    assert p.trade_count == 0


def test_single_trade_path():
    # the band closes only at the last step
    cfg = PathConfig(seed=1, dt=0.1, T=1.0)
    p = simulate_fixed(KO, GAMMA, 40.0, lambda t, f, pi: np.where(t < 0.95, math.inf, 0.0), cfg, w0=0.0)
    assert trading_stats(p).trade_count == 1


def test_horizon_guard():
    with pytest.raises(ValueError):
        simulate_proportional(KO, GAMMA, 1.0, 0.01, PathConfig(T=2.0))
    with pytest.raises(ValueError):
        simulate_fixed(KO, GAMMA, 40.0, lambda t, f, pi: -1.0, PathConfig(T=1.0))
