import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smallcost.corrector import (
    NoTradeRegion,
    UnitMismatchError,
    alpha_squared,
    ko_ntregion,
    ntregion_monetary,
    ntregion_power,
    power_halfwidth,
    solve_corrector_1d,
    w_eval,
)

from .conftest import GAMMA, KO

pos = st.floats(1e-3, 1e3)


@settings(max_examples=200)
@given(v_z=pos, v_zz=st.floats(-1e3, -1e-3), s=st.floats(1e-2, 10.0), a2=st.floats(1e-4, 1e2))
def test_smooth_pasting(v_z, v_zz, s, a2):
    sol = solve_corrector_1d(v_z, v_zz, s, a2)
    d = sol.delta_xi
    assert abs(12 * sol.c4 * d**2 + 2 * sol.c2) <= 1e-12 * (12 * abs(sol.c4) * d**2 + 2 * abs(sol.c2))
    assert 4 * sol.c4 * d**3 + 2 * sol.c2 * d == pytest.approx(v_z, rel=1e-12)


@given(v_z=pos, v_zz=st.floats(-1e3, -1e-3), s=st.floats(1e-2, 10.0), a2=st.floats(1e-4, 1e2))
def test_corrector_equation_inside(v_z, v_zz, s, a2):
    # alpha^2/2 w'' - sigma^2 v_zz xi^2 / 2 = -a inside the region
    sol = solve_corrector_1d(v_z, v_zz, s, a2)
    xi = np.linspace(-sol.delta_xi, sol.delta_xi, 7)
    w2 = 12 * sol.c4 * xi**2 + 2 * sol.c2
    lhs = a2 / 2 * w2 - s**2 * v_zz * xi**2 / 2
    np.testing.assert_allclose(lhs, -sol.a, rtol=1e-9, atol=1e-12 * abs(sol.a))
    assert sol.a <= 0


def test_reference_values():
    sol = solve_corrector_1d(1.0, -1.0, 1.0, 2.0 / 3.0)
    assert sol.delta_xi == pytest.approx(1.0, rel=1e-15)
    assert sol.a == pytest.approx(-0.5, rel=1e-15)


def test_w_outside_is_linear_and_c1():
    sol = solve_corrector_1d(2.0, -1.5, 0.7, 0.3)
    d, eps = sol.delta_xi, 1e-7
    left = (w_eval(sol, d) - w_eval(sol, d - eps)) / eps
    right = (w_eval(sol, d + eps) - w_eval(sol, d)) / eps
    assert left == pytest.approx(right, rel=1e-5)
    assert right == pytest.approx(sol.v_z, rel=1e-5)
    assert w_eval(sol, -3 * d) == pytest.approx(w_eval(sol, 3 * d))


def test_degenerate_alpha():
    sol = solve_corrector_1d(1.0, -1.0, 1.0, 0.0)
    assert sol.degenerate and sol.delta_xi == 0 and sol.a == 0
    assert np.all(w_eval(sol, [-1.0, 0.0, 2.0]) == 0)


def test_invalid_corrector_inputs():
    with pytest.raises(ValueError):
        solve_corrector_1d(-1.0, -1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        solve_corrector_1d(1.0, 1.0, 1.0, 1.0)


@pytest.mark.parametrize("pi", [0.0, 1.0])
def test_region_vanishes_at_corner_weights(pi):
    r = ntregion_power(pi, 0.0, GAMMA, 0.2, 0.05, 0.01)
    assert r.halfwidth == 0.0


@given(lam=st.floats(1e-6, 0.5), pi=st.floats(-1.0, 2.0), pf=st.floats(-20.0, 20.0))
def test_cube_root_scaling(lam, pi, pf):
    r = ntregion_power(pi, pf, GAMMA, 0.15, 0.03, lam)
    assert r.halfwidth == pytest.approx(np.cbrt(lam) * power_halfwidth(pi, pf, GAMMA, 0.15, 0.03), rel=1e-14)
    assert r.lower <= r.center <= r.upper


def test_power_form_matches_general_corrector():
    # homothetic reduction: -v_z/v_zz = z/gamma, region in money = z * region in weights
    pi, pf, sS, sF, rho, z = 0.6, 4.0, 0.15, 0.03, -0.4, 2.5
    a2 = alpha_squared(z * pi, pi, z * pf, sS, sF, rho)
    v_z = 1.7
    sol = solve_corrector_1d(v_z, -GAMMA * v_z / z, sS, a2)
    assert sol.delta_xi / z == pytest.approx(power_halfwidth(pi, pf, GAMMA, sS, sF, rho), rel=1e-12)


def test_factor_region_never_vanishes_without_correlation():
    t = np.zeros(401)
    f = np.linspace(-0.3, 0.3, 401)
    r = ko_ntregion(KO, GAMMA, 40.0, t, f, 0.01)
    assert np.all(r.halfwidth > 0)


def test_unit_tags():
    sol = solve_corrector_1d(1.0, -1.0, 1.0, 1.0)
    money = ntregion_monetary(10.0, sol, 0.001)
    weight = ntregion_power(0.5, 0.0, 2.0, 0.2, 0.0, 0.001)
    with pytest.raises(UnitMismatchError):
        money.halfwidth_ratio(weight)
    assert weight.halfwidth_ratio(NoTradeRegion(0.5, weight.halfwidth / 2, 0.001)) == pytest.approx(2.0)
    assert bool(weight.contains(0.5)) and not bool(weight.contains(5.0))
