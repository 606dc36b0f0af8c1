import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from smallcost.frictionless import (
    bs_policy,
    bs_value,
    hjb_residual,
    ko_policy,
    ko_riccati,
    ko_stationary,
    ko_value,
    ko_weight,
    ko_weight_sensitivity,
    merton_weight,
    riccati_arrays,
)
from smallcost.models import KimOmbergParams

from .conftest import BS, GAMMA, KO


def riccati_ode(ko, gamma, taus):
    """Integrate the Riccati system in time-to-horizon from zero terminal data."""
    q = (1 - gamma) / gamma
    s2 = ko.sigma_S**2
    hedge = q * ko.rho * ko.sigma_F / ko.sigma_S
    a2 = ko.sigma_F**2 * (1 + q * ko.rho**2)

    def rhs(_, y):
        A, B, C = y
        dC = q / s2 + 2 * (hedge - ko.kappa) * C + a2 * C * C
        dB = ko.kappa * ko.F_bar * C + (hedge - ko.kappa) * B + a2 * B * C
        dA = (1 - gamma) * ko.r + ko.kappa * ko.F_bar * B + 0.5 * ko.sigma_F**2 * C + 0.5 * a2 * B * B
        return [dA, dB, dC]

    sol = solve_ivp(rhs, (0, max(taus)), [0.0, 0.0, 0.0], t_eval=taus, rtol=1e-11, atol=1e-13, method="DOP853")
    return sol.y


def test_closed_form_matches_ode():
    taus = np.array([0.0, 0.5, 2.0, 10.0, 40.0])
    A, B, C = riccati_arrays(KO, GAMMA, taus)
    ref = riccati_ode(KO, GAMMA, taus)
    np.testing.assert_allclose(np.vstack([A, B, C]), ref, rtol=1e-7, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(
    gamma=st.floats(1.2, 8.0),
    kappa=st.floats(0.05, 2.0),
    sigma_F=st.floats(0.005, 0.1),
    rho=st.floats(-0.95, 0.95),
    F_bar=st.floats(-0.05, 0.1),
)
def test_closed_form_matches_ode_property(gamma, kappa, sigma_F, rho, F_bar):
    ko = KimOmbergParams(r=0.02, sigma_S=0.18, kappa=kappa, F_bar=F_bar, sigma_F=sigma_F, rho=rho)
    taus = np.array([0.0, 1.0, 5.0, 20.0])
    ref = riccati_ode(ko, gamma, taus)
    got = np.vstack(riccati_arrays(ko, gamma, taus))
    np.testing.assert_allclose(got, ref, rtol=1e-6, atol=1e-9)


def test_terminal_values_vanish():
    c = ko_riccati(KO, GAMMA, 10.0, 10.0)
    assert c.time_to_horizon == 0.0
    np.testing.assert_allclose([c.A, c.B, c.C], 0.0, atol=1e-15)


def test_long_horizon_reaches_stationary_point():
    st_ = ko_stationary(KO, GAMMA)
    c = ko_riccati(KO, GAMMA, 200.0, 0.0)
    assert abs(c.B - st_.B_bar) < 1e-6 and abs(c.C - st_.C_bar) < 1e-6


def test_stationary_weight_is_affine():
    st_ = ko_stationary(KO, GAMMA)
    f = np.array([-0.02, 0.041, 0.1])
    np.testing.assert_allclose(st_.weight(f), ko_weight(KO, GAMMA, 500.0, 0.0, f), rtol=1e-9)


def test_weight_sensitivity_is_finite_difference_of_weight():
    h = 1e-6
    fd = (ko_weight(KO, GAMMA, 40.0, 3.0, 0.05 + h) - ko_weight(KO, GAMMA, 40.0, 3.0, 0.05 - h)) / (2 * h)
    assert ko_weight_sensitivity(KO, GAMMA, 40.0, 3.0) == pytest.approx(fd, rel=1e-7)


def test_policy_objects():
    pol = ko_policy(KO, GAMMA, 40.0)
    assert pol(1.0, 0.03) == pytest.approx(ko_weight(KO, GAMMA, 40.0, 1.0, 0.03))
    bp = bs_policy(BS, GAMMA)
    assert bp(0.0, 0.0) == merton_weight(BS, GAMMA)
    assert bp.weight_sensitivity_fn(0.0, 0.0) == 0.0


def test_hjb_residual_is_small_and_second_order():
    t = np.linspace(0.0, 39.0, 20)
    z = np.array([0.5, 1.0, 2.0])
    f = np.linspace(-0.05, 0.15, 20)
    assert hjb_residual(KO, GAMMA, 40.0, t, z, f) < 1e-6
    assert hjb_residual(BS, GAMMA, 40.0, t, z, f) < 1e-6
    coarse = hjb_residual(KO, GAMMA, 40.0, t, z, f, steps=(1e-2,) * 3)
    fine = hjb_residual(KO, GAMMA, 40.0, t, z, f, steps=(5e-3,) * 3)
    assert 3.0 < coarse / fine < 5.0


def test_hjb_residual_flags_a_wrong_value_function():
    wrong = lambda t, z, f: ko_value(KO, GAMMA, 40.0, t, z, f) * (1 + t)  # noqa: E731
    t, z, f = np.linspace(0, 30, 5), np.array([1.0]), np.linspace(0, 0.1, 5)
    assert hjb_residual(KO, GAMMA, 40.0, t, z, f, value=wrong) > 1e-2


def test_bs_value_homothetic():
    v1 = bs_value(BS, GAMMA, 10.0, 0.0, 1.0)
    v2 = bs_value(BS, GAMMA, 10.0, 0.0, 2.0)
    assert v2 / v1 == pytest.approx(2.0 ** (1 - GAMMA))


def test_invalid_inputs():
    with pytest.raises(ValueError):
        riccati_arrays(KO, 0.5, 1.0)
    with pytest.raises(ValueError):
        ko_riccati(KO, GAMMA, 1.0, 2.0)
    with pytest.raises(ValueError):
        ko_value(KO, GAMMA, 1.0, 0.0, -1.0, 0.0)
