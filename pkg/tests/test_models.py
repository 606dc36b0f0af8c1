import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from smallcost.models import (
    BlackScholesParams,
    CostSpec,
    KimOmbergParams,
    Preferences,
    ValidationError,
    from_dict,
    to_dict,
    validate,
)

pos = st.floats(1e-4, 10.0)


@pytest.mark.parametrize(
    "record, field",
    [
        (BlackScholesParams(r=0.0, mu=0.05, sigma=0.0), "sigma"),
        (BlackScholesParams(r=math.nan, mu=0.05, sigma=0.2), "r"),
        (KimOmbergParams(r=0.0, sigma_S=0.2, kappa=-1.0, F_bar=0.0, sigma_F=0.1), "kappa"),
        (KimOmbergParams(r=0.0, sigma_S=0.2, kappa=1.0, F_bar=0.0, sigma_F=0.1, rho=1.5), "rho"),
        (Preferences(gamma=1.0), "gamma"),
        (Preferences(gamma=2.0, horizon_T=-1.0), "horizon_T"),
        (CostSpec(lambda_p=1.5), "lambda_p"),
    ],
)
def test_validation_names_field(record, field):
    with pytest.raises(ValidationError) as info:
        validate(record)
    assert info.value.field == field


def test_from_dict_rejects_unknown_and_missing():
    with pytest.raises(ValidationError, match="unknown key"):
        from_dict(BlackScholesParams, {"r": 0.0, "mu": 0.1, "sigma": 0.2, "drift": 1})
    with pytest.raises(ValidationError, match="missing required key 'sigma'"):
        from_dict(BlackScholesParams, {"r": 0.0, "mu": 0.1})


def test_validate_rejects_non_records():
    with pytest.raises(TypeError):
        validate({"r": 0.0})


@given(r=st.floats(-0.05, 0.1), s=pos, k=pos, f=st.floats(-0.2, 0.2), sf=pos, rho=st.floats(-0.99, 0.99))
def test_round_trip(r, s, k, f, sf, rho):
    ko = KimOmbergParams(r=r, sigma_S=s, kappa=k, F_bar=f, sigma_F=sf, rho=rho)
    assert from_dict(KimOmbergParams, to_dict(ko)) == ko


def test_records_are_frozen():
    p = Preferences(gamma=3.0)
    with pytest.raises(AttributeError):
        p.gamma = 2.0
