import pytest

from smallcost.models import BlackScholesParams, KimOmbergParams

# yearly factor-model calibration used throughout the figure configs
KO = KimOmbergParams(r=0.0168, sigma_S=0.151, kappa=0.271, F_bar=0.041, sigma_F=0.0343)
BS = BlackScholesParams(r=0.0168, mu=0.041, sigma=0.151)
GAMMA = 3.0


@pytest.fixture
def ko():
    return KO


@pytest.fixture
def bs():
    return BS
