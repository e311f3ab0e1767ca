import pytest

from mhdecay.evolution import GridSpec, InitialData, evolve
from mhdecay.fields import PotentialSpec
from mhdecay.geometry import BackgroundParams

BG = BackgroundParams(1.0)
PULSE = InitialData("compact-bump", 0.5, 8.0, 3.0, omega=1.5)
PULSE_POTENTIAL = PotentialSpec("Mass", c1=0.1)


@pytest.fixture(scope="session")
def pulse_histories():
    """Charged pulse on [0, 30]^2 at delta = 1/8 and 1/16."""
    return {d: evolve(GridSpec(0.0, 30.0, 0.0, 30.0, d), PULSE, BG, PULSE_POTENTIAL) for d in (0.125, 0.0625)}


@pytest.fixture(scope="session")
def coulomb_history():
    return evolve(GridSpec(0.0, 30.0, 0.0, 30.0, 0.125), InitialData(Q0=1.0), BG)


@pytest.fixture(scope="session")
def zero_history():
    return evolve(GridSpec(0.0, 10.0, 0.0, 10.0, 0.125), InitialData(), BG, PotentialSpec("Quartic", c2=1.0))
