import numpy as np
import pytest

from pndlab.dynamics.models import PulseParams, ResonatorParams
from pndlab.forward import EfficiencyLadder, eta_from_loss_db
from pndlab.fock import SourceModelParams

SETUP_LOSS_DB = 3.5


@pytest.fixture
def setup_ladder() -> EfficiencyLadder:
    """50 linear VOA steps behind 3.5 dB of fixed loss."""
    return EfficiencyLadder.voa_linear(eta_from_loss_db(SETUP_LOSS_DB))


@pytest.fixture
def open_ladder() -> EfficiencyLadder:
    """Well-conditioned ladder reaching high transmission, for oracle checks."""
    return EfficiencyLadder(etas=list(np.linspace(0.1, 0.95, 30)))


@pytest.fixture
def source_params() -> SourceModelParams:
    return SourceModelParams(r=0.63, n_th_s=0.11, n_th_i=0.10)


@pytest.fixture
def resonator() -> ResonatorParams:
    return ResonatorParams()


@pytest.fixture
def weak_pulse() -> PulseParams:
    """Low enough power that a 5-level Fock space per mode is plenty."""
    return PulseParams(power=0.1)
