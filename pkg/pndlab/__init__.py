"""
pndlab
======
Photon-number distribution reconstruction from on/off detection and
simulation of pulsed squeezed-light microresonators.
"""
__version__ = "0.1.0"

from pndlab.em import EmConfig, EmDiagnostics, em_joint, em_single, error_metric, rescale_plane
from pndlab.errors import DomainError, NumericalError, PndLabError
from pndlab.fock import JointPnd, Pnd, SourceModelParams, source_model_pnd
from pndlab.forward import ClickTable, EfficiencyLadder, sample_click_table
from pndlab.metrics import fidelity, fit_source_model, nrf

__all__ = [
    "__version__",
    "ClickTable",
    "DomainError",
    "EfficiencyLadder",
    "EmConfig",
    "EmDiagnostics",
    "JointPnd",
    "NumericalError",
    "Pnd",
    "PndLabError",
    "SourceModelParams",
    "em_joint",
    "em_single",
    "error_metric",
    "fidelity",
    "fit_source_model",
    "nrf",
    "rescale_plane",
    "sample_click_table",
    "source_model_pnd",
]
