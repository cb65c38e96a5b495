"""
Run configuration
=================
Pydantic blocks describing every pipeline command. The CLI builds them from
flags or a JSON file, the API receives them as request bodies; both go through
the same validation.
"""
from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, model_validator

from pndlab import settings
from pndlab.dynamics.models import PulseParams, ResonatorParams
from pndlab.em import EmConfig
from pndlab.errors import ConfigError
from pndlab.fock import (
    JointPnd,
    SourceModelParams,
    coherent_pair_pnd,
    coherent_pnd,
    fock_pnd,
    product_pnd,
    source_model_pnd,
    thermal_pnd,
)
from pndlab.forward import ClickRow, EfficiencyLadder, eta_from_loss_db
from pndlab.metrics import FitBounds, GridConfig

SETUP_LOSS_DB = 3.5
DEFAULT_TRIALS = 12_500_000
# r = aP and n_th = bP per arm; gives a V_diff vs n_tot slope near 0.42 over 1-2.5 mW
DEFAULT_SCALING = SourceModelParams(a=0.213, b_s=0.088, b_i=0.082)


class SourceKind(str, Enum):
    MODEL = "model"                  # TMS + thermal backgrounds at (r, n_th_s, n_th_i)
    SCALED = "scaled"                # same model at r = aP, n_th = bP
    COHERENT_PAIR = "coherent_pair"  # coherent pulse split on a 50/50 beamsplitter
    THERMAL = "thermal"              # single-mode thermal on the signal arm, idler vacuum
    COHERENT = "coherent"            # single-mode coherent on the signal arm, idler vacuum
    VACUUM = "vacuum"


class Plane(str, Enum):
    RESONATOR = "resonator"
    CHIP = "chip"
    DETECTOR = "detector"


class ReconstructMode(str, Enum):
    JOINT = "joint"
    SIGNAL = "signal"
    IDLER = "idler"


class SweepMode(str, Enum):
    MODEL = "model"
    DYNAMICS = "dynamics"


# ============================================================
# BLOCKS
# ============================================================

class LadderConfig(BaseModel):
    """Either explicit etas or eta_exp (or loss_db) times a VOA ladder."""

    etas: Optional[List[float]] = None
    eta_exp: Optional[float] = Field(None, gt=0, le=1)
    loss_db: Optional[float] = Field(None, ge=0)
    voa_min: float = Field(0.05, gt=0, le=1)
    voa_max: float = Field(0.95, gt=0, le=1)
    steps: int = Field(50, ge=2)
    spacing: str = Field("linear", pattern="^(linear|db)$")

    @model_validator(mode="after")
    def _one_loss_source(self) -> "LadderConfig":
        if self.eta_exp is not None and self.loss_db is not None:
            raise ValueError("give either eta_exp or loss_db, not both")
        if self.voa_min > self.voa_max:
            raise ValueError("voa_min must not exceed voa_max")
        return self

    @property
    def experiment_eta(self) -> float:
        if self.eta_exp is not None:
            return self.eta_exp
        return eta_from_loss_db(SETUP_LOSS_DB if self.loss_db is None else self.loss_db)

    def build(self) -> EfficiencyLadder:
        if self.etas is not None:
            return EfficiencyLadder(etas=self.etas)
        factory = EfficiencyLadder.voa_linear if self.spacing == "linear" else EfficiencyLadder.voa_db
        return factory(self.experiment_eta, self.voa_min, self.voa_max, self.steps)


class SourceConfig(BaseModel):
    kind: SourceKind = SourceKind.MODEL
    r: float = Field(0.63, ge=0)
    n_th_s: float = Field(0.11, ge=0)
    n_th_i: float = Field(0.10, ge=0)
    mean: float = Field(1.2, ge=0, description="mean photon number for coherent/thermal sources")
    power: Optional[float] = Field(None, ge=0, description="pump power in mW for the scaled model")
    scaling: SourceModelParams = DEFAULT_SCALING

    def build(self, trunc: int) -> JointPnd:
        vacuum = fock_pnd(0, trunc)
        if self.kind == SourceKind.MODEL:
            return source_model_pnd(self.r, self.n_th_s, self.n_th_i, trunc)
        if self.kind == SourceKind.SCALED:
            if self.power is None:
                raise ConfigError("the scaled source model needs a pump power")
            return self.scaling.at_power(self.power).joint_pnd(trunc)
        if self.kind == SourceKind.COHERENT_PAIR:
            return coherent_pair_pnd(self.mean, trunc)
        if self.kind == SourceKind.THERMAL:
            return product_pnd(thermal_pnd(self.mean, trunc), vacuum)
        if self.kind == SourceKind.COHERENT:
            return product_pnd(coherent_pnd(self.mean, trunc), vacuum)
        return product_pnd(vacuum, vacuum)


class PlaneConfig(BaseModel):
    plane: Plane = Plane.RESONATOR
    eta_chip: float = Field(0.8, gt=0, le=1, description="chip-to-fiber coupling")
    eta_exp: Optional[float] = Field(None, gt=0, le=1, description="resonator-to-detector transmission")

    def segment(self) -> float:
        """Transmission between the table's own plane and the requested one."""
        if self.plane == Plane.RESONATOR:
            return 1.0
        if self.plane == Plane.CHIP:
            return self.eta_chip
        if self.eta_exp is None:
            raise ConfigError("detector-plane reconstruction needs eta_exp")
        return self.eta_exp


# ============================================================
# COMMANDS
# ============================================================

class SynthConfig(BaseModel):
    source: SourceConfig = SourceConfig()
    ladder: LadderConfig = LadderConfig()
    trials: int = Field(DEFAULT_TRIALS, gt=0)
    trunc: int = Field(12, ge=1)
    seed: Optional[int] = Field(None, ge=0)
    exact: bool = False


class ReconstructConfig(BaseModel):
    em: EmConfig = EmConfig()
    plane: PlaneConfig = PlaneConfig()
    mode: ReconstructMode = ReconstructMode.JOINT


class FitConfig(BaseModel):
    bounds: FitBounds = FitBounds()
    grid: GridConfig = GridConfig()


class SimulateConfig(BaseModel):
    resonator: ResonatorParams = ResonatorParams()
    pulse: PulseParams = PulseParams()
    n_traj: int = Field(3000, ge=1)
    nf: int = Field(12, ge=1)
    hist_trunc: int = Field(9, ge=1)
    seed: Optional[int] = Field(None, ge=0)
    dt: Optional[float] = Field(None, gt=0)
    spm_on: bool = True
    xpm_on: bool = True
    unconditioned: bool = True


class SweepConfig(BaseModel):
    powers: List[float] = Field(default_factory=lambda: [1.0, 1.5, 2.0, 2.5], min_length=2)
    mode: SweepMode = SweepMode.MODEL
    scaling: SourceModelParams = DEFAULT_SCALING
    ladder: LadderConfig = LadderConfig()
    trials: int = Field(DEFAULT_TRIALS, gt=0)
    synth_trunc: int = Field(12, ge=1)
    exact: bool = False
    seed: Optional[int] = Field(None, ge=0)
    reconstruct: ReconstructConfig = ReconstructConfig()
    fit: FitConfig = FitConfig()
    coherent_control: bool = True
    simulate: SimulateConfig = SimulateConfig()
    loss_delta_db: Optional[float] = Field(0.5, gt=0, description="transmission miscalibration for the NRF slope spread, dB")

    @model_validator(mode="after")
    def _positive_powers(self) -> "SweepConfig":
        if any(p < 0 for p in self.powers):
            raise ValueError("pump powers must be non-negative")
        return self


class Provenance(BaseModel):
    command: str
    version: str
    seed: Optional[int] = None
    entropy_seed: bool = False
    config: Dict[str, Any] = Field(default_factory=dict)
    started_at: str
    wall_time_s: float = 0.0
    outputs: List[str] = Field(default_factory=list)


# ============================================================
# API PAYLOADS
# ============================================================

class PndPayload(BaseModel):
    """Distribution as n,k,prob records (k omitted for a single mode)."""

    records: List[Dict[str, float]] = Field(..., min_length=1)


class ReconstructRequest(BaseModel):
    rows: List[ClickRow] = Field(..., min_length=1)
    config: ReconstructConfig = ReconstructConfig()


class FitRequest(BaseModel):
    pnd: PndPayload
    config: FitConfig = FitConfig()


class SimulateRequest(SimulateConfig):
    """SimulateConfig with the API's size limits; the CLI has none."""

    @model_validator(mode="after")
    def _within_api_limits(self) -> "SimulateRequest":
        if self.n_traj > settings.API_MAX_TRAJ:
            raise ValueError(f"n_traj={self.n_traj} exceeds the API limit of {settings.API_MAX_TRAJ}; use the CLI")
        if self.nf > settings.API_MAX_NF:
            raise ValueError(f"nf={self.nf} exceeds the API limit of {settings.API_MAX_NF}; use the CLI")
        return self
