"""
Dynamics Models
===============
Parameter and result types of the pulsed-source simulation.

Units: times in ps, rates in 1/ps, angular frequencies in rad/ps, powers in
mW. The SFWM strength lambda_bar is given in 1/s as it is usually quoted and
converted at use.
"""
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator
from scipy.constants import c as SPEED_OF_LIGHT
from scipy.constants import hbar as HBAR

PER_S_TO_PER_PS = 1e-12
PUMP_WAVELENGTH_NM = 1544.5


def angular_frequency(wavelength_nm: float) -> float:
    """rad/ps of light at the given vacuum wavelength."""
    return 2.0 * math.pi * SPEED_OF_LIGHT / (wavelength_nm * 1e-9) * PER_S_TO_PER_PS


class ResonatorParams(BaseModel):
    """Microresonator parameters; defaults reproduce the simulated device."""

    gamma_tot_p: float = Field(1.84e-3, gt=0, description="pump total decay rate, 1/ps")
    gamma_tot_s: float = Field(2.25e-3, gt=0, description="signal total decay rate, 1/ps")
    gamma_tot_i: float = Field(2.25e-3, gt=0, description="idler total decay rate, 1/ps")
    eta_es: float = Field(0.926, gt=0, le=1)
    eta_ei: float = Field(0.926, gt=0, le=1)
    eta_ep: float = Field(0.926, gt=0, le=1, description="pump escape efficiency, used when gamma_ep is unset")
    gamma_ep: Optional[float] = Field(None, gt=0, description="pump coupling rate, 1/ps")
    tau_rt: float = Field(5.0, gt=0, description="round-trip time, ps")
    n_g: float = Field(2.09, gt=0, description="group index")
    lambda_bar: float = Field(1.72, ge=0, description="SFWM/XPM strength, 1/s")
    lambda_cl: float = Field(6.72e7, ge=0, description="classical SPM coefficient, 1/J")

    @property
    def pump_coupling(self) -> float:
        return self.gamma_ep if self.gamma_ep is not None else self.eta_ep * self.gamma_tot_p

    @property
    def lambda_bar_ps(self) -> float:
        return self.lambda_bar * PER_S_TO_PER_PS

    @property
    def gamma_es(self) -> float:
        return self.eta_es * self.gamma_tot_s

    @property
    def gamma_ei(self) -> float:
        return self.eta_ei * self.gamma_tot_i


class PulseParams(BaseModel):
    """Top-hat pump pulse train."""

    power: float = Field(1.0, ge=0, description="average input power, mW")
    rep_rate: float = Field(2.5e6, gt=0, description="repetition rate, 1/s")
    duration: float = Field(300.0, gt=0, description="pulse duration, ps")
    detuning: float = Field(0.0, description="pump detuning, rad/ps")
    pump_freq: float = Field(angular_frequency(PUMP_WAVELENGTH_NM), gt=0, description="rad/ps")
    coupling_loss_db: float = Field(1.0, ge=0, description="input facet loss, dB")

    @property
    def on_chip_power_w(self) -> float:
        return self.power * 1e-3 * 10.0 ** (-self.coupling_loss_db / 10.0)

    @property
    def photons_per_pulse(self) -> float:
        photon_energy = HBAR * self.pump_freq / PER_S_TO_PER_PS
        return self.on_chip_power_w / (self.rep_rate * photon_energy)

    @property
    def drive_flux(self) -> float:
        """beta^2: peak photon flux of the top hat, photons/ps."""
        return self.photons_per_pulse / self.duration

    def at_power(self, power: float) -> "PulseParams":
        return self.model_copy(update={"power": power})


@dataclass(frozen=True)
class PumpSeries:
    """Intracavity pump amplitude <a_p>(t) on a uniform grid."""

    times: np.ndarray
    amplitude: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.amplitude) ** 2

    def at(self, t: float) -> complex:
        """Linear interpolation; exact on grid points."""
        re = np.interp(t, self.times, self.amplitude.real)
        im = np.interp(t, self.times, self.amplitude.imag)
        return complex(re, im)


@dataclass
class EvolutionResult:
    """Observables of the unconditioned two-mode state along the evolution."""

    times: np.ndarray
    mean_s: np.ndarray
    mean_i: np.ndarray
    trace: np.ndarray
    nf: int
    final_diagonal: Optional[np.ndarray] = None
    max_top_population: float = 0.0


class TrajectoryRecord(BaseModel):
    """Per-pulse photodetection counts, one (signal, idler) pair per trajectory."""

    counts: List[Tuple[int, int]] = Field(..., min_length=1)
    seed: int
    nf: int = Field(..., ge=1)
    power: Optional[float] = None

    @field_validator("counts")
    @classmethod
    def _non_negative(cls, v: List[Tuple[int, int]]) -> List[Tuple[int, int]]:
        if any(s < 0 or i < 0 for s, i in v):
            raise ValueError("click counts must be non-negative")
        return v

    def as_array(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=int).reshape(-1, 2)


class SweepPoint(BaseModel):
    power: float
    mean_s: float
    mean_i: float
    detuning: float = 0.0
    shifts_on: bool = True


@dataclass
class CountingMoments:
    """
    Photocount moments of one pulse on the bus waveguide, integrated over the
    window. residual_s and residual_i are the mean photons still inside the
    resonator when the window ends.
    """

    mean_s: float
    mean_i: float
    factorial_s: float
    factorial_i: float
    cross: float
    residual_s: float
    residual_i: float
    nf: int
