"""
Classical Pump
==============
Mean-field intracavity pump under a top-hat drive with optional self-phase
modulation:

    (d/dt + gamma_tot - 2i lambda_bar |a|^2) a = -i sqrt(2 gamma_ep) beta(t) exp(i detuning t)

integrated with fixed-step RK4 over the pulse plus ten pump lifetimes.
"""
import logging
import math
from typing import List, Optional

import numpy as np

from pndlab.dynamics.models import HBAR, PER_S_TO_PER_PS, PulseParams, PumpSeries, ResonatorParams
from pndlab.errors import DomainError, StepSizeError

logger = logging.getLogger(__name__)

MAX_DT_LIFETIMES = 0.02
DEFAULT_DT_LIFETIMES = 0.01
RINGDOWN_LIFETIMES = 10.0


def default_dt(res: ResonatorParams) -> float:
    return DEFAULT_DT_LIFETIMES / res.gamma_tot_p


def simulation_window(res: ResonatorParams, pulse: PulseParams) -> float:
    return pulse.duration + RINGDOWN_LIFETIMES / res.gamma_tot_p


def solve_pump(res: ResonatorParams, pulse: PulseParams, dt: Optional[float] = None, spm_on: bool = True) -> PumpSeries:
    dt = default_dt(res) if dt is None else dt
    limit = MAX_DT_LIFETIMES / res.gamma_tot_p
    if not dt > 0 or dt > limit:
        raise StepSizeError(f"pump step {dt} ps must lie in (0, {limit:.4g}] ps (0.02 pump lifetimes)")

    window = simulation_window(res, pulse)
    # even step count: evolve() takes double steps with grid midpoints
    steps = int(math.ceil(window / dt))
    steps += steps % 2
    h = window / steps
    times = np.linspace(0.0, window, steps + 1)

    gamma = res.gamma_tot_p
    drive = -1j * math.sqrt(2.0 * res.pump_coupling) * math.sqrt(pulse.drive_flux)
    spm = 2j * res.lambda_bar_ps if spm_on else 0.0
    detuning = pulse.detuning
    duration = pulse.duration

    def rhs(t: float, a: complex) -> complex:
        forcing = drive * complex(math.cos(detuning * t), math.sin(detuning * t)) if t < duration else 0.0
        return (-gamma + spm * (a.real ** 2 + a.imag ** 2)) * a + forcing

    amplitude = np.zeros(steps + 1, dtype=complex)
    if pulse.power > 0:
        a = 0j
        for k in range(steps):
            t = times[k]
            k1 = rhs(t, a)
            k2 = rhs(t + h / 2, a + h / 2 * k1)
            k3 = rhs(t + h / 2, a + h / 2 * k2)
            k4 = rhs(t + h, a + h * k3)
            a = a + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            amplitude[k + 1] = a

    logger.debug(
        f"Pump solved: {steps} steps of {h:.3f} ps, peak |a_p|^2={np.max(np.abs(amplitude)) ** 2:.4g} (spm={spm_on})"
    )
    return PumpSeries(times=times, amplitude=amplitude)


def steady_state_intensity(res: ResonatorParams, pulse: PulseParams, spm_on: bool = True) -> List[float]:
    """
    Real non-negative roots I of I [gamma^2 + (detuning - 2 lambda_bar I)^2] = 2 gamma_ep beta^2,
    ascending. Up to three roots in the bistable region.
    """
    gamma = res.gamma_tot_p
    source = 2.0 * res.pump_coupling * pulse.drive_flux
    detuning = pulse.detuning
    if source == 0:
        return [0.0]
    if not spm_on or res.lambda_bar_ps == 0:
        return [source / (gamma ** 2 + detuning ** 2)]
    lam = res.lambda_bar_ps
    roots = np.roots([4 * lam ** 2, -4 * detuning * lam, gamma ** 2 + detuning ** 2, -source])
    real = sorted(float(r.real) for r in roots if abs(r.imag) <= 1e-9 * max(1.0, abs(r.real)) and r.real >= 0)
    return real


def lambda_bar_from_classical(lambda_cl: float, pump_freq: float, tau_rt: float) -> float:
    """hbar omega_p Lambda / tau_rt in 1/s, with omega_p in rad/ps and tau_rt in ps."""
    if lambda_cl < 0 or pump_freq <= 0 or tau_rt <= 0:
        raise DomainError("classical coefficient must be >= 0, pump frequency and round trip > 0")
    return HBAR * (pump_freq / PER_S_TO_PER_PS) * lambda_cl / (tau_rt * PER_S_TO_PER_PS)


def check_lambda_consistency(res: ResonatorParams, pulse: PulseParams, rel_tol: float = 0.05) -> float:
    """Relative mismatch between lambda_bar and its classical counterpart; warns above rel_tol."""
    derived = lambda_bar_from_classical(res.lambda_cl, pulse.pump_freq, res.tau_rt)
    if res.lambda_bar == 0:
        return 0.0 if derived == 0 else math.inf
    mismatch = abs(derived - res.lambda_bar) / res.lambda_bar
    if mismatch > rel_tol:
        logger.warning(
            f"lambda_bar={res.lambda_bar:.4g}/s disagrees with the classical coefficient "
            f"(implies {derived:.4g}/s, {mismatch:.1%} apart)"
        )
    return mismatch
