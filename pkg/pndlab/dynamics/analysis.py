"""
Simulation Analysis
===================
Scattered-photon integrals of the unconditioned evolution, power and detuning
sweeps, and statistics of trajectory records (binned joint PND, time-integrated
unheralded g2 and the Schmidt number estimate).
"""
import logging
from multiprocessing import Pool
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel
from scipy.integrate import trapezoid
from scipy.optimize import curve_fit

from pndlab import settings
from pndlab.dynamics.lindblad import DEFAULT_NF, counting_moments, evolve
from pndlab.dynamics.models import CountingMoments, EvolutionResult, PulseParams, ResonatorParams, SweepPoint, TrajectoryRecord
from pndlab.dynamics.pump import solve_pump
from pndlab.errors import DomainError, UndefinedRatioError, UnconvergedTailError
from pndlab.fock import Arm, JointPnd

logger = logging.getLogger(__name__)

TAIL_LIMIT = 1e-4


class G2Report(BaseModel):
    g2: float
    schmidt: Optional[float] = None
    mean: float
    arm: Arm


class PowerLawFit(BaseModel):
    a: float
    a_err: float
    r_squared: float


def mean_scattered(res: ResonatorParams, evolution: EvolutionResult) -> Tuple[float, float]:
    """
    Photons per pulse leaving through the bus waveguide, 2 gamma_e * integral <n> dt.
    Photons still inside the resonator at the end of the window must be negligible.
    """
    out = []
    channels = (
        (evolution.mean_s, res.gamma_es, res.gamma_tot_s),
        (evolution.mean_i, res.gamma_ei, res.gamma_tot_i),
    )
    for mean, gamma_e, gamma_tot in channels:
        # free ring-down of what is left: a fraction gamma_e / gamma_tot exits through the bus
        tail = mean[-1] * gamma_e / gamma_tot
        if tail >= TAIL_LIMIT:
            raise UnconvergedTailError(
                f"{tail:.2e} photons would still leave after the window ends; extend the simulation"
            )
        out.append(float(2.0 * gamma_e * trapezoid(mean, evolution.times)))
    return out[0], out[1]


def simulate_mean(
    res: ResonatorParams,
    pulse: PulseParams,
    nf: int = DEFAULT_NF,
    dt: Optional[float] = None,
    spm_on: bool = True,
    xpm_on: bool = True,
) -> SweepPoint:
    pump = solve_pump(res, pulse, dt=dt, spm_on=spm_on)
    n_s, n_i = mean_scattered(res, evolve(res, pump, nf=nf, xpm_on=xpm_on))
    return SweepPoint(power=pulse.power, mean_s=n_s, mean_i=n_i, detuning=pulse.detuning, shifts_on=spm_on and xpm_on)


def simulate_counting(
    res: ResonatorParams,
    pulse: PulseParams,
    nf: int = DEFAULT_NF,
    dt: Optional[float] = None,
    spm_on: bool = True,
    xpm_on: bool = True,
) -> CountingMoments:
    """Per-pulse photocount moments of both arms; the same end-of-window tail limit as mean_scattered."""
    pump = solve_pump(res, pulse, dt=dt, spm_on=spm_on)
    moments = counting_moments(res, pump, nf=nf, xpm_on=xpm_on)
    for residual, gamma_e, gamma_tot in (
        (moments.residual_s, res.gamma_es, res.gamma_tot_s),
        (moments.residual_i, res.gamma_ei, res.gamma_tot_i),
    ):
        if residual * gamma_e / gamma_tot >= TAIL_LIMIT:
            raise UnconvergedTailError(
                f"{residual * gamma_e / gamma_tot:.2e} photons would still leave after the window ends; extend the simulation"
            )
    return moments


def _sweep_job(args) -> SweepPoint:
    res, pulse, nf, dt, spm_on, xpm_on = args
    return simulate_mean(res, pulse, nf=nf, dt=dt, spm_on=spm_on, xpm_on=xpm_on)


def _run_jobs(jobs: list, workers: Optional[int]) -> List[SweepPoint]:
    workers = settings.WORKERS if workers is None else max(1, workers)
    if workers == 1 or len(jobs) == 1:
        return [_sweep_job(job) for job in jobs]
    with Pool(processes=min(workers, len(jobs))) as pool:
        return pool.map(_sweep_job, jobs)


def power_sweep(
    res: ResonatorParams,
    pulse: PulseParams,
    powers: Sequence[float],
    nf: int = DEFAULT_NF,
    dt: Optional[float] = None,
    shifts_on: bool = True,
    workers: Optional[int] = None,
) -> List[SweepPoint]:
    """Unconditioned photons per pulse at each input power; SPM and XPM switched together."""
    if len(powers) == 0:
        raise DomainError("power sweep needs at least one power")
    jobs = [(res, pulse.at_power(float(p)), nf, dt, shifts_on, shifts_on) for p in powers]
    points = _run_jobs(jobs, workers)
    logger.info(f"Power sweep over {len(points)} powers done (shifts {'on' if shifts_on else 'off'})")
    return points


def scan_detuning(
    res: ResonatorParams,
    pulse: PulseParams,
    detunings: Sequence[float],
    spm_on: bool = True,
    xpm_on: bool = True,
    nf: int = DEFAULT_NF,
    dt: Optional[float] = None,
    workers: Optional[int] = None,
) -> List[SweepPoint]:
    """Photons per pulse for each pump detuning, in input order."""
    if len(detunings) == 0:
        raise DomainError("detuning scan needs at least one detuning")
    jobs = [(res, pulse.model_copy(update={"detuning": float(d)}), nf, dt, spm_on, xpm_on) for d in detunings]
    points = _run_jobs(jobs, workers)
    best = max(points, key=lambda p: p.mean_s)
    logger.info(f"Detuning scan: best {best.detuning:.4g} rad/ps with {best.mean_s:.4g} photons/pulse")
    return points


def _sinh2(power: np.ndarray, a: float) -> np.ndarray:
    return np.sinh(a * power) ** 2


def fit_sinh2(powers: Sequence[float], means: Sequence[float]) -> PowerLawFit:
    """Fit <n>(P) = sinh^2(aP), the shift-free scaling of photons per pulse."""
    p = np.asarray(powers, dtype=float)
    n = np.asarray(means, dtype=float)
    if p.size < 2 or p.shape != n.shape:
        raise DomainError("sinh^2 fit needs at least 2 (power, photons) pairs")
    guess = float(np.mean(np.arcsinh(np.sqrt(np.maximum(n, 0))) / np.where(p > 0, p, np.inf)))
    popt, pcov = curve_fit(_sinh2, p, n, p0=[guess if guess > 0 else 0.1])
    residual = n - _sinh2(p, popt[0])
    total = np.sum((n - n.mean()) ** 2)
    r_squared = 1.0 - np.sum(residual ** 2) / total if total > 0 else 1.0
    return PowerLawFit(a=float(popt[0]), a_err=float(np.sqrt(pcov[0, 0])), r_squared=float(r_squared))


# ============================================================
# TRAJECTORY STATISTICS
# ============================================================

def pnd_from_trajectories(rec: TrajectoryRecord, trunc: int) -> JointPnd:
    """Normalized 2-d histogram of the per-pulse counts; counts beyond trunc are dropped."""
    counts = rec.as_array()
    inside = (counts[:, 0] <= trunc) & (counts[:, 1] <= trunc)
    kept = counts[inside]
    dropped = 1.0 - kept.shape[0] / counts.shape[0]
    if kept.shape[0] == 0:
        raise DomainError(f"every trajectory has more than {trunc} clicks in some arm")
    if dropped > 0:
        logger.warning(f"{dropped:.2%} of trajectories fall outside the {trunc + 1}x{trunc + 1} grid and were dropped")
    grid = np.zeros((trunc + 1, trunc + 1))
    np.add.at(grid, (kept[:, 0], kept[:, 1]), 1.0)
    return JointPnd.normalized(grid)


def g2bar(rec: TrajectoryRecord, arm: Arm = Arm.SIGNAL) -> G2Report:
    """
    Time-integrated unheralded g2 = <n(n-1)> / <n>^2 of one arm's per-pulse counts,
    and the Schmidt number K = 1 / (g2 - 1).
    """
    arm = Arm(arm)
    counts = rec.as_array()[:, 0 if arm == Arm.SIGNAL else 1].astype(float)
    mean = counts.mean()
    if mean <= 0:
        raise UndefinedRatioError(f"no clicks recorded on the {arm.value} arm")
    g2 = float(np.mean(counts * (counts - 1)) / mean ** 2)
    schmidt = 1.0 / (g2 - 1.0) if g2 > 1.0 else None
    return G2Report(g2=g2, schmidt=schmidt, mean=float(mean), arm=arm)


def g2_from_moments(moments: CountingMoments, arm: Arm = Arm.SIGNAL) -> G2Report:
    """g2bar and Schmidt number from exact photocount moments instead of sampled counts."""
    arm = Arm(arm)
    if arm == Arm.SIGNAL:
        mean, factorial = moments.mean_s, moments.factorial_s
    else:
        mean, factorial = moments.mean_i, moments.factorial_i
    if mean <= 0:
        raise UndefinedRatioError(f"no photons reach the {arm.value} arm")
    g2 = factorial / mean ** 2
    schmidt = 1.0 / (g2 - 1.0) if g2 > 1.0 else None
    return G2Report(g2=g2, schmidt=schmidt, mean=mean, arm=arm)
