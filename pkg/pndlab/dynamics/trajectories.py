"""
Photodetection Trajectories
===========================
Unravelling of the two-mode master equation under continuous photodetection
of the bus-waveguide output. Each trajectory evolves the conditioned density
matrix with the no-jump generator and, step by step, samples a click in each
monitored channel with probability 2 eta_e gamma_tot <n> dt. A click applies
rho -> a rho a^dag / Tr and increments that channel's count.

Trajectory j draws from SeedSequence(seed).spawn(n)[j], so the record does
not depend on how trajectories are scheduled over worker processes.
"""
import logging
import math
import time
from multiprocessing import Pool
from typing import List, Optional, Tuple

import numpy as np
from numpy.random import SeedSequence, default_rng

from pndlab import settings
from pndlab.dynamics.lindblad import DEFAULT_NF, TwoModeGenerator, check_truncation
from pndlab.dynamics.models import PulseParams, PumpSeries, ResonatorParams, TrajectoryRecord
from pndlab.dynamics.pump import solve_pump
from pndlab.errors import DomainError, NumericalGuardError

logger = logging.getLogger(__name__)

MAX_JUMP_PROBABILITY = 0.05

_worker_generator: Optional[TwoModeGenerator] = None
_worker_rates: Tuple[float, float] = (0.0, 0.0)


def _init_worker(res: ResonatorParams, pump: PumpSeries, nf: int, xpm_on: bool) -> None:
    global _worker_generator, _worker_rates
    _worker_generator = TwoModeGenerator(res, pump, nf=nf, xpm_on=xpm_on, monitored=True)
    _worker_rates = (2.0 * res.gamma_es, 2.0 * res.gamma_ei)


def run_trajectory(
    generator: TwoModeGenerator,
    rates: Tuple[float, float],
    seed_seq: SeedSequence,
) -> Tuple[int, int]:
    """Clicks registered on the signal and idler outputs during one pulse."""
    rng = default_rng(seed_seq)
    ops = generator.ops
    jump_ops = (ops.a_s, ops.a_i)
    times = generator.pump.times[::2]
    rho = ops.vacuum()
    clicks = [0, 0]

    for k in range(1, times.size):
        t0, t1 = times[k - 1], times[k]
        means = ops.mean_numbers(rho)
        total = (rates[0] * means[0] + rates[1] * means[1]) * (t1 - t0)
        substeps = max(1, int(math.ceil(total / MAX_JUMP_PROBABILITY)))
        h = (t1 - t0) / substeps
        for j in range(substeps):
            t = t0 + j * h
            rho = generator.step(t, rho, h)
            norm = float(np.real(np.trace(rho)))
            if not norm > 0:
                raise NumericalGuardError(f"conditioned state lost its norm at t={t:.1f} ps")
            rho = rho / norm
            rho = 0.5 * (rho + rho.conj().T)
            means = ops.mean_numbers(rho)
            draws = rng.random(2)
            for channel in (0, 1):
                if draws[channel] < rates[channel] * means[channel] * h:
                    a = jump_ops[channel]
                    jumped = (a @ (a @ rho).T).T
                    weight = float(np.real(np.trace(jumped)))
                    if weight <= 0:
                        continue
                    rho = jumped / weight
                    clicks[channel] += 1
                    means = ops.mean_numbers(rho)
        check_truncation(ops, rho, t1)
    return clicks[0], clicks[1]


def _worker_job(seed_seq: SeedSequence) -> Tuple[int, int]:
    return run_trajectory(_worker_generator, _worker_rates, seed_seq)


def simulate_trajectories(
    res: ResonatorParams,
    pulse: PulseParams,
    n_traj: int,
    nf: int = DEFAULT_NF,
    seed: int = 0,
    dt: Optional[float] = None,
    spm_on: bool = True,
    xpm_on: bool = True,
    workers: Optional[int] = None,
) -> TrajectoryRecord:
    if n_traj < 1:
        raise DomainError("need at least one trajectory")
    workers = settings.WORKERS if workers is None else max(1, workers)
    started = time.perf_counter()
    pump = solve_pump(res, pulse, dt=dt, spm_on=spm_on)
    children = SeedSequence(seed).spawn(n_traj)

    if workers == 1 or n_traj == 1:
        generator = TwoModeGenerator(res, pump, nf=nf, xpm_on=xpm_on, monitored=True)
        rates = (2.0 * res.gamma_es, 2.0 * res.gamma_ei)
        counts: List[Tuple[int, int]] = [run_trajectory(generator, rates, child) for child in children]
    else:
        with Pool(processes=min(workers, n_traj), initializer=_init_worker, initargs=(res, pump, nf, xpm_on)) as pool:
            counts = pool.map(_worker_job, children)

    record = TrajectoryRecord(counts=[(int(s), int(i)) for s, i in counts], seed=seed, nf=nf, power=pulse.power)
    arr = record.as_array()
    logger.info(
        f"🎲 {n_traj} trajectories at {pulse.power:g} mW in {time.perf_counter() - started:.1f}s: "
        f"<n_s>={arr[:, 0].mean():.4g}, <n_i>={arr[:, 1].mean():.4g}"
    )
    return record
