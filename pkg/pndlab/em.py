"""
EM Reconstruction
=================
Expectation-Maximization inversion of the positive linear models built in
pndlab.forward: single-mode off-probabilities and bipartite coincidence
frequencies. Every iterate is renormalized; convergence is judged on the
relative change of the mean absolute residual, averaged over a window of
iterations.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from pndlab import settings
from pndlab.errors import DomainError, NumericalGuardError, ShapeMismatchError
from pndlab.fock import JointPnd, Pnd
from pndlab.forward import ClickTable, b_matrix_joint, b_matrix_single

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-300
RELIABLE_WINDOW = 6
OUTSIDE_WINDOW_WARN = 1e-2


class EmConfig(BaseModel):
    trunc: int = Field(9, ge=1, description="photons per mode; Hilbert dimension trunc + 1")
    rel_tol: float = Field(1e-7, gt=0, description="mean relative change of epsilon per iteration over the window")
    window: int = Field(50, ge=1, description="iterations the stop test looks back over")
    max_iters: int = Field(200_000, ge=1)
    plane_scale: float = Field(1.0, gt=0, description="multiplier applied to every transmission")


class EmDiagnostics(BaseModel):
    iterations: int
    epsilon_history: List[float] = Field(..., min_length=1)
    final_epsilon: float
    converged: bool
    non_monotone_steps: int = 0
    outside_window_mass: Optional[float] = None
    config: EmConfig


def error_metric(frequencies: Sequence[float], model_probs: Sequence[float]) -> float:
    """Mean absolute distance between measured frequencies and model probabilities."""
    f = np.asarray(frequencies, dtype=float)
    p = np.asarray(model_probs, dtype=float)
    if f.shape != p.shape or f.ndim != 1 or f.size == 0:
        raise ShapeMismatchError(f"frequency and model vectors differ: {f.shape} vs {p.shape}")
    return float(np.mean(np.abs(f - p)))


def rescale_plane(config: EmConfig, extra_transmission: float, etas: Optional[Sequence[float]] = None) -> EmConfig:
    """
    Move the reconstruction plane downstream past a segment of transmission eta_seg.
    With etas given, the effective ladder is checked right away.
    """
    if not 0.0 < extra_transmission <= 1.0:
        raise DomainError(f"segment transmission must lie in (0, 1], got {extra_transmission}")
    rescaled = config.model_copy(update={"plane_scale": config.plane_scale / extra_transmission})
    if etas is not None:
        effective_etas(etas, rescaled)
    return rescaled


def effective_etas(etas: Sequence[float], config: EmConfig) -> np.ndarray:
    scaled = np.asarray(etas, dtype=float) * config.plane_scale
    if np.any(scaled <= 0) or np.any(scaled > 1.0 + 1e-12):
        raise DomainError(
            f"effective transmission {scaled.max():.6g} exceeds 1 at plane_scale={config.plane_scale:.6g}: "
            "cannot reconstruct upstream of more loss than exists"
        )
    return np.minimum(scaled, 1.0)


# ============================================================
# CORE ITERATION
# ============================================================

def em_step(system: np.ndarray, data: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """One multiplicative EM update followed by renormalization."""
    model = system @ rho
    starved = (model < PROB_FLOOR) & (data > 0)
    if np.any(starved):
        raise NumericalGuardError(
            f"model probability vanished for {int(starved.sum())} data rows with nonzero frequency"
        )
    col_sums = system.sum(axis=0)
    visible = col_sums > 0
    update = system.T @ (data / np.maximum(model, PROB_FLOOR))
    new = np.zeros_like(rho)
    new[visible] = rho[visible] * update[visible] / col_sums[visible]
    total = new.sum()
    if total <= 0:
        raise NumericalGuardError("EM iterate lost all probability mass")
    return new / total


def _run_em(system: np.ndarray, data: np.ndarray, config: EmConfig, label: str) -> Tuple[np.ndarray, EmDiagnostics]:
    visible = system.sum(axis=0) > 0
    if not np.all(visible):
        logger.warning(f"{label}: {int((~visible).sum())} photon-number bins are invisible to every setting, pinned at 0")
    # uniform ansatz, strictly positive on every bin the data can see
    rho = visible.astype(float) / visible.sum()

    eps = error_metric(data, system @ rho)
    history = [eps]
    converged = False
    non_monotone = 0
    iterations = 0
    for iterations in range(1, config.max_iters + 1):
        rho = em_step(system, data, rho)
        new_eps = error_metric(data, system @ rho)
        history.append(new_eps)
        if new_eps > eps:
            non_monotone += 1
        if new_eps == 0.0:
            converged = True
            break
        # single steps can stall while the estimate is still moving
        if iterations >= config.window:
            drift = abs(history[-1 - config.window] - new_eps) / (config.window * new_eps)
            if drift < config.rel_tol:
                converged = True
                break
        eps = new_eps
        if iterations % settings.EM_LOG_EVERY == 0:
            logger.debug(f"{label}: iteration {iterations}, epsilon={new_eps:.4e}")

    diag = EmDiagnostics(
        iterations=iterations,
        epsilon_history=history,
        final_epsilon=history[-1],
        converged=converged,
        non_monotone_steps=non_monotone,
        config=config,
    )
    if converged:
        logger.info(f"✅ {label} converged in {iterations} iterations (epsilon={history[-1]:.3e})")
    else:
        logger.warning(f"{label} stopped at max_iters={config.max_iters} without converging (epsilon={history[-1]:.3e})")
    return rho, diag


# ============================================================
# PUBLIC RECONSTRUCTIONS
# ============================================================

def em_single(off_frequencies: Sequence[Tuple[float, float]], config: EmConfig) -> Tuple[Pnd, EmDiagnostics]:
    """Reconstruct a single-mode PND from (eta, f0) pairs."""
    pairs = np.asarray(off_frequencies, dtype=float)
    if pairs.ndim != 2 or pairs.shape[1] != 2 or pairs.shape[0] < 1:
        raise DomainError("off-frequencies must be a list of (eta, f0) pairs")
    f0 = pairs[:, 1]
    if np.any((f0 < 0) | (f0 > 1)):
        raise DomainError("off-frequencies must lie in [0, 1]")
    etas = effective_etas(pairs[:, 0], config)
    rho, diag = _run_em(b_matrix_single(etas, config.trunc), f0, config, "Single-mode EM")
    return Pnd.normalized(rho), diag


def em_joint(table: ClickTable, config: EmConfig) -> Tuple[JointPnd, EmDiagnostics]:
    """Reconstruct the bipartite PND from the 3M coincidence frequencies of a click table."""
    etas = effective_etas(table.etas, config)
    system = b_matrix_joint(etas, config.trunc)
    rho, diag = _run_em(system, table.data_vector(), config, "Joint EM")
    pnd = JointPnd.from_vector(rho, config.trunc)

    if config.trunc >= RELIABLE_WINDOW:
        inside = pnd.probs[:RELIABLE_WINDOW, :RELIABLE_WINDOW].sum()
        diag.outside_window_mass = float(1.0 - inside)
        if diag.outside_window_mass > OUTSIDE_WINDOW_WARN:
            logger.warning(
                f"{diag.outside_window_mass:.3f} of the reconstructed probability lies outside the "
                f"{RELIABLE_WINDOW}x{RELIABLE_WINDOW} window where on/off data is reliable"
            )
    return pnd, diag


def _joint_job(args: Tuple[ClickTable, EmConfig]) -> Tuple[JointPnd, EmDiagnostics]:
    table, config = args
    return em_joint(table, config)


def reconstruct_at_planes(
    table: ClickTable,
    config: EmConfig,
    segments: Dict[str, float],
    workers: Optional[int] = None,
) -> Dict[str, Tuple[JointPnd, EmDiagnostics]]:
    """
    Reconstruct the same table at several reference planes.
    segments maps a plane name to the transmission between the table's
    reference plane and that plane (1.0 for the table's own plane).
    """
    configs = {name: rescale_plane(config, seg, table.etas) for name, seg in segments.items()}
    workers = settings.WORKERS if workers is None else workers
    names = list(configs)
    jobs = [(table, configs[name]) for name in names]
    if workers <= 1 or len(jobs) <= 1:
        results = [_joint_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_joint_job, jobs))
    return dict(zip(names, results))
