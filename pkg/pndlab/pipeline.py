"""
Pipeline stages
===============
synth -> reconstruct -> fit/metrics, the trajectory simulation and the power
sweeps. Every stage is a pure function of its config (plus an explicit seed);
the CLI writes the results to disk, the API returns them as JSON.
"""
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from numpy.random import SeedSequence

from pndlab import __version__, settings
from pndlab.dynamics.analysis import G2Report, g2_from_moments, g2bar, pnd_from_trajectories, simulate_counting
from pndlab.dynamics.models import CountingMoments, TrajectoryRecord
from pndlab.dynamics.pump import check_lambda_consistency
from pndlab.dynamics.trajectories import simulate_trajectories
from pndlab.em import EmDiagnostics, em_joint, em_single, rescale_plane
from pndlab.errors import ConfigError, UndefinedRatioError
from pndlab.fock import AnyPnd, Arm, JointPnd, coherent_pair_pnd
from pndlab.forward import ClickTable, exact_click_table, off_frequencies, sample_click_table
from pndlab.metrics import (
    MetricsReport,
    fit_source_model,
    linear_fit,
    loss_spread,
    metrics_report,
    model_nrf,
    moments,
    nrf,
    squeezing_db,
)
from pndlab.models import (
    FitConfig,
    Provenance,
    ReconstructConfig,
    ReconstructMode,
    SimulateConfig,
    SweepConfig,
    SweepMode,
    SynthConfig,
)

logger = logging.getLogger(__name__)


def resolve_seed(seed: Optional[int]) -> Tuple[int, bool]:
    """The given seed, or fresh OS entropy flagged so it can be echoed to provenance."""
    if seed is not None:
        return int(seed), False
    return int(SeedSequence().entropy), True


def child_seeds(seed: int, count: int) -> List[int]:
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in SeedSequence(seed).spawn(count)]


def provenance(command: str, config, seed: Optional[int] = None, entropy: bool = False) -> Provenance:
    return Provenance(
        command=command,
        version=__version__,
        seed=seed,
        entropy_seed=entropy,
        config=config.model_dump(mode="json") if hasattr(config, "model_dump") else dict(config or {}),
        started_at=datetime.now(timezone.utc).isoformat(),
    )


# ============================================================
# SYNTH / RECONSTRUCT / FIT
# ============================================================

@dataclass
class SynthResult:
    table: ClickTable
    truth: JointPnd
    provenance: Provenance


def synth(config: SynthConfig) -> SynthResult:
    seed, entropy = resolve_seed(config.seed)
    truth = config.source.build(config.trunc)
    ladder = config.ladder.build()
    if config.exact:
        table = exact_click_table(truth, ladder, config.trials)
    else:
        table = sample_click_table(truth, ladder, config.trials, seed)
    logger.info(f"Synthesized {len(table.rows)} settings x {config.trials} trials from a {config.source.kind.value} source")
    return SynthResult(table=table, truth=truth, provenance=provenance("synth", config, seed, entropy))


@dataclass
class ReconstructResult:
    pnd: AnyPnd
    diagnostics: EmDiagnostics
    segment: float


def reconstruct(table: ClickTable, config: ReconstructConfig) -> ReconstructResult:
    segment = config.plane.segment()
    em_config = rescale_plane(config.em, segment, table.etas)
    if config.mode == ReconstructMode.JOINT:
        pnd, diag = em_joint(table, em_config)
    else:
        pnd, diag = em_single(off_frequencies(table, Arm(config.mode.value)), em_config)
    return ReconstructResult(pnd=pnd, diagnostics=diag, segment=segment)


def _require_joint(p: AnyPnd) -> JointPnd:
    if not isinstance(p, JointPnd):
        raise ConfigError("this command needs a joint (n,k,prob) distribution")
    return p


def fit(p: AnyPnd, config: FitConfig) -> MetricsReport:
    joint = _require_joint(p)
    result = fit_source_model(joint, config.bounds, config.grid)
    return metrics_report(joint, result)


def metrics(p: AnyPnd) -> MetricsReport:
    return metrics_report(_require_joint(p))


# ============================================================
# SIMULATION
# ============================================================

@dataclass
class SimulateResult:
    record: TrajectoryRecord
    pnd: JointPnd
    scattered: Optional[Tuple[float, float]]
    g2: Dict[str, Optional[G2Report]]
    provenance: Provenance
    g2_exact: Optional[Dict[str, Optional[G2Report]]] = None

    def summary(self) -> Dict[str, Any]:
        counts = self.record.as_array()
        return {
            "n_traj": int(counts.shape[0]),
            "mean_clicks_s": float(counts[:, 0].mean()),
            "mean_clicks_i": float(counts[:, 1].mean()),
            "scattered_s": None if self.scattered is None else self.scattered[0],
            "scattered_i": None if self.scattered is None else self.scattered[1],
            "g2": {arm: (None if rep is None else rep.model_dump(mode="json")) for arm, rep in self.g2.items()},
            "g2_exact": None if self.g2_exact is None else {
                arm: (None if rep is None else rep.model_dump(mode="json")) for arm, rep in self.g2_exact.items()
            },
        }


def _safe_g2(record: TrajectoryRecord, arm: Arm) -> Optional[G2Report]:
    try:
        return g2bar(record, arm)
    except UndefinedRatioError:
        return None


def _safe_exact_g2(counted: CountingMoments, arm: Arm) -> Optional[G2Report]:
    try:
        return g2_from_moments(counted, arm)
    except UndefinedRatioError:
        return None


def simulate(config: SimulateConfig, workers: Optional[int] = None) -> SimulateResult:
    seed, entropy = resolve_seed(config.seed)
    res, pulse = config.resonator, config.pulse
    check_lambda_consistency(res, pulse)

    scattered = None
    g2_exact = None
    if config.unconditioned:
        counted = simulate_counting(res, pulse, nf=config.nf, dt=config.dt, spm_on=config.spm_on, xpm_on=config.xpm_on)
        scattered = (counted.mean_s, counted.mean_i)
        g2_exact = {arm.value: _safe_exact_g2(counted, arm) for arm in (Arm.SIGNAL, Arm.IDLER)}

    record = simulate_trajectories(
        res, pulse, config.n_traj,
        nf=config.nf, seed=seed, dt=config.dt,
        spm_on=config.spm_on, xpm_on=config.xpm_on, workers=workers,
    )
    return SimulateResult(
        record=record,
        pnd=pnd_from_trajectories(record, config.hist_trunc),
        scattered=scattered,
        g2={arm.value: _safe_g2(record, arm) for arm in (Arm.SIGNAL, Arm.IDLER)},
        provenance=provenance("simulate", config, seed, entropy),
        g2_exact=g2_exact,
    )


# ============================================================
# SWEEPS
# ============================================================

@dataclass
class SweepResult:
    r_vs_power: List[Dict[str, float]]
    nrf_vs_ntot: List[Dict[str, Any]]
    slopes: Dict[str, Any]
    provenance: Optional[Provenance] = None


def _point_row(power: float, p: JointPnd, fit_config: FitConfig) -> Tuple[Dict[str, float], Dict[str, Any]]:
    fitted = fit_source_model(p, fit_config.bounds, fit_config.grid)
    m = moments(p)
    report = nrf(p)
    r_row = {
        "power": power,
        "r": fitted.params["r"],
        "n_th_s": fitted.params["n_th_s"],
        "n_th_i": fitted.params["n_th_i"],
        "r_db": squeezing_db(fitted.params["r"]),
        "fidelity": fitted.objective,
        "mean_s": m.mean_s,
        "mean_i": m.mean_i,
    }
    nrf_row = {"source": "tms", "power": power, "n_tot": report.n_tot, "v_diff": report.v_diff, "nrf": report.nrf}
    return r_row, nrf_row


def _synth_table(truth: JointPnd, config: SweepConfig, seed: int) -> ClickTable:
    ladder = config.ladder.build()
    if config.exact:
        return exact_click_table(truth, ladder, config.trials)
    return sample_click_table(truth, ladder, config.trials, seed)


def _reconstruct_joint(table: ClickTable, config: SweepConfig, scale: float = 1.0) -> JointPnd:
    """Joint reconstruction with every assumed transmission multiplied by scale."""
    em = config.reconstruct.em
    recon = config.reconstruct.model_copy(update={
        "mode": ReconstructMode.JOINT,
        "em": em.model_copy(update={"plane_scale": em.plane_scale * scale}),
    })
    return _require_joint(reconstruct(table, recon).pnd)


def _calibration_scales(config: SweepConfig) -> Tuple[float, List[float]]:
    """
    Reference transmission of the sweep (largest effective ladder step) and the
    transmission multipliers of its loss_delta_db miscalibrations, capped at 1.
    """
    if config.loss_delta_db is None:
        return 1.0, []
    eta_ref = float(np.max(config.ladder.build().as_array())) / config.reconstruct.plane.segment()
    factor = 10.0 ** (config.loss_delta_db / 10.0)
    return eta_ref, [1.0 / factor, min(eta_ref * factor, 1.0) / eta_ref]


def _model_sweep_job(args) -> Tuple[Dict[str, float], List[Dict[str, Any]], Dict[float, Tuple[float, float]]]:
    power, seed, config, scales = args
    seeds = child_seeds(seed, 2)
    truth = config.scaling.at_power(power).joint_pnd(config.synth_trunc)
    table = _synth_table(truth, config, seeds[0])
    recon = _reconstruct_joint(table, config)
    r_row, nrf_row = _point_row(power, recon, config.fit)
    r_row["r_true"] = config.scaling.a * power
    nrf_rows = [nrf_row]
    if config.coherent_control:
        control_truth = coherent_pair_pnd(nrf(truth).n_tot, config.synth_trunc)
        control = nrf(_reconstruct_joint(_synth_table(control_truth, config, seeds[1]), config))
        nrf_rows.append({
            "source": "coherent", "power": power,
            "n_tot": control.n_tot, "v_diff": control.v_diff, "nrf": control.nrf,
        })
    calibrated = {}
    for scale in scales:
        report = nrf(_reconstruct_joint(table, config, scale))
        calibrated[scale] = (report.n_tot, report.v_diff)
    return r_row, nrf_rows, calibrated


def _slope_block(xs: List[float], ys: List[float]) -> Optional[Dict[str, float]]:
    if len(xs) < 2 or np.ptp(xs) == 0:
        return None
    return linear_fit(xs, ys).model_dump()


def _slopes(
    r_rows: List[Dict[str, float]],
    nrf_rows: List[Dict[str, Any]],
    oracle: Optional[Dict[str, float]],
    spread: Optional[Dict[str, float]] = None,
) -> Dict[str, Any]:
    slopes: Dict[str, Any] = {"r_vs_power": _slope_block([r["power"] for r in r_rows], [r["r"] for r in r_rows])}
    for source in ("tms", "coherent"):
        rows = [row for row in nrf_rows if row["source"] == source]
        if rows:
            slopes[f"v_diff_vs_n_tot_{source}"] = _slope_block([r["n_tot"] for r in rows], [r["v_diff"] for r in rows])
    if oracle is not None:
        slopes["v_diff_vs_n_tot_model"] = oracle
    if spread is not None:
        slopes["v_diff_vs_n_tot_tms_loss_spread"] = spread
    return slopes


def sweep(config: SweepConfig, workers: Optional[int] = None) -> SweepResult:
    seed, entropy = resolve_seed(config.seed)
    seeds = child_seeds(seed, len(config.powers))
    started = time.perf_counter()
    r_rows: List[Dict[str, float]] = []
    nrf_rows: List[Dict[str, Any]] = []
    oracle = None
    spread = None

    if config.mode == SweepMode.MODEL:
        eta_ref, scales = _calibration_scales(config)
        jobs = [(float(p), s, config, scales) for p, s in zip(config.powers, seeds)]
        workers = settings.WORKERS if workers is None else max(1, workers)
        if workers == 1:
            results = [_model_sweep_job(job) for job in jobs]
        else:
            with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
                results = list(pool.map(_model_sweep_job, jobs))
        calibrated: Dict[float, List[Tuple[float, float]]] = {}
        for r_row, rows, points in results:
            r_rows.append(r_row)
            nrf_rows.extend(rows)
            for scale, point in points.items():
                calibrated.setdefault(scale, []).append(point)
        tms = [(row["n_tot"], row["v_diff"]) for row in nrf_rows if row["source"] == "tms"]
        calibrated[1.0] = tms

        def slope_at(eta: float) -> float:
            points = calibrated[min(calibrated, key=lambda k: abs(k - eta / eta_ref))]
            return linear_fit([x for x, _ in points], [y for _, y in points]).slope

        if scales and len(tms) >= 2 and np.ptp([x for x, _ in tms]) > 0:
            spread = loss_spread(slope_at, eta_ref, config.loss_delta_db).model_dump()
        segment = config.reconstruct.plane.segment()
        reports = [model_nrf(config.scaling.at_power(p), eta=segment) for p in config.powers]
        oracle = _slope_block([r.n_tot for r in reports], [r.v_diff for r in reports])
    else:
        sim = config.simulate
        for power, s in zip(config.powers, seeds):
            record = simulate_trajectories(
                sim.resonator, sim.pulse.at_power(power), sim.n_traj,
                nf=sim.nf, seed=s, dt=sim.dt, spm_on=sim.spm_on, xpm_on=sim.xpm_on, workers=workers,
            )
            r_row, nrf_row = _point_row(power, pnd_from_trajectories(record, sim.hist_trunc), config.fit)
            r_rows.append(r_row)
            nrf_rows.append(nrf_row)

    slopes = _slopes(r_rows, nrf_rows, oracle, spread)
    logger.info(f"✅ Sweep over {len(config.powers)} powers ({config.mode.value}) in {time.perf_counter() - started:.1f}s")
    return SweepResult(
        r_vs_power=r_rows,
        nrf_vs_ntot=nrf_rows,
        slopes=slopes,
        provenance=provenance("sweep", config, seed, entropy),
    )
