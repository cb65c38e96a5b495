import numpy as np
import pytest

from pndlab import pipeline
from pndlab.em import EmConfig
from pndlab.errors import ConfigError, DomainError
from pndlab.fock import thermal_pnd
from pndlab.metrics import FitBounds, GridConfig, fidelity, linear_fit, model_nrf, squeezing_db
from pndlab.models import (
    DEFAULT_SCALING,
    FitConfig,
    LadderConfig,
    Plane,
    PlaneConfig,
    ReconstructConfig,
    ReconstructMode,
    SimulateConfig,
    SourceConfig,
    SourceKind,
    SweepConfig,
    SynthConfig,
)
from pndlab.dynamics.models import PulseParams

SMALL_LADDER = LadderConfig(eta_exp=1.0, voa_min=0.1, voa_max=0.9, steps=20)


def test_seed_resolution():
    assert pipeline.resolve_seed(5) == (5, False)
    seed, entropy = pipeline.resolve_seed(None)
    assert entropy and seed >= 0
    assert pipeline.child_seeds(1, 3) == pipeline.child_seeds(1, 3)
    assert len(set(pipeline.child_seeds(1, 3))) == 3


def test_ladder_config():
    assert LadderConfig(loss_db=3.5).build().etas[0] == pytest.approx(0.05 * 10 ** -0.35)
    assert len(LadderConfig(etas=[0.1, 0.2, 0.3]).build().etas) == 3
    with pytest.raises(ValueError):
        LadderConfig(eta_exp=0.5, loss_db=3.0)


def test_plane_segments():
    assert PlaneConfig().segment() == 1.0
    assert PlaneConfig(plane=Plane.CHIP, eta_chip=0.7).segment() == 0.7
    with pytest.raises(ConfigError):
        PlaneConfig(plane=Plane.DETECTOR).segment()


@pytest.mark.parametrize("kind", list(SourceKind))
def test_every_source_kind_builds(kind):
    source = SourceConfig(kind=kind, power=1.5)
    assert source.build(6).truncation == 6


def test_scaled_source_needs_power():
    with pytest.raises(ConfigError):
        SourceConfig(kind=SourceKind.SCALED).build(6)


def test_synth_records_seed_and_config():
    result = pipeline.synth(SynthConfig(ladder=SMALL_LADDER, trials=5_000, trunc=6, seed=3))
    assert len(result.table.rows) == 20
    assert result.provenance.seed == 3
    assert not result.provenance.entropy_seed
    assert result.provenance.config["trials"] == 5_000
    again = pipeline.synth(SynthConfig(ladder=SMALL_LADDER, trials=5_000, trunc=6, seed=3))
    assert np.array_equal(result.table.counts(), again.table.counts())


def test_synth_without_seed_echoes_entropy():
    result = pipeline.synth(SynthConfig(ladder=SMALL_LADDER, trials=100, trunc=4))
    assert result.provenance.entropy_seed
    assert result.provenance.seed is not None


def test_reconstruct_joint_and_single_arm():
    source = SourceConfig(kind=SourceKind.THERMAL, mean=0.8)
    synth = pipeline.synth(SynthConfig(source=source, ladder=SMALL_LADDER, trials=10 ** 12, trunc=8, exact=True))
    em = EmConfig(trunc=8, rel_tol=1e-10, max_iters=20_000)
    signal = pipeline.reconstruct(synth.table, ReconstructConfig(em=em, mode=ReconstructMode.SIGNAL))
    assert fidelity(signal.pnd, thermal_pnd(0.8, 8)) > 0.995
    idler = pipeline.reconstruct(synth.table, ReconstructConfig(em=em, mode=ReconstructMode.IDLER))
    assert idler.pnd.probs[0] > 0.99
    joint = pipeline.reconstruct(synth.table, ReconstructConfig(em=EmConfig(trunc=4, max_iters=200)))
    assert joint.pnd.truncation == 4
    assert joint.segment == 1.0


def test_reconstruct_upstream_of_missing_loss_is_rejected():
    synth = pipeline.synth(SynthConfig(ladder=SMALL_LADDER, trials=1_000, trunc=4, seed=1))
    config = ReconstructConfig(plane=PlaneConfig(plane=Plane.CHIP, eta_chip=0.5))
    with pytest.raises(DomainError):
        pipeline.reconstruct(synth.table, config)


def test_metrics_need_a_joint_distribution():
    with pytest.raises(ConfigError):
        pipeline.metrics(thermal_pnd(0.5, 4))


def test_fit_stage():
    truth = SourceConfig(r=0.3, n_th_s=0.05, n_th_i=0.05).build(6)
    report = pipeline.fit(truth, FitConfig(bounds=FitBounds(), grid=GridConfig(points_per_axis=8)))
    assert report.fit["r"] == pytest.approx(0.3, abs=0.01)
    assert report.fit["fidelity"] > 0.9999


def _small_sweep(**update) -> SweepConfig:
    return SweepConfig(
        powers=[1.0, 2.0],
        ladder=LadderConfig(steps=15),
        trials=10 ** 9,
        synth_trunc=6,
        exact=True,
        seed=11,
        reconstruct=ReconstructConfig(em=EmConfig(trunc=6, max_iters=500)),
        fit=FitConfig(grid=GridConfig(points_per_axis=6)),
        **update,
    )


def test_model_sweep_tables():
    result = pipeline.sweep(_small_sweep(), workers=1)
    assert [row["power"] for row in result.r_vs_power] == [1.0, 2.0]
    assert {row["source"] for row in result.nrf_vs_ntot} == {"tms", "coherent"}
    assert set(result.slopes) >= {"r_vs_power", "v_diff_vs_n_tot_tms", "v_diff_vs_n_tot_coherent", "v_diff_vs_n_tot_model"}
    assert result.r_vs_power[1]["r_true"] == pytest.approx(2 * DEFAULT_SCALING.a)
    assert result.r_vs_power[1]["r_db"] == pytest.approx(squeezing_db(result.r_vs_power[1]["r"]))
    assert result.provenance.command == "sweep"


def test_model_sweep_reports_the_loss_spread_of_the_slope():
    result = pipeline.sweep(_small_sweep(coherent_control=False), workers=1)
    spread = result.slopes["v_diff_vs_n_tot_tms_loss_spread"]
    assert spread["delta_db"] == 0.5
    assert spread["nominal"] == pytest.approx(result.slopes["v_diff_vs_n_tot_tms"]["slope"], rel=1e-9)
    assert spread["spread"] >= 0
    assert spread["low"] != pytest.approx(spread["high"], rel=1e-6)

    plain = pipeline.sweep(_small_sweep(coherent_control=False, loss_delta_db=None), workers=1)
    assert "v_diff_vs_n_tot_tms_loss_spread" not in plain.slopes


def test_default_scaling_reproduces_the_measured_noise_slope():
    reports = [model_nrf(DEFAULT_SCALING.at_power(p)) for p in SweepConfig().powers]
    fit = linear_fit([r.n_tot for r in reports], [r.v_diff for r in reports])
    assert fit.slope == pytest.approx(0.42, abs=0.01)


def test_model_sweep_without_control():
    result = pipeline.sweep(_small_sweep(coherent_control=False), workers=1)
    assert {row["source"] for row in result.nrf_vs_ntot} == {"tms"}


def test_simulate_stage():
    config = SimulateConfig(pulse=PulseParams(power=0.1), n_traj=3, nf=3, hist_trunc=3, seed=4)
    result = pipeline.simulate(config, workers=1)
    summary = result.summary()
    assert summary["n_traj"] == 3
    assert summary["scattered_s"] == pytest.approx(summary["scattered_i"])
    assert summary["g2_exact"]["signal"]["g2"] == pytest.approx(summary["g2_exact"]["idler"]["g2"])
    assert result.pnd.truncation == 3
    assert result.provenance.seed == 4


@pytest.mark.slow
def test_noise_reduction_slopes_at_full_scale():
    result = pipeline.sweep(SweepConfig(powers=[1.0, 1.5, 2.0, 2.5], seed=2024))
    oracle = result.slopes["v_diff_vs_n_tot_model"]["slope"]
    assert result.slopes["v_diff_vs_n_tot_tms"]["slope"] == pytest.approx(oracle, abs=0.05)
    assert result.slopes["v_diff_vs_n_tot_coherent"]["slope"] == pytest.approx(1.0, abs=0.02)
