import numpy as np
import pytest
from pydantic import ValidationError

from pndlab.em import EmConfig, em_joint, em_single, em_step, error_metric, reconstruct_at_planes, rescale_plane
from pndlab.errors import DomainError, NumericalGuardError, ShapeMismatchError
from pndlab.fock import (
    JointPnd,
    apply_loss_joint,
    coherent_pnd,
    fock_pnd,
    marginal,
    product_pnd,
    source_model_pnd,
    thermal_pnd,
)
from pndlab.forward import (
    ClickTable,
    EfficiencyLadder,
    b_matrix_joint,
    b_matrix_single,
    exact_click_table,
    off_frequencies,
    sample_click_table,
)
from pndlab.metrics import fidelity, fit_source_model, moments

ORACLE = EmConfig(trunc=3, rel_tol=1e-12, max_iters=20_000)


def _exact_pairs(p, etas):
    return list(zip(etas, b_matrix_single(etas, p.truncation) @ p.probs))


def test_error_metric():
    assert error_metric([0.5, 0.5], [0.4, 0.7]) == pytest.approx(0.15)
    with pytest.raises(ShapeMismatchError):
        error_metric([0.5, 0.5], [0.5])


def test_config_validation():
    with pytest.raises(ValidationError):
        EmConfig(trunc=0)
    with pytest.raises(ValidationError):
        EmConfig(rel_tol=0.0)


def test_step_raises_when_the_model_cannot_explain_the_data():
    system = np.array([[0.0, 0.0], [1.0, 1.0]])
    with pytest.raises(NumericalGuardError):
        em_step(system, np.array([0.3, 0.7]), np.array([0.5, 0.5]))


def test_step_keeps_probability_normalized():
    system = np.array([[1.0, 0.5], [1.0, 0.25]])
    rho = em_step(system, np.array([0.8, 0.6]), np.array([0.5, 0.5]))
    assert rho.sum() == pytest.approx(1.0)
    assert np.all(rho >= 0)


def test_vacuum_single_mode():
    etas = list(np.linspace(0.1, 0.9, 20))
    pnd, _ = em_single([(eta, 1.0) for eta in etas], EmConfig(trunc=5, rel_tol=1e-12, max_iters=20_000))
    assert pnd.probs[0] > 0.99


def test_invisible_bins_stay_empty():
    # with unit transmission only "any photon" vs "none" is observable
    pnd, _ = em_single([(1.0, 0.3), (1.0, 0.3)], EmConfig(trunc=4))
    assert pnd.probs[0] == pytest.approx(1.0)


@pytest.mark.parametrize("truth", [thermal_pnd(1.2, 9), coherent_pnd(1.2, 9)], ids=["thermal", "coherent"])
def test_single_mode_oracle(truth, open_ladder):
    pnd, diag = em_single(_exact_pairs(truth, open_ladder.etas), EmConfig(trunc=9, rel_tol=1e-10, max_iters=20_000))
    assert fidelity(pnd, truth) > 0.995
    assert diag.final_epsilon < diag.epsilon_history[0]


def test_single_mode_rejects_bad_frequencies():
    with pytest.raises(DomainError):
        em_single([(0.5, 1.2)], EmConfig())


@pytest.mark.parametrize("trunc", [3, 5, 9])
def test_joint_system_is_rank_deficient(trunc, open_ladder):
    # every column is built from x^n, x^k and x^(n+k), x = 1 - eta
    rank = np.linalg.matrix_rank(b_matrix_joint(open_ladder.etas, trunc))
    assert rank <= 4 * trunc + 3
    assert rank < (trunc + 1) ** 2


@pytest.mark.parametrize("seed", [3, 11, 29])
def test_joint_random_states_recover_what_the_data_determines(seed, open_ladder):
    truth = JointPnd.normalized(np.random.default_rng(seed).dirichlet(np.ones(16)).reshape(4, 4))
    table = exact_click_table(truth, open_ladder, 10 ** 12)
    pnd, diag = em_joint(table, ORACLE)
    assert diag.final_epsilon < 1e-2 * diag.epsilon_history[0]
    for arm in ("signal", "idler"):
        assert fidelity(marginal(pnd, arm), marginal(truth, arm)) > 0.999
        assert marginal(pnd, arm).mean == pytest.approx(marginal(truth, arm).mean, abs=0.02)
    assert diag.outside_window_mass is None


def test_epsilon_increases_are_counted(open_ladder):
    truth = JointPnd.normalized(np.random.default_rng(3).dirichlet(np.ones(16)).reshape(4, 4))
    _, diag = em_joint(exact_click_table(truth, open_ladder, 10 ** 12), EmConfig(trunc=3, rel_tol=1e-15, max_iters=2_000))
    rises = int(np.sum(np.diff(diag.epsilon_history) > 0))
    assert diag.non_monotone_steps == rises
    assert diag.iterations == len(diag.epsilon_history) - 1


def test_single_mode_epsilon_settles_below_its_first_step(open_ladder):
    truth = thermal_pnd(1.2, 9)
    _, diag = em_single(_exact_pairs(truth, open_ladder.etas), EmConfig(trunc=9, rel_tol=1e-10, max_iters=20_000))
    history = np.asarray(diag.epsilon_history)
    assert history[-1] <= history[1]
    assert history[-1] < 1e-2 * history[0]
    assert diag.non_monotone_steps == int(np.sum(np.diff(history) > 0))


@pytest.mark.parametrize("joint", [False, True], ids=["single", "joint"])
def test_true_distribution_is_a_fixed_point(joint, open_ladder):
    if joint:
        rho = source_model_pnd(0.5, 0.08, 0.06, 5).vectorize()
        system = b_matrix_joint(open_ladder.etas, 5)
    else:
        rho = thermal_pnd(0.9, 7).probs
        system = b_matrix_single(open_ladder.etas, 7)
    np.testing.assert_allclose(em_step(system, system @ rho, rho), rho, atol=1e-12)


def test_row_order_does_not_matter(setup_ladder):
    table = sample_click_table(source_model_pnd(0.5, 0.05, 0.05, 10), setup_ladder, 1_000_000, seed=17)
    shuffled = ClickTable(rows=[table.rows[k] for k in np.random.default_rng(1).permutation(len(table.rows))])
    config = EmConfig(trunc=6, rel_tol=1e-15, max_iters=500)
    pnd, diag = em_joint(table, config)
    again, diag_again = em_joint(shuffled, config)
    np.testing.assert_allclose(again.probs, pnd.probs, atol=1e-9)
    assert diag_again.final_epsilon == pytest.approx(diag.final_epsilon, rel=1e-9)


def test_windowed_stop_rule(open_ladder):
    truth = source_model_pnd(0.4, 0.05, 0.03, 4)
    table = exact_click_table(truth, open_ladder, 10 ** 12)
    _, short = em_joint(table, EmConfig(trunc=4, rel_tol=1e-4, window=1))
    _, long = em_joint(table, EmConfig(trunc=4, rel_tol=1e-4, window=200))
    assert short.converged
    assert long.iterations >= 200
    assert long.iterations >= short.iterations


def test_joint_reconstruction_of_the_source_model(open_ladder):
    truth = source_model_pnd(0.4, 0.05, 0.03, 6)
    table = exact_click_table(truth, open_ladder, 10 ** 12)
    pnd, diag = em_joint(table, EmConfig(trunc=6, rel_tol=1e-10, max_iters=20_000))
    assert fidelity(pnd, truth) > 0.995
    assert diag.outside_window_mass == pytest.approx(0.0, abs=1e-2)
    assert diag.iterations == len(diag.epsilon_history) - 1


def test_iteration_cap_is_reported_not_raised(open_ladder):
    truth = source_model_pnd(0.4, 0.05, 0.03, 4)
    table = exact_click_table(truth, open_ladder, 10 ** 9)
    _, diag = em_joint(table, EmConfig(trunc=4, rel_tol=1e-15, max_iters=5))
    assert not diag.converged
    assert diag.iterations == 5


def test_rescale_plane():
    config = rescale_plane(EmConfig(), 0.5)
    assert config.plane_scale == pytest.approx(2.0)
    assert rescale_plane(config, 0.5).plane_scale == pytest.approx(4.0)
    with pytest.raises(DomainError):
        rescale_plane(EmConfig(), 0.5, etas=[0.3, 0.6])
    with pytest.raises(DomainError):
        rescale_plane(EmConfig(), 0.0)


def test_reconstruction_at_a_downstream_plane():
    truth = source_model_pnd(0.5, 0.05, 0.05, 6)
    ladder = EfficiencyLadder(etas=list(np.linspace(0.1, 0.75, 30)))
    table = exact_click_table(truth, ladder, 10 ** 12)
    config = EmConfig(trunc=6, rel_tol=1e-10, max_iters=20_000)
    planes = reconstruct_at_planes(table, config, {"resonator": 1.0, "chip": 0.8}, workers=1)
    assert set(planes) == {"resonator", "chip"}
    chip, _ = planes["chip"]
    expected = apply_loss_joint(truth, 0.8, 0.8)
    assert fidelity(chip, expected) > 0.99
    assert moments(chip).mean_s == pytest.approx(0.8 * moments(truth).mean_s, rel=0.03)


@pytest.mark.slow
@pytest.mark.parametrize("mode", [thermal_pnd, coherent_pnd], ids=["thermal", "coherent"])
def test_single_mode_validation_with_sampling(mode, setup_ladder):
    truth = mode(1.2, 12)
    table = sample_click_table(product_pnd(truth, fock_pnd(0, 12)), setup_ladder, 12_500_000, seed=2024)
    pnd, _ = em_single(off_frequencies(table, "signal"), EmConfig(trunc=12))
    assert fidelity(pnd, truth) >= 0.99


@pytest.mark.slow
def test_joint_reconstruction_at_full_scale(setup_ladder, source_params):
    truth = source_params.joint_pnd(9)
    table = sample_click_table(source_params.joint_pnd(14), setup_ladder, 12_500_000, seed=7)
    pnd, _ = em_joint(table, EmConfig(trunc=9))
    assert fidelity(pnd, truth) >= 0.97
    fitted = fit_source_model(pnd)
    # the joint grid is only partly fixed by on/off data; marginals are fully fixed
    assert fitted.params["r"] == pytest.approx(0.63, abs=0.04)
    assert fitted.params["n_th_s"] == pytest.approx(0.11, abs=0.05)
    assert fitted.params["n_th_i"] == pytest.approx(0.10, abs=0.05)
    for arm in ("signal", "idler"):
        assert marginal(pnd, arm).mean == pytest.approx(marginal(truth, arm).mean, rel=0.05)
