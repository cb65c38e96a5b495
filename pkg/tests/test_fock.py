import numpy as np
import pytest
from scipy.stats import geom, poisson

from pndlab.errors import DomainError, ShapeMismatchError
from pndlab.fock import (
    Arm,
    JointPnd,
    Pnd,
    SourceModelParams,
    apply_loss,
    apply_loss_joint,
    coherent_pair_pnd,
    coherent_pnd,
    convolve_with_thermal,
    fock_pnd,
    loss_matrix,
    marginal,
    product_pnd,
    source_model_pnd,
    thermal_pnd,
    tms_joint_pnd,
)

MEANS = [0.1, 0.5, 1.2, 2.0]
ETAS = [0.0, 0.3, 0.7, 1.0]


@pytest.mark.parametrize("mean", MEANS)
def test_thermal_matches_geometric(mean):
    p = thermal_pnd(mean, 80)
    n = np.arange(81)
    assert np.allclose(p.probs, geom.pmf(n + 1, 1 / (1 + mean)), atol=1e-12)
    assert p.mean == pytest.approx(mean, abs=1e-8)
    assert p.variance == pytest.approx(mean + mean ** 2, abs=1e-6)


@pytest.mark.parametrize("mean", MEANS)
def test_coherent_matches_poisson(mean):
    p = coherent_pnd(mean, 40)
    assert np.allclose(p.probs, poisson.pmf(np.arange(41), mean), atol=1e-12)
    assert p.variance == pytest.approx(mean, abs=1e-9)


def test_truncated_distributions_are_renormalized():
    p = thermal_pnd(2.0, 3)
    assert p.probs.sum() == pytest.approx(1.0)
    assert p.truncation == 3


def test_fock_state():
    p = fock_pnd(3, 5)
    assert p.mean == 3
    assert p.variance == 0
    with pytest.raises(DomainError):
        fock_pnd(6, 5)


@pytest.mark.parametrize("bad", [[0.5, 0.6], [1.2, -0.2], [np.nan, 1.0]])
def test_pnd_rejects_invalid_probabilities(bad):
    with pytest.raises(DomainError):
        Pnd(np.array(bad))


def test_pnd_is_read_only():
    p = thermal_pnd(0.5, 4)
    with pytest.raises(ValueError):
        p.probs[0] = 0.0


def test_joint_pnd_requires_square_grid():
    with pytest.raises(ShapeMismatchError):
        JointPnd.normalized(np.ones((2, 3)))


def test_vectorize_index_map():
    grid = np.arange(16, dtype=float).reshape(4, 4)
    p = JointPnd.normalized(grid)
    vec = p.vectorize()
    # signal n = 1, idler k = 2 sits at k + n (N + 1)
    assert vec[2 + 1 * 4] == pytest.approx(p.probs[1, 2])
    assert np.allclose(JointPnd.from_vector(vec, 3).probs, p.probs)


def test_tms_is_diagonal_with_thermal_marginals():
    r = 0.5
    p = tms_joint_pnd(r, 60)
    assert np.count_nonzero(p.probs - np.diag(np.diagonal(p.probs))) == 0
    for arm in Arm:
        side = marginal(p, arm)
        assert side.mean == pytest.approx(np.sinh(r) ** 2, abs=1e-10)
        assert np.allclose(side.probs, thermal_pnd(np.sinh(r) ** 2, 60).probs, atol=1e-12)


def test_tms_at_zero_squeezing_is_vacuum():
    p = tms_joint_pnd(0.0, 4)
    assert p.probs[0, 0] == 1.0


def test_product_and_coherent_pair():
    pair = coherent_pair_pnd(1.6, 30)
    expected = np.outer(coherent_pnd(0.8, 30).probs, coherent_pnd(0.8, 30).probs)
    assert np.allclose(pair.probs, expected)
    with pytest.raises(ShapeMismatchError):
        product_pnd(thermal_pnd(0.1, 3), thermal_pnd(0.1, 4))


def test_convolution_without_background_is_identity():
    tms = tms_joint_pnd(0.4, 8)
    assert np.allclose(convolve_with_thermal(tms, 0.0, 0.0).probs, tms.probs)


def test_source_model_without_squeezing_is_product_of_thermals():
    p = source_model_pnd(0.0, 0.2, 0.05, 10)
    expected = product_pnd(thermal_pnd(0.2, 10), thermal_pnd(0.05, 10))
    assert np.allclose(p.probs, expected.probs)


def test_source_model_marginal_means_add():
    r, n_s, n_i = 0.4, 0.1, 0.07
    p = source_model_pnd(r, n_s, n_i, 50)
    assert marginal(p, Arm.SIGNAL).mean == pytest.approx(np.sinh(r) ** 2 + n_s, abs=1e-8)
    assert marginal(p, "idler").mean == pytest.approx(np.sinh(r) ** 2 + n_i, abs=1e-8)


def test_params_at_power():
    params = SourceModelParams(a=0.3, b_s=0.05, b_i=0.04).at_power(2.0)
    assert (params.r, params.n_th_s, params.n_th_i) == pytest.approx((0.6, 0.1, 0.08))
    with pytest.raises(DomainError):
        SourceModelParams(a=0.3).at_power(-1.0)


@pytest.mark.parametrize("eta", ETAS)
def test_loss_matrix_columns_are_stochastic(eta):
    assert np.allclose(loss_matrix(eta, 12).sum(axis=0), 1.0)


def test_loss_matrix_uses_log_binomials_for_large_truncation():
    assert np.allclose(loss_matrix(0.4, 35).sum(axis=0), 1.0)


@pytest.mark.parametrize("eta", ETAS)
def test_loss_keeps_coherent_states_coherent(eta):
    lossy = apply_loss(coherent_pnd(2.0, 40), eta)
    assert np.allclose(lossy.probs, coherent_pnd(2.0 * eta, 40).probs, atol=1e-12)


@pytest.mark.parametrize("eta", [0.2, 0.5, 0.9])
def test_loss_keeps_thermal_states_thermal(eta):
    lossy = apply_loss(thermal_pnd(1.0, 80), eta)
    assert np.allclose(lossy.probs, thermal_pnd(eta, 80).probs, atol=1e-12)


def test_total_loss_gives_vacuum():
    p = apply_loss_joint(tms_joint_pnd(0.6, 10), 0.0, 0.0)
    assert p.probs[0, 0] == pytest.approx(1.0)


def test_loss_rejects_out_of_range_transmission():
    with pytest.raises(DomainError):
        loss_matrix(1.5, 4)
    with pytest.raises(DomainError):
        thermal_pnd(-0.1, 4)


@pytest.mark.parametrize("eta_1,eta_2", [(0.7, 0.4), (0.95, 0.1), (0.5, 1.0)])
def test_successive_losses_compose_multiplicatively(eta_1, eta_2):
    p = Pnd.normalized(np.random.default_rng(5).dirichlet(np.ones(10)))
    twice = apply_loss(apply_loss(p, eta_1), eta_2)
    once = apply_loss(p, eta_1 * eta_2)
    np.testing.assert_allclose(twice.probs, once.probs, atol=1e-12)


def test_successive_joint_losses_compose_per_arm():
    p = source_model_pnd(0.6, 0.1, 0.08, 8)
    twice = apply_loss_joint(apply_loss_joint(p, 0.8, 0.6), 0.5, 0.9)
    once = apply_loss_joint(p, 0.4, 0.54)
    np.testing.assert_allclose(twice.probs, once.probs, atol=1e-12)
