import numpy as np
import pytest

from bfbm.errors import DomainError
from bfbm.gaussian_bfbm import (conditional_cross_covariance, covariance, covariance_matrix, endpoint_nodes, factorize,
                                fbm_cov, gaussian_condition, grem_covariance, kernel_K, rho, rho_closed,
                                rho_hs_quadrature, rho_kernel_quadrature, sample_cholesky, sample_grem_endpoint,
                                sample_whitenoise_tree, single_split_sample, whitenoise_covariance)
from bfbm.tree import binary_tree, discretize, leaves_at, sample_yule
from utils.rng import ReplicaRNG


def within_sampling_error(sample_cov, cov, replicas, sigmas=5.0):
    """Entrywise check of a sample covariance against Var[x_i x_j] ~ (s_ii s_jj + s_ij^2)/R"""
    d = np.diag(cov)
    bound = sigmas * np.sqrt((np.outer(d, d) + cov ** 2) / replicas)
    return np.all(np.abs(sample_cov - cov) <= bound)


@pytest.mark.parametrize("t, s", [(1.0, 0.0), (2.0, 0.5), (3.0, 2.9), (0.5, 0.25)])
def test_equal_time_overlap_forms(p85, t, s):
    assert rho(t, t, s, p85) == pytest.approx(rho_closed(t, s, p85), rel=1e-10)
    assert rho_kernel_quadrature(t, t, s, p85) == pytest.approx(rho_closed(t, s, p85), abs=1e-6)


@pytest.mark.parametrize("t1, t2, s", [(2.0, 1.0, 0.5), (1.5, 3.0, 0.0), (1.0, 1.2, 0.9)])
def test_covariance_routes_agree(p75, t1, t2, s):
    closed = rho(t1, t2, s, p75)
    assert covariance(t1, t2, s, p75, "kernel") == pytest.approx(closed, abs=1e-7)
    assert rho_hs_quadrature(t1, t2, s, p75) == pytest.approx(closed, abs=1e-6)


def test_split_at_the_end_is_one_path(p85):
    assert rho(2.0, 1.0, 1.0, p85) == pytest.approx(fbm_cov(2.0, 1.0, p85), rel=1e-14)
    assert rho_closed(2.0, 0.0, p85) == pytest.approx(2.0 ** 1.7 * (1.0 - p85.c_rho), rel=1e-14)


def test_covariance_arguments(p85):
    with pytest.raises(DomainError):
        covariance(1.0, 1.0, 0.5, p85, "simulated")
    with pytest.raises(DomainError):
        rho(1.0, 2.0, 1.5, p85)


def test_kernel(p85):
    assert kernel_K(2.0, 1.0, p85) == 0.0
    assert kernel_K(-1.0, 1.0, p85) > 0.0
    assert kernel_K(0.5, 1.0, p85) == pytest.approx(0.5 ** 0.35 / p85.c_H, rel=1e-14)


def test_tree_covariance_is_positive_definite(p85):
    tree = binary_tree(3)
    # branches born at the evaluation time would repeat their parents
    nodes = [(b, 3.0) for b in leaves_at(tree, 2.0)] + [(0, 1.5), (3, 2.5)]
    cov = covariance_matrix(tree, nodes, p85)
    np.testing.assert_array_equal(cov, cov.T)
    assert np.all(np.linalg.eigvalsh(cov) > 0.0)
    L, eps = factorize(cov, 3.0 ** 1.7)
    assert eps == 0.0
    np.testing.assert_allclose(L @ L.T, cov, rtol=1e-12)


def test_cholesky_sampler_covariance(p85):
    tree = binary_tree(2)
    nodes = [(0, 2.0), (1, 2.0), (0, 1.0), (1, 1.5)]
    sample = sample_cholesky(tree, nodes, p85, ReplicaRNG(1, (0,)), size=4000)
    assert sample.values.shape == (4000, 4)
    assert within_sampling_error(sample.covariance(), covariance_matrix(tree, nodes, p85), 4000)


def test_grem_covariance_on_grid_births(p85):
    tree = binary_tree(3)
    disc = discretize(tree, 3)
    np.testing.assert_allclose(grem_covariance(disc, 3, 3.0, p85),
                               covariance_matrix(tree, endpoint_nodes(tree, 3.0), p85), rtol=1e-12)


def test_grem_sampler_covariance(p85):
    tree = sample_yule(2.0, ReplicaRNG(8, (0,)))
    disc = discretize(tree, 4, 2.0)
    sample = sample_grem_endpoint(disc, 4, 2.0, p85, ReplicaRNG(8, (1,)), size=3000)
    assert within_sampling_error(sample.covariance(), grem_covariance(disc, 4, 2.0, p85), 3000)


def test_grem_needs_matching_discretisation(p85):
    tree = binary_tree(2)
    with pytest.raises(DomainError):
        sample_grem_endpoint(tree, 2, 2.0, p85, ReplicaRNG(1))
    with pytest.raises(DomainError):
        grem_covariance(discretize(tree, 2), 4, 2.0, p85)


def test_whitenoise_variance_deficit(p85):
    tree = binary_tree(2)
    _, deficit = whitenoise_covariance(tree, 0.01, 2.0, None, p85)
    assert np.all(deficit >= -1e-9)
    assert np.all(deficit < 0.02 * 2.0 ** 1.7)
    _, without = whitenoise_covariance(tree, 0.01, 2.0, None, p85, far_past=False)
    assert np.all(without > deficit)


def test_whitenoise_sampler(p85):
    tree = binary_tree(1)
    sample = sample_whitenoise_tree(tree, 0.02, 1.0, 20.0, p85, ReplicaRNG(4, (0,)), size=3000)
    cov, _ = whitenoise_covariance(tree, 0.02, 1.0, 20.0, p85)
    assert sample.values.shape == (3000, 2)
    assert within_sampling_error(sample.covariance(), cov, 3000)
    assert sample.info["variance_deficit"] >= -1e-9


def test_single_split_law(p85):
    t, s = 2.0, 0.5
    rng = ReplicaRNG(12)
    draws = np.array([single_split_sample(t, s, 2, p85, rng.fork(r)) for r in range(4000)])
    cov = np.array([[t ** 1.7, rho_closed(t, s, p85)], [rho_closed(t, s, p85), t ** 1.7]])
    assert within_sampling_error(np.cov(draws, rowvar=False), cov, 4000)


def test_gaussian_condition_two_by_two():
    cov = np.array([[1.0, 0.5], [0.5, 1.0]])
    mean, cond = gaussian_condition(cov, [0], np.array([2.0]))
    assert mean[0] == pytest.approx(1.0)
    assert cond[0, 0] == pytest.approx(0.75)
    means, _ = gaussian_condition(cov, [0], np.array([[2.0], [-4.0]]))
    np.testing.assert_allclose(means[:, 0], [1.0, -2.0])


@pytest.mark.parametrize("t1, t2, s", [(2.0, 1.5, 1.0), (3.0, 3.0, 0.5)])
def test_shared_past_explains_the_cross_covariance(p85, t1, t2, s):
    scale = max(t1, t2) ** 1.7
    assert abs(conditional_cross_covariance(t1, t2, s, p85)) < 1e-8 * scale
    without = conditional_cross_covariance(t1, t2, s, p85, with_predictor=False)
    assert abs(without) > 1e-6 * scale


def test_cross_covariance_residual_sees_a_wrong_overlap(p85, monkeypatch):
    import bfbm.gaussian_bfbm as gaussian_bfbm

    exact = gaussian_bfbm.rho
    monkeypatch.setattr(gaussian_bfbm, "rho", lambda t1, t2, s, p: exact(t1, t2, 0.6 * s, p))
    shifted = exact(2.0, 1.5, 0.6, p85) - exact(2.0, 1.5, 1.0, p85)
    residual = conditional_cross_covariance(2.0, 1.5, 1.0, p85)
    assert residual == pytest.approx(shifted, rel=1e-4)
    assert abs(residual) > 0.1


def test_three_samplers_agree_on_eight_leaves(p85):
    tree = binary_tree(4)
    t, dt, K = 3.5, 1.0 / 32.0, 7
    nodes = endpoint_nodes(tree, t)
    assert len(nodes) == 8
    target = covariance_matrix(tree, nodes, p85)

    whitenoise, _ = whitenoise_covariance(tree, dt, t, None, p85)
    assert np.max(np.abs(whitenoise - target)) < 1e-3 * t ** 1.7
    disc = discretize(tree, K, t)
    np.testing.assert_allclose(grem_covariance(disc, K, t, p85), target, rtol=1e-12, atol=1e-12)

    replicas = 3000
    samples = [
        sample_cholesky(tree, nodes, p85, ReplicaRNG(2, (0,)), size=replicas),
        sample_whitenoise_tree(tree, dt, t, None, p85, ReplicaRNG(2, (1,)), size=replicas),
        sample_grem_endpoint(disc, K, t, p85, ReplicaRNG(2, (2,)), size=replicas),
    ]
    for sample in samples:
        assert [b for b, _ in sample.nodes] == [b for b, _ in nodes]
        assert within_sampling_error(sample.covariance(), target, replicas)
