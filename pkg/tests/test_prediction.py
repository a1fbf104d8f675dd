import numpy as np
import pytest

from bfbm.errors import DomainError, TableTooShortError
from bfbm.prediction import (PredictionSetup, beta_identity_check, copy_weight, copy_weight_asymptotic, copy_weight_mc,
                             euler_reflection_gap, fbm_cov_matrix, g_kernel, g_kernel_closed, prediction_check,
                             prediction_refinement, predicted_mean)
from bfbm.gaussian_bfbm import fbm_cov
from utils.rng import ReplicaRNG


@pytest.mark.parametrize("alpha", [0.1, 0.25, 0.35, 0.45, 0.5])
@pytest.mark.parametrize("xi", [0.1, 2.0])
def test_beta_identity(alpha, xi):
    lhs, rhs = beta_identity_check(xi, alpha)
    assert abs(lhs - rhs) < 1e-7


def test_beta_identity_domain():
    with pytest.raises(DomainError):
        beta_identity_check(0.0, 0.3)
    with pytest.raises(DomainError):
        beta_identity_check(1.0, 0.6)


@pytest.mark.parametrize("s", [-0.01, -0.5, -2.0, -40.0])
def test_prediction_kernel_forms(p85, s):
    assert g_kernel(1.0, s, p85) == pytest.approx(g_kernel_closed(1.0, s, p85), rel=1e-8)


def test_prediction_kernel_domain(p85):
    with pytest.raises(DomainError):
        g_kernel(1.0, 0.0, p85)
    with pytest.raises(DomainError):
        g_kernel_closed(1.0, np.array([-1.0, 0.5]), p85)


def test_euler_reflection(p75, p85):
    assert euler_reflection_gap(p75) < 1e-14
    assert euler_reflection_gap(p85) < 1e-14


def test_copy_weight_asymptotics(tbl35):
    n = 10_000
    exact = copy_weight(n, n, tbl35)
    assert exact == pytest.approx(copy_weight_asymptotic(n, n, 0.35), rel=0.05)


def test_copy_weight_frequency(tbl35):
    p_hat, se = copy_weight_mc(5, 3, replicas=20_000, seed=2, alpha=0.35)
    assert abs(p_hat - copy_weight(5, 3, tbl35)) < 4.0 * se


def test_copy_weight_needs_table(tbl35):
    with pytest.raises(TableTooShortError):
        copy_weight(tbl35.N + 1, 1, tbl35)


def test_fbm_cov_matrix(p85):
    times = np.array([-3.0, -0.5, 0.25, 2.0])
    cov = fbm_cov_matrix(times, p85)
    for i, a in enumerate(times):
        for j, b in enumerate(times):
            assert cov[i, j] == pytest.approx(fbm_cov(a, b, p85), rel=1e-14, abs=1e-15)


def test_setup_validation(p85):
    with pytest.raises(DomainError):
        PredictionSetup(p=p85, t=0.0)
    with pytest.raises(DomainError):
        PredictionSetup(p=p85, t=1.0, grid=1)
    setup = PredictionSetup(p=p85, t=2.0, grid=4)
    assert setup.D == 100.0
    np.testing.assert_allclose(setup.past_grid(), [-100.0, -75.0, -50.0, -25.0])


def test_prediction_check_report(p85):
    setup = PredictionSetup(p=p85, t=1.0, grid=200, replicas=400)
    report = prediction_check(setup, ReplicaRNG(3, (0, 0)))
    assert report["grid"] == 200
    assert report["exact_mean_abs_discrepancy"] > 0.0
    assert report["relative_mc"] == pytest.approx(report["relative"], rel=0.3)
    assert report["passed"] == (report["relative"] < 0.05)


def test_refinement_reduces_discrepancy(p85):
    setup = PredictionSetup(p=p85, t=1.0, grid=800, replicas=20)
    reports = prediction_refinement(setup, doublings=2, seed=1)
    assert [r["grid"] for r in reports] == [200, 400, 800]
    relative = [r["relative"] for r in reports]
    assert relative[0] > relative[1] > relative[2]


@pytest.mark.slow
def test_prediction_on_fine_grid(p85):
    setup = PredictionSetup(p=p85, t=1.0, grid=2000, replicas=200)
    report = prediction_check(setup, ReplicaRNG(5, (0, 0)))
    assert report["passed"]


def test_predicted_mean_is_linear(p85):
    times = np.linspace(-20.0, -0.1, 50)
    rng = ReplicaRNG(4)
    x, y = rng.normal(50), rng.normal(50)
    assert predicted_mean(1.0, times, np.zeros(50), p85) == 0.0
    assert predicted_mean(1.0, times, x + y, p85) == pytest.approx(
        predicted_mean(1.0, times, x, p85) + predicted_mean(1.0, times, y, p85), rel=1e-10, abs=1e-12)
    with pytest.raises(DomainError):
        predicted_mean(1.0, times[::-1], x, p85)
