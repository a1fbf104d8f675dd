import math

import numpy as np
import pytest

from bfbm.constants import m_binary, m_yule, make_hurst_params
from bfbm.errors import DomainError
from bfbm.extremes import (MaxExperiment, abar, bk_functional_quadrature, bk_leading_order, bracket_check,
                           delta_f, delta_f_sum, estimate_max, f_ladder, sampler_agreement, slepian_envelope)
from bfbm.tree import binary_tree, discretize
from utils.workers import set_worker_count


@pytest.mark.parametrize("H", [0.55, 0.65, 0.75, 0.85, 0.95])
def test_binary_leading_order_closed_form(H):
    p = make_hurst_params(H)
    assert bk_leading_order(p) == pytest.approx(m_binary(1.0, p), rel=1e-12)
    assert bk_functional_quadrature(p) == pytest.approx(bk_leading_order(p), rel=1e-8)


def test_overlap_derivative(p85):
    x, h = 0.3, 1e-6
    numeric = (-(p85.c_rho * (1.0 - x - h) ** 1.7) + p85.c_rho * (1.0 - x + h) ** 1.7) / (2.0 * h)
    assert abar(x, p85) == pytest.approx(numeric, rel=1e-7)
    assert abar(0.0, p85) == pytest.approx(p85.c_rho * 1.7, rel=1e-14)


def test_ladder_sum_approaches_yule_speed(p85):
    assert delta_f_sum(100, 100.0, p85) == pytest.approx(m_yule(100.0, p85), rel=0.05)


def test_ladder_integral_form(p85):
    value, asym = f_ladder(50, 50, 20.0, p85)
    assert value == pytest.approx(delta_f_sum(50, 20.0, p85), rel=1e-14)
    assert asym == pytest.approx(m_yule(20.0, p85), rel=1e-12)
    value_half, asym_half = f_ladder(25, 50, 20.0, p85)
    assert 0.0 < value_half < value
    assert 0.0 < asym_half < asym


def test_ladder_levels(p85):
    assert delta_f(0, 4, 2.0, p85) == pytest.approx(math.sqrt(2.0 ** 1.7 * (1.0 - p85.c_rho)), rel=1e-14)
    assert delta_f_sum(4, 2.0, p85, include_level_zero=True) == pytest.approx(
        delta_f_sum(4, 2.0, p85) + delta_f(0, 4, 2.0, p85), rel=1e-14)
    with pytest.raises(DomainError):
        delta_f(5, 4, 2.0, p85)


@pytest.mark.parametrize("kind", ["yule", "binary"])
def test_slepian_envelope_brackets_speed(p85, kind):
    lower, upper = slepian_envelope(10.0, p85, kind)
    m = m_binary(10.0, p85) if kind == "binary" else m_yule(10.0, p85)
    assert 0.0 < lower < m < upper


def test_experiment_validation(p85):
    with pytest.raises(DomainError):
        MaxExperiment(p=p85, tree_kind="ternary", t_list=(2.0,), replicas=10)
    with pytest.raises(DomainError):
        MaxExperiment(p=p85, tree_kind="yule", t_list=(2.0,), replicas=10, method="hosking")
    with pytest.raises(DomainError):
        MaxExperiment(p=p85, tree_kind="yule", t_list=(0.0,), replicas=10)
    with pytest.raises(DomainError):
        estimate_max(MaxExperiment(p=p85, tree_kind="binary", t_list=(2.5,), replicas=10))


def test_estimate_max_independent_of_workers(p85):
    exp = MaxExperiment(p=p85, tree_kind="yule", t_list=(2.0, 3.0), replicas=40, seed=1)
    try:
        set_worker_count(1)
        serial = estimate_max(exp)
        set_worker_count(4)
        parallel = estimate_max(exp)
    finally:
        set_worker_count(2)
    assert serial.rows == parallel.rows
    assert len(serial.summaries) == 2
    assert len(serial.rows) == 80
    assert all(s["replicas"] == 40 for s in serial.summaries)
    assert np.all(np.isfinite(serial.mean_ratios()))


def test_cholesky_and_grem_maxima_agree(p85):
    exp_grem = MaxExperiment(p=p85, tree_kind="binary", t_list=(3.0,), replicas=300, seed=4)
    exp_chol = MaxExperiment(p=p85, tree_kind="binary", t_list=(3.0,), replicas=300, seed=4, method="cholesky")
    grem = estimate_max(exp_grem).summaries[0]
    chol = estimate_max(exp_chol).summaries[0]
    se = math.hypot(grem["se_ratio"], chol["se_ratio"])
    assert abs(grem["mean_ratio"] - chol["mean_ratio"]) < 5.0 * se


def test_sampler_agreement(p85):
    disc = discretize(binary_tree(3), 3)
    _, pvalue = sampler_agreement(disc, 3, 3.0, p85, replicas=2000, seed=3)
    assert pvalue > 1e-3


def test_bracket_orders_the_maxima(p85):
    result = bracket_check(p85, 4.0, 4, replicas=200, seed=6)
    assert result["mean_left"] - result["mean_right"] > -4.0 * result["se_difference"]


@pytest.mark.slow
def test_yule_maximum_ratio_trend():
    p = make_hurst_params(0.85)
    exp = MaxExperiment(p=p, tree_kind="yule", t_list=(4.0, 6.0, 8.0, 10.0), replicas=200, seed=13)
    result = estimate_max(exp)
    ratios = result.mean_ratios()
    spread = result.std_ratios()
    # the discrete maximum approaches the leading order from below
    assert np.all(np.diff(ratios) > 0.0)
    assert np.all(np.diff(spread) < 0.0)
    assert np.all((ratios > 0.4) & (ratios < 1.05))
