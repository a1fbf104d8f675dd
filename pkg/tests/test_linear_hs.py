import numpy as np
import pytest
from scipy.stats import chi2_contingency

from bfbm.errors import DomainError
from bfbm.linear_hs import (DEFAULT_WINDOW_FACTOR, UrnConfig, coalescence_exact, coalescence_mc, rescaled_path,
                            simulate_linear, truncation_bias, variance_ratio)
from bfbm.union_find import count_components, make_forest, uf_find, uf_roots, uf_union
from bfbm.urn import branch_slots, past_offset
from utils.rng import ReplicaRNG


def test_union_find_components():
    parent, size = make_forest(6)
    uf_union(parent, size, 0, 1)
    uf_union(parent, size, 2, 3)
    uf_union(parent, size, 1, 3)
    assert uf_find(parent, 0) == uf_find(parent, 2)
    assert count_components(uf_roots(parent, 6)) == 3


def test_past_offsets_are_a_function_of_position():
    key = ReplicaRNG(3).hash_key()
    first = [past_offset(key, -pos, 0.35) for pos in range(50)]
    again = [past_offset(key, -pos, 0.35) for pos in reversed(range(50))][::-1]
    assert first == again
    assert min(first) >= 1


def test_branch_slots():
    first, total = branch_slots(np.array([0, 5, 5, 8]), 10)
    assert first.tolist() == [0, 10, 15, 20]
    assert total == 22


def test_config_defaults():
    cfg = UrnConfig(alpha=0.35, n_total=100)
    assert cfg.window == DEFAULT_WINDOW_FACTOR * 100
    assert cfg.n == 100
    assert UrnConfig(alpha=0.35, n_total=100, steps_per_unit=10).n == 10
    with pytest.raises(DomainError):
        UrnConfig(alpha=0.5, n_total=100)
    with pytest.raises(DomainError):
        UrnConfig(alpha=0.35, n_total=0)


def test_unit_offsets_form_one_class():
    n = 50
    cfg = UrnConfig(alpha=0.35, n_total=n)
    r = simulate_linear(cfg, ReplicaRNG(1), offsets=np.ones(n, dtype=np.int64))
    assert r.components() == 1
    assert r.same_component(1, n)
    assert np.abs(r.S).tolist() == list(range(n + 1))


def test_offsets_beyond_window_found_new_classes():
    n = 50
    cfg = UrnConfig(alpha=0.35, n_total=n, window_past=10)
    r = simulate_linear(cfg, ReplicaRNG(1), offsets=np.full(n, 10 ** 6, dtype=np.int64))
    assert r.components() == n
    assert r.n_past == 0


def test_forced_offsets_are_validated():
    cfg = UrnConfig(alpha=0.35, n_total=5)
    with pytest.raises(DomainError):
        simulate_linear(cfg, ReplicaRNG(1), offsets=np.zeros(5, dtype=np.int64))


def test_same_seed_same_walk():
    cfg = UrnConfig(alpha=0.35, n_total=500)
    a = simulate_linear(cfg, ReplicaRNG(7, (0,)))
    b = simulate_linear(cfg, ReplicaRNG(7, (0,)))
    c = simulate_linear(cfg, ReplicaRNG(8, (0,)))
    np.testing.assert_array_equal(a.S, b.S)
    assert not np.array_equal(a.S, c.S)
    assert np.all(np.abs(np.diff(a.S)) == 1)


def test_rescaled_path(p35, tbl35):
    cfg = UrnConfig(alpha=0.35, n_total=200, steps_per_unit=100)
    r = simulate_linear(cfg, ReplicaRNG(2))
    path = rescaled_path(r, p35, [0.0, 1.0, 2.0], tbl35)
    assert path[0] == 0.0
    assert path[2] == pytest.approx(r.S[-1] / tbl35.scale(100), rel=1e-14)
    with pytest.raises(DomainError):
        rescaled_path(r, p35, [2.5], tbl35)


def test_coalescence_exact_shape(tbl35):
    assert coalescence_exact(0, 0, tbl35) == pytest.approx(1.0, rel=1e-9)
    values = [coalescence_exact(0, d, tbl35) for d in (1, 2, 8, 64)]
    assert all(0.0 < v < 1.0 for v in values)
    assert values == sorted(values, reverse=True)


def test_truncation_bias_decreases(tbl35):
    assert truncation_bias(tbl35, 10) > truncation_bias(tbl35, 1000) > truncation_bias(tbl35, 10 ** 6) > 0.0


def test_coalescence_frequency_matches_exact(tbl35):
    cfg = UrnConfig(alpha=0.35, n_total=20)
    p_hat, se = coalescence_mc(5, 9, cfg, replicas=2000, seed=11)
    exact = coalescence_exact(0, 4, tbl35)
    assert abs(p_hat - exact) <= 4.0 * se + truncation_bias(tbl35, cfg.window)


def test_coalescence_mc_index_range():
    cfg = UrnConfig(alpha=0.35, n_total=20)
    with pytest.raises(DomainError):
        coalescence_mc(0, 3, cfg, replicas=10, seed=1)


@pytest.mark.slow
def test_variance_ratio_near_one(tbl35):
    cfg = UrnConfig(alpha=0.35, n_total=10_000)
    ratio, se = variance_ratio(cfg, replicas=2000, seed=5, tbl=tbl35)
    assert 0.9 <= ratio <= 1.1
    assert se < 0.05


def test_far_coalescence_asymptotics(tbl35):
    n = 10_000
    assert coalescence_exact(0, n, tbl35) * n ** (1.0 - 0.7) / tbl35.c1 == pytest.approx(1.0, abs=0.01)


def test_type_covariance_is_coalescence(tbl35):
    cfg = UrnConfig(alpha=0.35, n_total=30)
    replicas = 3000
    types = np.array([simulate_linear(cfg, ReplicaRNG(23, (r, 0))).type_ for r in range(replicas)],
                     dtype=np.float64)
    bias = truncation_bias(tbl35, cfg.window)
    for i, j in [(5, 9), (20, 24), (3, 15)]:
        prod = types[:, i - 1] * types[:, j - 1]
        se = prod.std(ddof=1) / np.sqrt(replicas)
        assert abs(prod.mean() - coalescence_exact(0, j - i, tbl35)) <= 4.0 * se + bias

    # the law of a pair of neighbouring types does not depend on where the pair sits
    def pattern_counts(k):
        code = (types[:, k] > 0).astype(int) * 2 + (types[:, k + 1] > 0).astype(int)
        return np.bincount(code, minlength=4)

    _, pvalue, _, _ = chi2_contingency(np.vstack([pattern_counts(0), pattern_counts(20)]))
    assert pvalue > 1e-3
