import json
import threading

import numpy as np
import pytest

from bfbm.errors import BudgetExceededError, UsageError
from utils.cache_manager import LRUCache
from utils.report_factory import ReportFactory
from utils.resources import check_budget, process_memory_mb
from utils.rng import ReplicaRNG
from utils.run_config import (HURST_OPTIONS, SEED_OPTION, Cog, Option, RunConfig, float_list, lab_command,
                              load_config_file, resolve_config)
from utils.workers import map_replicas, set_worker_count


def square(x):
    return x * x


def test_cache_hits_and_misses():
    cache = LRUCache(name="test", maxsize=2)
    assert cache.get_or_compute(square, 3) == 9
    assert cache.get_or_compute(square, 3) == 9
    stats = cache.get_stats()
    assert (stats["hits"], stats["misses"], stats["entries"]) == (1, 1, 1)
    assert stats["hit_ratio"] == 0.5


def test_cache_evicts_least_recent():
    cache = LRUCache(name="test", maxsize=2)
    for x in (1, 2, 1, 3):
        cache.get_or_compute(square, x)
    assert cache.get_stats()["evictions"] == 1
    cache.get_or_compute(square, 1)
    assert cache.get_stats()["hits"] == 2
    cache.get_or_compute(square, 2)
    assert cache.get_stats()["misses"] == 4
    cache.clear()
    assert cache.get_stats() == {"entries": 0, "max_size": 2, "hits": 0, "misses": 0, "evictions": 0,
                                 "hit_ratio": 0.0}


def test_cache_keys_keep_float_digits():
    cache = LRUCache(name="test", maxsize=4)
    cache.get_or_compute(square, 0.1)
    cache.get_or_compute(square, 0.10000000000000002)
    cache.get_or_compute(square, 0.1)
    assert cache.get_stats()["entries"] == 2


def test_cache_errors_propagate():
    cache = LRUCache(name="test")

    def broken():
        raise RuntimeError("boom")

    with pytest.raises(RuntimeError):
        cache.get_or_compute(broken)
    assert cache.get_stats()["entries"] == 0


def test_cache_fills_different_keys_concurrently():
    cache = LRUCache(name="test", maxsize=4)
    barrier = threading.Barrier(2, timeout=5.0)
    results, errors = {}, []

    def meet(x):
        # both fills must be inside the compute step at once
        barrier.wait()
        return x * x

    def fill(x):
        try:
            results[x] = cache.get_or_compute(meet, x)
        except threading.BrokenBarrierError as e:
            errors.append(e)

    threads = [threading.Thread(target=fill, args=(x,)) for x in (2, 3)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    assert errors == []
    assert results == {2: 4, 3: 9}
    stats = cache.get_stats()
    assert (stats["misses"], stats["entries"]) == (2, 2)


def test_replica_streams():
    a = ReplicaRNG(5, (1, 2)).normal(4)
    b = ReplicaRNG(5, (1, 2)).normal(4)
    c = ReplicaRNG(5, (1, 3)).normal(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    np.testing.assert_array_equal(ReplicaRNG(5, (1,)).fork(2).normal(4), a)
    u = ReplicaRNG(1).uniform_open(1000)
    assert np.all((u > 0.0) & (u <= 1.0))
    assert set(ReplicaRNG(1).signs(100).tolist()) <= {-1, 1}
    with pytest.raises(ValueError):
        ReplicaRNG(None)


def draw(rng, scale):
    return scale * float(rng.normal())


def test_map_replicas_order_independent_of_workers():
    try:
        set_worker_count(1)
        serial = map_replicas(draw, 16, 3, 2.0)
        set_worker_count(4)
        parallel = map_replicas(draw, 16, 3, 2.0)
    finally:
        set_worker_count(2)
    assert serial == parallel
    assert serial[5] == 2.0 * float(ReplicaRNG(3, (5, 0)).normal())
    assert map_replicas(draw, 4, 3, 1.0, entity=1) != map_replicas(draw, 4, 3, 1.0)


def test_budget_guard():
    check_budget(1024, "tiny request")
    with pytest.raises(BudgetExceededError) as info:
        check_budget(1 << 62, "huge request")
    assert info.value.estimated_bytes == 1 << 62
    assert process_memory_mb() > 0.0


def test_value_formatting():
    fmt = ReportFactory.format_value
    assert fmt(0.1) == "0.1"
    assert fmt(1e-20) == "1e-20"
    assert fmt(np.float64(2.5)) == "2.5"
    assert fmt(np.int64(7)) == "7"
    assert fmt(True) == "true"
    assert fmt(None) == ""
    assert fmt(float("inf")) == "inf"


def test_csv_header():
    config = {"H": 0.85, "seed": 3, "workers": 8, "out": "x.csv", "format": "csv"}
    header = ReportFactory.create_header("renewal", config, 3)
    assert header[0].startswith("# bfbm-lab ")
    assert header[1] == "# command: renewal"
    assert header[2] == '# config: {"H":0.85,"format":"csv","seed":3}'
    assert header[3] == "# seed: 3"
    text = ReportFactory.render_csv(header, ["n", "q_n"], [(0, 1.0), (1, 0.5)])
    assert text.splitlines()[4:] == ["n,q_n", "0,1.0", "1,0.5"]


def test_json_document():
    doc = ReportFactory.create_json_document("covariance", {"t1": 1.0}, None,
                                             {"value": np.float64(0.5), "inf": float("inf"), "v": np.arange(2)})
    assert list(doc) == ["meta", "result"]
    assert doc["result"] == {"value": 0.5, "inf": "inf", "v": [0, 1]}
    json.loads(ReportFactory.render_json(doc))


def test_sidecar_path():
    assert ReportFactory.sidecar_path(None) is None
    assert ReportFactory.sidecar_path("-") is None
    assert ReportFactory.sidecar_path("out/max.csv") == "out/max.json"
    assert ReportFactory.sidecar_path("max.json") == "max.json.json"


def test_duration_format():
    assert ReportFactory.format_duration(59) == "0:59"
    assert ReportFactory.format_duration(3725) == "1:02:05"
    assert ReportFactory.format_duration(float("nan")) == "Unknown"


OPTIONS = HURST_OPTIONS + [
    Option("T", float, 5.0, "horizon"),
    Option("kind", str, "yule", "tree kind", choices=("yule", "binary")),
    Option("sweep", bool, False, "extra points", flag=True),
    SEED_OPTION,
]


def test_resolve_precedence():
    file_values = {"T": "3.0", "kind": "binary", "sweep": "true"}
    config = resolve_config("demo", OPTIONS, {"T": "2.5", "H": "0.75"}, file_values)
    assert config["T"] == 2.5
    assert config["kind"] == "binary"
    assert config["sweep"] is True
    assert config.hurst().H == 0.75
    assert config.fmt == "csv"
    assert resolve_config("demo", OPTIONS, {}, {}).params["T"] == 5.0


def test_resolve_errors():
    with pytest.raises(UsageError):
        resolve_config("demo", OPTIONS, {}, {"colour": "red"})
    with pytest.raises(UsageError):
        resolve_config("demo", OPTIONS, {"kind": "ternary"}, {})
    with pytest.raises(UsageError):
        resolve_config("demo", OPTIONS, {"T": "abc"}, {})
    with pytest.raises(UsageError):
        resolve_config("demo", OPTIONS, {}, {}, stochastic=True)
    with pytest.raises(UsageError):
        resolve_config("demo", OPTIONS, {"format": "xml"}, {})
    config = resolve_config("demo", OPTIONS, {"kind": "binary"}, {}, stochastic=lambda p: p["kind"] == "yule")
    assert config.seed is None


def test_hurst_needs_exactly_one_parameter():
    with pytest.raises(UsageError):
        RunConfig("demo", {"H": None, "alpha": None}).hurst()
    with pytest.raises(UsageError):
        RunConfig("demo", {"H": 0.75, "alpha": 0.25}).hurst()
    with pytest.raises(UsageError):
        RunConfig("demo", {"H": 1.5, "alpha": None}).hurst()
    assert RunConfig("demo", {"H": None, "alpha": 0.25}).hurst().H == 0.75


def test_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("T = 3\nsteps-per-unit = 50\n")
    assert load_config_file(str(path)) == {"T": "3", "steps_per_unit": "50"}
    with pytest.raises(UsageError):
        load_config_file(str(tmp_path / "missing.cfg"))


def test_float_list():
    assert float_list("4,6, 8") == [4.0, 6.0, 8.0]
    with pytest.raises(UsageError):
        float_list("4,x")


class DemoCog(Cog):
    @lab_command(name="demo", description="demo command", options=OPTIONS, stochastic=True)
    def demo(self, config):
        return 0

    def helper(self):
        return 1


def test_cog_collects_commands():
    specs = DemoCog().get_commands()
    assert [s.name for s in specs] == ["demo"]
    assert specs[0].stochastic is True
    assert specs[0].callback(RunConfig("demo")) == 0
