import math

from bfbm.errors import DomainError
from bfbm.extremes import MAX_TREE_KINDS, grow_tree
from bfbm.gaussian_bfbm import (COVARIANCE_MODES, covariance, endpoint_nodes, rho, sample_cholesky,
                                sample_grem_endpoint, sample_whitenoise_tree)
from bfbm.tree import discretize
from utils.report_factory import ReportFactory
from utils.rng import ENTITY_GAUSSIAN, ReplicaRNG
from utils.run_config import HURST_OPTIONS, SEED_OPTION, Cog, Option, RunConfig, lab_command

SAMPLER_CHOICES = ("cholesky", "whitenoise", "grem")


class Sampling(Cog):
    """Exact Gaussian samplers of branching fBM and its covariance"""

    def __init__(self, lab):
        self.lab = lab

    @lab_command(
        name="sample-bfbm",
        description="Endpoint values B_b(t) on one tree, one block of rows per replica",
        options=HURST_OPTIONS + [
            Option("method", str, "cholesky", "sampler", choices=SAMPLER_CHOICES),
            Option("tree", str, "yule", "tree kind", choices=MAX_TREE_KINDS),
            Option("T", float, 3.0, "horizon of the tree"),
            Option("t", float, None, "evaluation time (default T)"),
            Option("replicas", int, 100, "joint draws"),
            Option("K", int, None, "levels of the GREM grid (default ceil(t))"),
            Option("direction", str, "left", "shift of branching events onto the GREM grid",
                   choices=("left", "right")),
            Option("dt", float, None, "white-noise cell width (default t/200)"),
            Option("depth", float, None, "white-noise past depth (default 50 t)"),
            SEED_OPTION,
        ],
        stochastic=True,
    )
    def sample_bfbm(self, config: RunConfig) -> int:
        p = config.hurst()
        T = config["T"]
        t = T if config["t"] is None else config["t"]
        if not 0.0 < t <= T:
            raise DomainError(f"evaluation time must lie in (0, {T}], got {t}")
        replicas = config["replicas"]
        rng = ReplicaRNG(config.seed, (0,))
        tree = grow_tree(config["tree"], T, rng)
        gauss = rng.fork(ENTITY_GAUSSIAN)

        method = config["method"]
        if method == "cholesky":
            sample = sample_cholesky(tree, endpoint_nodes(tree, t), p, gauss, size=replicas)
        elif method == "whitenoise":
            sample = sample_whitenoise_tree(tree, config["dt"], t, config["depth"], p, gauss, size=replicas)
        else:
            K = config["K"] if config["K"] is not None else max(1, math.ceil(t))
            tree_disc = discretize(tree, K, t, config["direction"])
            sample = sample_grem_endpoint(tree_disc, K, t, p, gauss, size=replicas)

        if config.fmt == "json":
            ReportFactory.emit_document(config, {
                "branch_ids": [b for b, _ in sample.nodes],
                "t": t,
                "info": sample.info,
                "values": sample.values,
            })
            return 0
        rows = ((r, b, float(sample.values[r, k]))
                for r in range(sample.values.shape[0]) for k, (b, _) in enumerate(sample.nodes))
        ReportFactory.emit_table(config, ["replica", "branch_id", "value"], rows)
        return 0

    @lab_command(
        name="covariance",
        description="Covariance rho(t1, t2, s) of two branches split at s",
        options=HURST_OPTIONS + [
            Option("t1", float, 1.0, "time on the first branch"),
            Option("t2", float, 1.0, "time on the second branch"),
            Option("s", float, 0.5, "split time"),
            Option("mode", str, "closed", "closed form, kernel quadrature or urn-limit quadrature",
                   choices=COVARIANCE_MODES),
        ],
        default_format="json",
    )
    def covariance(self, config: RunConfig) -> int:
        """est_error of a quadrature route is its distance to the closed form"""
        p = config.hurst()
        t1, t2, s = config["t1"], config["t2"], config["s"]
        value = covariance(t1, t2, s, p, config["mode"])
        est_error = 0.0 if config["mode"] == "closed" else abs(value - rho(t1, t2, s, p))
        if config.fmt == "csv":
            ReportFactory.emit_table(config, ["value", "est_error"], [(value, est_error)])
        else:
            ReportFactory.emit_document(config, {"value": value, "est_error": est_error})
        return 0


def setup(lab) -> None:
    """Setup the Sampling cog"""
    lab.add_cog(Sampling(lab))
