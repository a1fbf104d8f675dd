import logging

from bfbm.extremes import MAX_METHODS, MAX_TREE_KINDS, MaxExperiment, estimate_max, slepian_envelope
from utils.report_factory import ReportFactory
from utils.run_config import HURST_OPTIONS, SEED_OPTION, Cog, Option, RunConfig, float_list, lab_command


class Maximum(Cog):
    """Maximum of branching fBM against its leading order"""

    def __init__(self, lab):
        self.lab = lab

    @lab_command(
        name="estimate-max",
        description="Monte Carlo M(t)/m(t) per time; CSV rows plus a JSON summary",
        options=HURST_OPTIONS + [
            Option("tree", str, "yule", "tree kind", choices=MAX_TREE_KINDS),
            Option("t-list", float_list, "4,6,8,10", "comma-separated evaluation times"),
            Option("replicas", int, 200, "replicas per time"),
            Option("method", str, "grem", "sampler", choices=MAX_METHODS),
            Option("K", int, None, "levels of the discretised tree (default ceil(t))"),
            Option("direction", str, "left", "shift of branching events onto the level grid",
                   choices=("left", "right")),
            SEED_OPTION,
        ],
        stochastic=True,
    )
    def estimate_max(self, config: RunConfig) -> int:
        p = config.hurst()
        exp = MaxExperiment(p=p, tree_kind=config["tree"], t_list=tuple(config["t-list"]),
                            replicas=config["replicas"], method=config["method"], seed=config.seed,
                            K=config["K"], direction=config["direction"])
        result = estimate_max(exp)
        for summary in result.summaries:
            lower, upper = slepian_envelope(summary["t"], p, exp.tree_kind)
            summary["envelope"] = {"lower": lower, "upper": upper}

        if config.fmt == "json":
            ReportFactory.emit_document(config, result.summaries)
            return 0
        ReportFactory.emit_table(config, ["t", "replica", "M", "ratio"], result.rows)
        sidecar = ReportFactory.sidecar_path(config.out)
        if sidecar is not None:
            ReportFactory.emit_document(config, result.summaries, path=sidecar)
            logging.info(f"Wrote maximum summary to {sidecar}")
        return 0


def setup(lab) -> None:
    """Setup the Maximum cog"""
    lab.add_cog(Maximum(lab))
