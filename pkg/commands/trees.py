from bfbm.extremes import MAX_TREE_KINDS, grow_tree
from bfbm.tree import name, to_rows
from utils.report_factory import ReportFactory
from utils.rng import ReplicaRNG
from utils.run_config import SEED_OPTION, Cog, Option, RunConfig, lab_command


class Trees(Cog):
    """Branching time-trees"""

    def __init__(self, lab):
        self.lab = lab

    @lab_command(
        name="sample-tree",
        description="Yule, binary or single-branch tree as branch_id,parent_id,birth_time",
        options=[
            Option("kind", str, "yule", "tree kind", choices=MAX_TREE_KINDS),
            Option("T", float, 5.0, "horizon of the tree"),
            SEED_OPTION,
        ],
        stochastic=lambda params: params["kind"] == "yule",
    )
    def sample_tree(self, config: RunConfig) -> int:
        seed = 0 if config.seed is None else config.seed
        tree = grow_tree(config["kind"], config["T"], ReplicaRNG(seed, (0,)))
        rows = to_rows(tree)
        if config.fmt == "json":
            ReportFactory.emit_document(config, [
                {"branch_id": b, "parent_id": parent, "birth_time": birth, "name": name(tree, b)}
                for b, parent, birth in rows
            ])
        else:
            ReportFactory.emit_table(config, ["branch_id", "parent_id", "birth_time"], rows)
        return 0


def setup(lab) -> None:
    """Setup the Trees cog"""
    lab.add_cog(Trees(lab))
