import math
import logging

import numpy as np

from bfbm.branching_hs import branch_walk, simulate_tree_urn
from bfbm.extremes import MAX_TREE_KINDS, grow_tree
from bfbm.linear_hs import DEFAULT_TABLE_N
from bfbm.renewal import build_renewal_table
from bfbm.tree import GRID_TOLERANCE
from utils.report_factory import ReportFactory
from utils.rng import ReplicaRNG
from utils.run_config import HURST_OPTIONS, SEED_OPTION, Cog, Option, RunConfig, lab_command

UNIT_CHOICES = ("walk", "renewal")


def branch_times(birth: float, T: float, points_per_unit: int) -> np.ndarray:
    """The birth time followed by the output grid points after it"""
    first = int(math.floor(birth * points_per_unit + GRID_TOLERANCE)) + 1
    last = int(math.floor(T * points_per_unit + GRID_TOLERANCE))
    grid = np.arange(first, last + 1) / points_per_unit
    return np.concatenate(([birth], grid[grid > birth]))


class Discrete(Cog):
    """The tree-indexed urn, the discrete approximation of branching fBM"""

    def __init__(self, lab):
        self.lab = lab

    @lab_command(
        name="simulate-bfbm-discrete",
        description="Branch walks of the tree-indexed urn as branch_id,t,value",
        options=HURST_OPTIONS + [
            Option("steps-per-unit", int, 100, "urn steps per unit time"),
            Option("tree", str, "yule", "tree kind", choices=MAX_TREE_KINDS),
            Option("T", float, 4.0, "horizon"),
            Option("window-past", int, None, "depth of the followed past in steps"),
            Option("points-per-unit", int, 20, "output points per unit time on every branch"),
            Option("units", str, "walk", "walk: S/c(n); renewal: the same in units of (sum q_l^2)^(-1/2)",
                   choices=UNIT_CHOICES),
            SEED_OPTION,
        ],
        stochastic=True,
    )
    def simulate_bfbm_discrete(self, config: RunConfig) -> int:
        p = config.hurst()
        T = config["T"]
        rng = ReplicaRNG(config.seed, (0,))
        tree = grow_tree(config["tree"], T, rng)
        tbl = build_renewal_table(p.alpha, DEFAULT_TABLE_N)
        realization = simulate_tree_urn(tree, config["steps-per-unit"], p.alpha, config["window-past"], rng, tbl)
        factor = math.sqrt(tbl.q2_sum) if config["units"] == "renewal" else 1.0
        logging.info(f"Tree with {tree.size} branches, {realization.n_past} past individuals visited")

        rows = []
        for b in range(tree.size):
            times = branch_times(float(tree.birth[b]), T, config["points-per-unit"])
            values = branch_walk(realization, b, times) * factor
            rows.extend((b, float(t), float(v)) for t, v in zip(times, values))

        if config.fmt == "json":
            ReportFactory.emit_document(config, {
                "branches": tree.size,
                "scale": realization.scale,
                "rows": [{"branch_id": b, "t": t, "value": v} for b, t, v in rows],
            })
        else:
            ReportFactory.emit_table(config, ["branch_id", "t", "value"], rows)
        return 0


def setup(lab) -> None:
    """Setup the Discrete cog"""
    lab.add_cog(Discrete(lab))
