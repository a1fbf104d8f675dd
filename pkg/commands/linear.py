import numpy as np

from bfbm.linear_hs import DEFAULT_TABLE_N, UrnConfig, rescaled_path, simulate_linear
from bfbm.renewal import build_renewal_table
from utils.report_factory import ReportFactory
from utils.rng import ReplicaRNG
from utils.run_config import HURST_OPTIONS, SEED_OPTION, Cog, Option, RunConfig, lab_command
from utils.workers import map_replicas


def _walk_replica(rng: ReplicaRNG, cfg: UrnConfig, p, t_grid: np.ndarray, tbl) -> np.ndarray:
    return rescaled_path(simulate_linear(cfg, rng), p, t_grid, tbl)


class Linear(Cog):
    """The urn over the integers and its rescaled walk"""

    def __init__(self, lab):
        self.lab = lab

    @lab_command(
        name="simulate-linear",
        description="Rescaled urn walks S(n t)/c(n), one block of rows per replica",
        options=HURST_OPTIONS + [
            Option("n", int, 1000, "individuals simulated forward"),
            Option("steps-per-unit", int, None, "steps per unit time (default n, so t runs over [0, 1])"),
            Option("window-past", int, None, "depth of the followed past (default 10000 n)"),
            Option("replicas", int, 1, "independent walks"),
            Option("points", int, None, "output times per walk (default every step)"),
            SEED_OPTION,
        ],
        stochastic=True,
    )
    def simulate_linear(self, config: RunConfig) -> int:
        p = config.hurst()
        cfg = UrnConfig(alpha=p.alpha, n_total=config["n"], window_past=config["window-past"],
                        steps_per_unit=config["steps-per-unit"], seed=config.seed)
        horizon = cfg.n_total / cfg.n
        points = config["points"]
        if points is None:
            t_grid = np.arange(cfg.n_total + 1) / cfg.n
        else:
            t_grid = np.linspace(0.0, horizon, max(int(points), 2))
        tbl = build_renewal_table(p.alpha, DEFAULT_TABLE_N)

        paths = map_replicas(_walk_replica, config["replicas"], config.seed, cfg, p, t_grid, tbl)
        rows = ((r, float(t), float(v)) for r, path in enumerate(paths) for t, v in zip(t_grid, path))
        if config.fmt == "json":
            ReportFactory.emit_document(config, {"t": t_grid, "paths": paths})
        else:
            ReportFactory.emit_table(config, ["replica", "t", "S_n_t"], rows)
        return 0


def setup(lab) -> None:
    """Setup the Linear cog"""
    lab.add_cog(Linear(lab))
