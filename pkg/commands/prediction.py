from bfbm.prediction import PredictionSetup, euler_reflection_gap, prediction_refinement
from utils.report_factory import ReportFactory
from utils.run_config import HURST_OPTIONS, SEED_OPTION, Cog, Option, RunConfig, lab_command


class Prediction(Cog):
    """Prediction of the future of fBM from its past"""

    def __init__(self, lab):
        self.lab = lab

    @lab_command(
        name="predict-check",
        description="Gaussian conditioning against the prediction-kernel sum on a past grid",
        options=HURST_OPTIONS + [
            Option("t", float, 1.0, "prediction horizon"),
            Option("depth", float, None, "length of the observed past (default 50 t)"),
            Option("grid", int, 2000, "past grid points of the finest check"),
            Option("replicas", int, 200, "Monte Carlo past paths"),
            Option("tolerance", float, 0.05, "acceptable mean discrepancy relative to t^H"),
            Option("doublings", int, 0, "additional checks on grids halved this many times"),
            SEED_OPTION,
        ],
        stochastic=True,
        default_format="json",
    )
    def predict_check(self, config: RunConfig) -> int:
        """Exit code 1 when the finest grid misses the tolerance"""
        p = config.hurst()
        setup = PredictionSetup(p=p, t=config["t"], depth=config["depth"], grid=config["grid"],
                                replicas=config["replicas"], tolerance=config["tolerance"])
        reports = prediction_refinement(setup, max(0, config["doublings"]), config.seed)
        passed = bool(reports[-1]["passed"])
        payload = {"reports": reports, "euler_reflection_gap": euler_reflection_gap(p), "passed": passed}
        if config.fmt == "csv":
            columns = ["grid", "depth", "mean_abs_discrepancy", "exact_mean_abs_discrepancy", "relative", "passed"]
            ReportFactory.emit_table(config, columns, ([r[c] for c in columns] for r in reports))
        else:
            ReportFactory.emit_document(config, payload)
        return 0 if passed else 1


def setup(lab) -> None:
    """Setup the Prediction cog"""
    lab.add_cog(Prediction(lab))
