import logging

from bfbm.identities import STATUS_FAIL, run_suite
from utils.report_factory import ReportFactory
from utils.run_config import HURST_OPTIONS, Cog, Option, RunConfig, lab_command


class Identities(Cog):
    """Numerical verification of the covariance identities"""

    def __init__(self, lab):
        self.lab = lab

    @lab_command(
        name="verify-identities",
        description="Both sides of every covariance identity as a JSON array of reports",
        options=HURST_OPTIONS + [
            Option("tol", float, 1e-4, "absolute tolerance"),
            Option("sweep", bool, False, "add the parameter grid and the randomised cloud", flag=True),
        ],
        default_format="json",
    )
    def verify_identities(self, config: RunConfig) -> int:
        """Exit code 1 when any gating report fails; indeterminate reports only warn"""
        p = config.hurst()
        reports = run_suite(p, config["tol"], config["sweep"])
        if config.fmt == "csv":
            columns = ["identity", "params", "lhs", "rhs", "abs_diff", "tolerance", "status"]
            rows = ([r.tag, " ".join(f"{k}={v!r}" for k, v in r.params.items()), r.lhs, r.rhs,
                     r.abs_diff, r.tolerance, r.status] for r in reports)
            ReportFactory.emit_table(config, columns, rows)
        else:
            ReportFactory.emit_document(config, reports)
        failed = [r for r in reports if r.gating and r.status == STATUS_FAIL]
        if failed:
            logging.error(f"{len(failed)} of {len(reports)} identity checks failed")
            return 1
        return 0


def setup(lab) -> None:
    """Setup the Identities cog"""
    lab.add_cog(Identities(lab))
