import logging

from bfbm.renewal import build_renewal_table
from utils.report_factory import ReportFactory
from utils.run_config import HURST_OPTIONS, Cog, Option, RunConfig, lab_command


class Renewal(Cog):
    """Renewal sequence of the urn offsets"""

    def __init__(self, lab):
        self.lab = lab

    @lab_command(
        name="renewal",
        description="Renewal sequence q_0..q_N with the urn constants",
        options=HURST_OPTIONS + [Option("n-max", int, 100_000, "last index N of the table")],
    )
    def renewal(self, config: RunConfig) -> int:
        """
        CSV n,q_n; the constants go to a JSON sidecar next to the CSV file

        Parameters:
        -----------
        config: alpha or H, n_max
        """
        p = config.hurst()
        tbl = build_renewal_table(p.alpha, config["n-max"])
        summary = tbl.summary()

        if config.fmt == "json":
            ReportFactory.emit_document(config, summary)
            return 0

        ReportFactory.emit_table(config, ["n", "q_n"], ((n, float(q)) for n, q in enumerate(tbl.q)))
        sidecar = ReportFactory.sidecar_path(config.out)
        if sidecar is not None:
            ReportFactory.emit_document(config, summary, path=sidecar)
            logging.info(f"Wrote renewal constants to {sidecar}")
        else:
            logging.info(f"Renewal constants: {summary}")
        return 0


def setup(lab) -> None:
    """Setup the Renewal cog"""
    lab.add_cog(Renewal(lab))
