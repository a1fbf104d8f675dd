import time

from bfbm import __version__
from utils.cache_manager import all_cache_stats
from utils.report_factory import ReportFactory
from utils.resources import available_memory_bytes, process_memory_mb
from utils.run_config import Cog, RunConfig, lab_command
from utils.workers import worker_count


class Statistics(Cog):
    """Commands for viewing lab statistics"""

    def __init__(self, lab):
        self.lab = lab
        self.start_time = getattr(lab, "start_time", time.time())

    @lab_command(
        name="stats",
        description="Show cache statistics, worker count and memory usage",
        default_format="json",
    )
    def stats(self, config: RunConfig) -> int:
        """Display lab statistics and cache information"""
        payload = {
            "version": __version__,
            "commands": sorted(getattr(self.lab, "commands", {})),
            "workers": worker_count(),
            "uptime": self._get_uptime(),
            "memory_mb": round(process_memory_mb(), 1),
            "available_memory_mb": round(available_memory_bytes() / 1024 / 1024, 1),
            "caches": all_cache_stats(),
        }
        if config.fmt == "csv":
            rows = [(name, s["entries"], s["hits"], s["misses"], s["hit_ratio"])
                    for name, s in payload["caches"].items()]
            ReportFactory.emit_table(config, ["cache", "entries", "hits", "misses", "hit_ratio"], rows)
        else:
            ReportFactory.emit_document(config, payload)
        return 0

    def _get_uptime(self) -> str:
        return ReportFactory.format_duration(time.time() - self.start_time)


def setup(lab) -> None:
    """Setup the Statistics cog"""
    lab.add_cog(Statistics(lab))
