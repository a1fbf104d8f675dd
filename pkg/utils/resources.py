import os
import logging

import psutil

from bfbm.errors import BudgetExceededError

# Share of the currently available memory a single request may claim
MEMORY_FRACTION = 0.5


def process_memory_mb() -> float:
    """Resident set size of this process in MB"""
    process = psutil.Process(os.getpid())
    return process.memory_info().rss / 1024 / 1024


def available_memory_bytes() -> int:
    return int(psutil.virtual_memory().available)


def check_budget(estimated_bytes: int, what: str, fraction: float = MEMORY_FRACTION) -> None:
    """Refuse a request whose estimated memory exceeds fraction of the available memory"""
    available = available_memory_bytes()
    allowed = int(fraction * available)
    if estimated_bytes > allowed:
        raise BudgetExceededError(
            f"{what} needs about {estimated_bytes / 2**20:.1f} MB, "
            f"only {allowed / 2**20:.1f} MB may be used",
            estimated_bytes=int(estimated_bytes),
            available_bytes=available,
        )
    logging.debug(f"{what}: estimated {estimated_bytes / 2**20:.1f} MB of {allowed / 2**20:.1f} MB allowed")
