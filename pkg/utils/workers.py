import os
import time
import logging
import threading
import concurrent.futures
from typing import Any, Callable, List, Optional

from utils.rng import ReplicaRNG


def _read_worker_count() -> int:
    raw = os.getenv("BFBM_WORKERS")
    if raw is None or raw.strip() == "":
        return min(8, os.cpu_count() or 1)
    try:
        count = int(raw)
    except ValueError:
        raise ValueError(f"BFBM_WORKERS must be a positive integer, got {raw!r}")
    if count < 1:
        raise ValueError(f"BFBM_WORKERS must be a positive integer, got {raw!r}")
    return count


# Worker-thread count, the only setting read from the environment
BFBM_WORKERS = _read_worker_count()

_executor: Optional[concurrent.futures.ThreadPoolExecutor] = None
_executor_lock = threading.Lock()


def _get_executor() -> concurrent.futures.ThreadPoolExecutor:
    global _executor
    with _executor_lock:
        if _executor is None:
            _executor = concurrent.futures.ThreadPoolExecutor(
                max_workers=BFBM_WORKERS, thread_name_prefix="replica_worker"
            )
        return _executor


def worker_count() -> int:
    return BFBM_WORKERS


def set_worker_count(count: int) -> None:
    """Resize the pool; running work is allowed to finish first"""
    global BFBM_WORKERS
    if count < 1:
        raise ValueError(f"worker count must be positive, got {count}")
    shutdown_workers()
    BFBM_WORKERS = int(count)


def map_replicas(func: Callable[..., Any], count: int, seed: int, *args,
                 entity: int = 0, **kwargs) -> List[Any]:
    """
    Run func(rng, *args, **kwargs) once per replica on the worker pool

    Parameters:
    -----------
    func: replica body; receives its own ReplicaRNG as first argument
    count: number of replicas
    seed: master seed; replica r draws from the stream keyed (r, entity)
    entity: stream tag separating unrelated experiments under one seed

    Returns:
    --------
    Results in replica order, whatever the completion order
    """
    if count < 0:
        raise ValueError(f"replica count must be nonnegative, got {count}")
    start_time = time.time()
    rngs = [ReplicaRNG(seed, (r, entity)) for r in range(count)]

    if BFBM_WORKERS == 1 or count <= 1:
        results = [func(rng, *args, **kwargs) for rng in rngs]
    else:
        executor = _get_executor()
        futures = [executor.submit(func, rng, *args, **kwargs) for rng in rngs]
        try:
            results = [future.result() for future in futures]
        except Exception as e:
            logging.error(f"Replica failed in {getattr(func, '__name__', func)}: {e}")
            for future in futures:
                future.cancel()
            raise

    elapsed = time.time() - start_time
    if count > 1:
        logging.debug(f"{count} replicas of {getattr(func, '__name__', func)} took {elapsed:.2f}s")
    return results


def shutdown_workers() -> None:
    """Cleanup resources when shutting down"""
    global _executor
    with _executor_lock:
        if _executor is not None:
            logging.info("Shutting down replica workers")
            _executor.shutdown(wait=True)
            _executor = None
