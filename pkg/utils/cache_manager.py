import logging
import threading
from collections import OrderedDict
from typing import Any, Callable, Dict, Tuple


class LRUCache:
    """Thread-safe LRU cache for pure numerical functions"""
    def __init__(self, name: str, maxsize: int = 128):
        """
        Initialize the cache

        Parameters:
        -----------
        name: Name of this cache (for stats and logging)
        maxsize: Maximum number of entries in the cache
        """
        self.name = name
        self.cache: "OrderedDict[str, Any]" = OrderedDict()
        self.maxsize = maxsize
        self._lock = threading.RLock()

        self.hits = 0
        self.misses = 0
        self.evictions = 0

    def _generate_key(self, func_name: str, args: Tuple, kwargs: Dict[str, Any]) -> str:
        """Generate a unique key for the function call"""
        # repr keeps every float digit, so distinct arguments never share a key
        args_str = ','.join(repr(arg) for arg in args)
        kwargs_str = ','.join(f"{k}={v!r}" for k, v in sorted(kwargs.items()))
        return f"{func_name}:{args_str}:{kwargs_str}"

    def get_or_compute(self, func: Callable, *args, **kwargs) -> Any:
        """
        Get a value from the cache or compute it if not present

        Parameters:
        -----------
        func: Function to call if value not in cache
        *args: Positional arguments for the function
        **kwargs: Keyword arguments for the function

        Returns:
        --------
        The cached or computed value
        """
        cache_key = self._generate_key(func.__name__, args, kwargs)

        with self._lock:
            if cache_key in self.cache:
                self.hits += 1
                self.cache.move_to_end(cache_key)
                return self.cache[cache_key]
            self.misses += 1

        # computed unlocked so fills of different keys run in parallel
        try:
            logging.debug(f"Cache miss for {cache_key}, computing...")
            result = func(*args, **kwargs)
        except Exception as e:
            logging.error(f"Error computing value for {self.name} cache: {e}")
            raise

        with self._lock:
            if cache_key in self.cache:
                # another thread filled it first; keep one object per key
                self.cache.move_to_end(cache_key)
                return self.cache[cache_key]
            self.cache[cache_key] = result
            while len(self.cache) > self.maxsize:
                self.cache.popitem(last=False)
                self.evictions += 1
            return result

    def clear(self) -> None:
        """Clear all cache entries and statistics"""
        with self._lock:
            self.cache.clear()
            self.hits = 0
            self.misses = 0
            self.evictions = 0

    def get_stats(self) -> Dict[str, Any]:
        """Get cache statistics"""
        with self._lock:
            total_requests = self.hits + self.misses
            return {
                "entries": len(self.cache),
                "max_size": self.maxsize,
                "hits": self.hits,
                "misses": self.misses,
                "evictions": self.evictions,
                "hit_ratio": self.hits / total_requests if total_requests > 0 else 0.0,
            }


# Renewal tables are large; a handful of alphas per run is typical
renewal_cache = LRUCache(name="renewal", maxsize=8)

# Covariance quadratures are cheap to store and expensive to redo
quadrature_cache = LRUCache(name="quadrature", maxsize=20000)


def log_cache_stats() -> None:
    """Log hit/miss statistics of every global cache"""
    for cache in (renewal_cache, quadrature_cache):
        stats = cache.get_stats()
        logging.debug(f"{cache.name} cache: {stats['entries']} entries, "
                      f"{stats['hits']} hits, {stats['misses']} misses")


def all_cache_stats() -> Dict[str, Dict[str, Any]]:
    return {cache.name: cache.get_stats() for cache in (renewal_cache, quadrature_cache)}
