import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def uf_find(parent, x):
    """Root of x; path halving keeps the trees flat"""
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@njit(cache=True, nogil=True)
def uf_union(parent, size, a, b):
    """Merge the classes of a and b, smaller under larger; returns the new root"""
    ra = uf_find(parent, a)
    rb = uf_find(parent, b)
    if ra == rb:
        return ra
    if size[ra] < size[rb]:
        ra, rb = rb, ra
    parent[rb] = ra
    size[ra] += size[rb]
    return ra


@njit(cache=True, nogil=True)
def uf_roots(parent, count):
    """Root of every element 0..count-1"""
    roots = np.empty(count, dtype=np.int64)
    for x in range(count):
        roots[x] = uf_find(parent, x)
    return roots


def make_forest(capacity: int):
    """Fresh (parent, size) arrays of singletons"""
    return np.arange(capacity, dtype=np.int64), np.ones(capacity, dtype=np.int64)


def count_components(roots: np.ndarray) -> int:
    return int(np.unique(roots).size)
