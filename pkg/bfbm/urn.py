"""Ancestral linking shared by the linear and the tree-indexed urn

Individuals live on the branches of a tree; branch b owns the global time indices
birth_idx[b]+1 .. i_max and borrows every smaller index from its ancestors. Slot numbers
enumerate the owned individuals branch by branch. Indices <= 0 form the common past; its
individuals are created only when an ancestral line reaches them, and their offsets come
from a counter-based hash of (stream key, position) so the realisation does not depend
on the order of visits.
"""
import math

import numpy as np
from numba import njit, types
from numba.typed import Dict

from .renewal import OFFSET_CAP
from .union_find import uf_find, uf_union

_LOG_OFFSET_CAP = math.log(OFFSET_CAP)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO_M53 = 2.0 ** -53


@njit(cache=True, nogil=True)
def splitmix64(x):
    z = x + _GOLDEN
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def past_offset(key, pos, alpha):
    """Offset of the past individual at position pos <= 0"""
    h = splitmix64(key ^ splitmix64(np.uint64(-pos)))
    u = (np.float64(h >> _S11) + 1.0) * _TWO_M53
    exponent = -math.log(u) / alpha
    if exponent >= _LOG_OFFSET_CAP:
        return OFFSET_CAP
    return np.int64(math.floor(math.exp(exponent)))


@njit(cache=True, nogil=True)
def _grow(arr, capacity, fill_identity):
    out = np.empty(capacity, dtype=np.int64)
    out[:arr.size] = arr
    for x in range(arr.size, capacity):
        out[x] = x if fill_identity else 1
    return out


@njit(cache=True, nogil=True)
def link_individuals(offsets, parent_branch, birth_idx, first_slot, i_max, window, key, alpha):
    """
    Union every individual with its ancestor

    Returns (roots, n_slots, n_past): the class root of every slot, the number of slots
    used (forward slots first, then past individuals in order of creation), and the
    number of past individuals created.
    """
    n_fwd = offsets.size
    capacity = n_fwd + max(1024, n_fwd // 4)
    parent = np.arange(capacity, dtype=np.int64)
    size = np.ones(capacity, dtype=np.int64)
    past = Dict.empty(key_type=types.int64, value_type=types.int64)
    n_slots = n_fwd

    for b in range(parent_branch.size):
        for i in range(birth_idx[b] + 1, i_max + 1):
            slot = first_slot[b] + (i - birth_idx[b] - 1)
            r = offsets[slot]
            if r > i + window:
                continue
            j = i - r
            bb = b
            while parent_branch[bb] >= 0 and j <= birth_idx[bb]:
                bb = parent_branch[bb]
            if j >= 1:
                uf_union(parent, size, slot, first_slot[bb] + (j - birth_idx[bb] - 1))
                continue

            current = slot
            pos = j
            while True:
                if pos in past:
                    uf_union(parent, size, current, past[pos])
                    break
                if n_slots == capacity:
                    capacity *= 2
                    parent = _grow(parent, capacity, True)
                    size = _grow(size, capacity, False)
                ps = n_slots
                n_slots += 1
                past[pos] = ps
                uf_union(parent, size, current, ps)
                r2 = past_offset(key, pos, alpha)
                if r2 > pos + window:
                    break
                current = ps
                pos = pos - r2

    roots = np.empty(n_slots, dtype=np.int64)
    for x in range(n_slots):
        roots[x] = uf_find(parent, x)
    return roots, n_slots, n_slots - n_fwd


@njit(cache=True, nogil=True)
def branch_slots(birth_idx, i_max):
    """first_slot per branch and the total number of owned individuals"""
    first = np.empty(birth_idx.size, dtype=np.int64)
    total = 0
    for b in range(birth_idx.size):
        first[b] = total
        total += i_max - birth_idx[b]
    return first, total


def draw_types(roots: np.ndarray, rng) -> np.ndarray:
    """One fair sign per class, read off at every slot"""
    signs = rng.signs(roots.size)
    return signs[roots]
