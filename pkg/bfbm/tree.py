import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from utils.rng import ReplicaRNG
from .errors import DomainError

# Same-path marker returned by split_time
SAME_PATH = math.inf

# Births within this many grid steps of a grid point count as on the grid
GRID_TOLERANCE = 1e-9

TREE_KINDS = ("yule", "binary", "discretized", "single")


@dataclass(frozen=True)
class TreeTopology:
    """
    Binary branching time-tree

    Parameters:
    -----------
    parent: parent id per branch, -1 for the root (id 0)
    birth: birth time per branch; ids are sorted by birth so parents precede children
    horizon: time T up to which the tree is grown
    kind: yule, binary, single or discretized
    levels: grid level of every birth (discretized trees only)
    K: number of grid levels on [0, horizon] (discretized trees only)
    base_kind: kind of the tree before discretisation
    direction: left or right shift used by the discretisation
    """
    parent: np.ndarray
    birth: np.ndarray
    horizon: float
    kind: str
    levels: Optional[np.ndarray] = None
    K: Optional[int] = None
    base_kind: Optional[str] = None
    direction: Optional[str] = None
    _lines: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.parent.size == 0 or self.parent[0] != -1 or self.birth[0] != 0.0:
            raise DomainError("the root must be branch 0 with no parent and birth 0")
        if np.any(self.parent[1:] < 0) or np.any(self.parent[1:] >= np.arange(1, self.parent.size)):
            raise DomainError("every non-root branch needs a parent with a smaller id")
        if np.any(self.birth[1:] < self.birth[self.parent[1:]]):
            raise DomainError("a branch cannot be born before its parent")

    @property
    def size(self) -> int:
        return int(self.parent.size)

    def check_id(self, b: int) -> int:
        b = int(b)
        if not 0 <= b < self.size:
            raise DomainError(f"unknown branch id {b}")
        return b

    def line(self, b: int) -> List[int]:
        """Ancestral line root .. b"""
        b = self.check_id(b)
        cached = self._lines.get(b)
        if cached is not None:
            return cached
        path = []
        while b >= 0:
            path.append(b)
            b = int(self.parent[b])
        path.reverse()
        self._lines[path[-1]] = path
        return path

    def children(self) -> List[List[int]]:
        kids: List[List[int]] = [[] for _ in range(self.size)]
        for b in range(1, self.size):
            kids[int(self.parent[b])].append(b)
        return kids

    def depth(self) -> np.ndarray:
        d = np.zeros(self.size, dtype=np.int64)
        for b in range(1, self.size):
            d[b] = d[self.parent[b]] + 1
        return d


def _sorted_tree(parent: np.ndarray, birth: np.ndarray, horizon: float, kind: str) -> TreeTopology:
    """Relabel branches by birth time (stable), root first"""
    order = np.argsort(birth, kind="stable")
    relabel = np.empty_like(order)
    relabel[order] = np.arange(order.size)
    new_parent = np.where(parent[order] >= 0, relabel[np.maximum(parent[order], 0)], -1)
    return TreeTopology(parent=new_parent.astype(np.int64), birth=birth[order].astype(np.float64),
                        horizon=float(horizon), kind=kind)


def sample_yule(T: float, rng: ReplicaRNG) -> TreeTopology:
    """
    Rate-one Yule tree on [0, T]

    Every branch spawns children at the points of a rate-one Poisson process on
    (birth, T), which is the Exp(1)-clock construction with the parent continuing after
    each split. Generations are drawn at once with numpy.
    """
    T = float(T)
    if not T > 0.0 or not math.isfinite(T):
        raise DomainError(f"Yule horizon must be positive, got {T}")

    parents = [np.array([-1], dtype=np.int64)]
    births = [np.array([0.0])]
    gen_ids = np.array([0], dtype=np.int64)
    gen_births = np.array([0.0])
    next_id = 1
    while gen_ids.size:
        counts = rng.poisson(T - gen_births)
        total = int(counts.sum())
        if total == 0:
            break
        child_parent = np.repeat(gen_ids, counts)
        start = np.repeat(gen_births, counts)
        child_birth = start + rng.uniform(0.0, 1.0, total) * (T - start)
        gen_ids = np.arange(next_id, next_id + total, dtype=np.int64)
        gen_births = child_birth
        next_id += total
        parents.append(child_parent)
        births.append(child_birth)

    return _sorted_tree(np.concatenate(parents), np.concatenate(births), T, "yule")


def binary_tree(T) -> TreeTopology:
    """Deterministic tree: every branch splits into two after each unit of time, up to T

    The parent keeps its id at a split and spawns one child, so 2^T branches exist at T.
    """
    if isinstance(T, float) and not T.is_integer():
        raise DomainError(f"binary tree horizon must be an integer, got {T}")
    try:
        T_int = int(T)
    except (TypeError, ValueError):
        raise DomainError(f"binary tree horizon must be an integer, got {T!r}")
    if T_int != T or T_int < 1:
        raise DomainError(f"binary tree horizon must be an integer >= 1, got {T}")

    parent = [-1]
    birth = [0.0]
    for k in range(1, T_int + 1):
        alive = len(parent)
        for b in range(alive):
            parent.append(b)
            birth.append(float(k))
    return TreeTopology(parent=np.array(parent, dtype=np.int64), birth=np.array(birth),
                        horizon=float(T_int), kind="binary")


def single_branch(T: float) -> TreeTopology:
    """Tree without branching, a single fBM path"""
    return TreeTopology(parent=np.array([-1], dtype=np.int64), birth=np.array([0.0]),
                        horizon=float(T), kind="single")


def split_time(tree: TreeTopology, b: int, b_other: int) -> float:
    """Time at which the ancestral lines of b and b_other separate; SAME_PATH when b == b_other"""
    b = tree.check_id(b)
    b_other = tree.check_id(b_other)
    if b == b_other:
        return SAME_PATH
    line_b = tree.line(b)
    line_o = tree.line(b_other)
    k = 0
    while k < len(line_b) and k < len(line_o) and line_b[k] == line_o[k]:
        k += 1
    # line_b[k-1] is the lowest common branch; the first child off it on either side splits
    candidates = []
    if k < len(line_b):
        candidates.append(tree.birth[line_b[k]])
    if k < len(line_o):
        candidates.append(tree.birth[line_o[k]])
    return float(min(candidates))


def split_matrix(tree: TreeTopology, branches: Sequence[int]) -> np.ndarray:
    n = len(branches)
    out = np.full((n, n), SAME_PATH)
    for a in range(n):
        for c in range(a + 1, n):
            out[a, c] = out[c, a] = split_time(tree, branches[a], branches[c])
    return out


def _grid_level(x: np.ndarray, direction: str) -> np.ndarray:
    nearest = np.round(x)
    on_grid = np.abs(x - nearest) < GRID_TOLERANCE
    shifted = np.floor(x) if direction == "left" else np.ceil(x)
    return np.where(on_grid, nearest, shifted).astype(np.int64)


def discretize(tree: TreeTopology, K: int, t: Optional[float] = None, direction: str = "left") -> TreeTopology:
    """
    Shift every branching event in [i t/K, (i+1) t/K] to i t/K (left) or (i+1) t/K (right)

    Branches born after t are dropped first; the remaining topology is unchanged.
    """
    if K < 1:
        raise DomainError(f"number of levels must be positive, got {K}")
    if direction not in ("left", "right"):
        raise DomainError(f"direction must be left or right, got {direction!r}")
    t = tree.horizon if t is None else float(t)
    if t <= 0.0:
        raise DomainError(f"discretisation horizon must be positive, got {t}")

    keep = int(np.searchsorted(tree.birth, t * (1.0 + GRID_TOLERANCE), side="right"))
    step = t / K
    levels = _grid_level(tree.birth[:keep] / step, direction)
    levels = np.minimum(levels, K)
    levels[0] = 0
    base_kind = tree.base_kind if tree.kind == "discretized" else tree.kind
    return TreeTopology(parent=tree.parent[:keep].copy(), birth=levels * step, horizon=t,
                        kind="discretized", levels=levels, K=int(K), base_kind=base_kind,
                        direction=direction)


def leaves_at(tree: TreeTopology, t: float) -> np.ndarray:
    """Ids of the branches alive at time t"""
    return np.nonzero(tree.birth <= float(t) * (1.0 + GRID_TOLERANCE))[0]


def segments(tree: TreeTopology, t: Optional[float] = None) -> List[Tuple[int, float, float]]:
    """Pieces (branch, start, end) between consecutive branch points, one more per branch than it has children"""
    t = tree.horizon if t is None else float(t)
    alive = leaves_at(tree, t)
    kids = tree.children()
    out = []
    for b in alive:
        points = [float(tree.birth[b])]
        points += [float(tree.birth[c]) for c in kids[b] if tree.birth[c] <= t * (1.0 + GRID_TOLERANCE)]
        points.append(t)
        out.extend((int(b), points[k], points[k + 1]) for k in range(len(points) - 1))
    return out


def line(tree: TreeTopology, b: int) -> List[Tuple[int, float]]:
    """Ancestral line of b as (branch, birth time) pairs"""
    return [(a, float(tree.birth[a])) for a in tree.line(b)]


def name(tree: TreeTopology, b: int) -> str:
    """Split-time name of b, e.g. '0 1.5 2.25' for a branch born at 2.25 off one born at 1.5"""
    return " ".join(["0"] + [repr(float(tree.birth[a])) for a in tree.line(b)[1:]])


def to_rows(tree: TreeTopology) -> List[Tuple[int, Optional[int], float]]:
    """CSV rows branch_id, parent_id (None for the root), birth_time"""
    return [(b, None if tree.parent[b] < 0 else int(tree.parent[b]), float(tree.birth[b]))
            for b in range(tree.size)]


def from_rows(rows: Iterable[Sequence], horizon: float, kind: str = "yule") -> TreeTopology:
    if kind not in TREE_KINDS:
        raise DomainError(f"tree kind must be one of {TREE_KINDS}, got {kind!r}")
    rows = sorted(rows, key=lambda row: int(row[0]))
    if [int(row[0]) for row in rows] != list(range(len(rows))):
        raise DomainError("branch ids must be 0..B-1")
    parent = np.array([-1 if row[1] in (None, "") else int(row[1]) for row in rows], dtype=np.int64)
    birth = np.array([float(row[2]) for row in rows])
    return TreeTopology(parent=parent, birth=birth, horizon=float(horizon), kind=kind)
