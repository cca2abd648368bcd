"""Discrete measured graphs in the critical window.

A :class:`GraphState` is an undirected simple graph on ``{1, ..., n}``.  Every
vertex carries mass ``n^{-2/3}`` and every edge length ``n^{-1/3}``; both
are kept as integer counts internally and only turned into floats when a
summary is reported.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .errors import InvalidWindow, UnknownComponent
from .rng import stream

__all__ = [
    "GraphState",
    "SizeSequence",
    "ComponentSummary",
    "p_critical",
    "sample_er",
    "components",
    "sizes_rescaled",
    "component_diameter",
    "pair_index",
    "pair_from_index",
    "read_snapshot",
    "write_snapshot",
]

# all-source BFS is run through scipy above this many vertices
_SCIPY_BFS_MIN = 48


def p_critical(lam: float, n: int, strict: bool = False) -> float:
    """Edge probability ``1/n + lam * n^{-4/3}``, clamped to [0, 1] unless ``strict``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    raw = 1.0 / n + lam * n ** (-4.0 / 3.0)
    # 1/n and lam*n^{-4/3} are rounded separately; treat an exact cancellation as zero
    if abs(raw) <= 4 * np.finfo(float).eps / n:
        raw = 0.0
    if raw < 0.0 or raw > 1.0:
        if strict:
            raise InvalidWindow(f"p(lambda={lam}, n={n}) = {raw} is not a probability")
        raw = min(1.0, max(0.0, raw))
    return raw


def n_pairs(n: int) -> int:
    return n * (n - 1) // 2


def _row_starts(n: int) -> np.ndarray:
    u = np.arange(n, dtype=np.int64)
    return u * (2 * n - u - 1) // 2


def pair_index(u, v, n: int):
    """Lexicographic index of the 1-based pair ``u < v`` among all ``C(n, 2)`` pairs."""
    u = np.asarray(u, dtype=np.int64) - 1
    v = np.asarray(v, dtype=np.int64) - 1
    return u * (2 * n - u - 1) // 2 + (v - u - 1)


def pair_from_index(k, n: int) -> np.ndarray:
    """Inverse of :func:`pair_index`; returns an ``(m, 2)`` array of 1-based pairs."""
    k = np.atleast_1d(np.asarray(k, dtype=np.int64))
    starts = _row_starts(n)
    u = np.searchsorted(starts, k, side="right") - 1
    v = k - starts[u] + u + 1
    return np.stack([u + 1, v + 1], axis=1)


def _canonical_edges(edges, n: int) -> np.ndarray:
    arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if arr.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if np.any(arr[:, 0] >= arr[:, 1]):
        raise ValueError("edges must satisfy u < v")
    if arr.min() < 1 or arr.max() > n:
        raise ValueError("edge endpoint out of range 1..n")
    codes = np.unique(pair_index(arr[:, 0], arr[:, 1], n))
    if codes.size != arr.shape[0]:
        raise ValueError("duplicate edges")
    return pair_from_index(codes, n)


@dataclass(frozen=True)
class SizeSequence:
    """Non-increasing rescaled masses together with the vertex counts behind them."""

    counts: tuple[int, ...]
    n: int

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) * self.n ** (-2.0 / 3.0)

    def total(self) -> float:
        return math.fsum(self.values)

    def l2_squared(self) -> float:
        return math.fsum(self.values**2)

    def __len__(self) -> int:
        return len(self.counts)


@dataclass(frozen=True)
class ComponentSummary:
    id: int
    n_vertices: int
    n_edges: int
    scale_n: int
    diameter_hops: int
    height_hops: int

    @property
    def size(self) -> float:
        return self.n_vertices * self.scale_n ** (-2.0 / 3.0)

    @property
    def surplus(self) -> int:
        return self.n_edges - self.n_vertices + 1

    @property
    def diameter(self) -> float:
        return self.diameter_hops * self.scale_n ** (-1.0 / 3.0)

    @property
    def height(self) -> float:
        return self.height_hops * self.scale_n ** (-1.0 / 3.0)

    def to_record(self) -> dict:
        return {
            "size": self.size,
            "surplus": self.surplus,
            "diameter": self.diameter,
            "n_vertices": self.n_vertices,
        }


@dataclass(frozen=True, eq=False)
class GraphState:
    """Immutable graph snapshot; ``edges`` is a sorted ``(m, 2)`` array of 1-based pairs."""

    n: int
    edges: np.ndarray = field(repr=False)
    lam: float = 0.0
    seed: int = 0
    time: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        edges = _canonical_edges(self.edges, self.n)
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_codes(cls, n: int, codes, **kw) -> "GraphState":
        codes = np.sort(np.asarray(codes, dtype=np.int64))
        return cls(n, pair_from_index(codes, n) if codes.size else np.zeros((0, 2), np.int64), **kw)

    @property
    def mass_per_vertex(self) -> float:
        return self.n ** (-2.0 / 3.0)

    @property
    def length_per_edge(self) -> float:
        return self.n ** (-1.0 / 3.0)

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    @cached_property
    def codes(self) -> np.ndarray:
        if self.n_edges == 0:
            return np.zeros(0, dtype=np.int64)
        return pair_index(self.edges[:, 0], self.edges[:, 1], self.n)

    @cached_property
    def adjacency(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR ``(indptr, indices)`` over 1-based vertices, neighbours ascending."""
        n = self.n
        if self.n_edges == 0:
            return np.zeros(n + 2, dtype=np.int64), np.zeros(0, dtype=np.int64)
        src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        indptr = np.zeros(n + 2, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        return np.cumsum(indptr), dst

    def neighbours(self) -> list[list[int]]:
        indptr, indices = self.adjacency
        ind = indices.tolist()
        ptr = indptr.tolist()
        return [ind[ptr[v]:ptr[v + 1]] for v in range(self.n + 1)]

    @cached_property
    def labels(self) -> np.ndarray:
        """``labels[v]`` = canonical component id (minimum vertex) of vertex ``v``; index 0 unused."""
        n = self.n
        if self.n_edges == 0:
            lab = np.arange(n + 1, dtype=np.int64)
            return lab
        e = self.edges - 1
        mat = coo_matrix((np.ones(len(e), dtype=np.int8), (e[:, 0], e[:, 1])), shape=(n, n))
        _, raw = connected_components(mat, directed=False)
        mins = np.full(raw.max() + 1, n, dtype=np.int64)
        np.minimum.at(mins, raw, np.arange(n, dtype=np.int64))
        lab = np.empty(n + 1, dtype=np.int64)
        lab[0] = 0
        lab[1:] = mins[raw] + 1
        return lab

    def component_vertices(self, component_id: int) -> np.ndarray:
        if not (1 <= component_id <= self.n) or self.labels[component_id] != component_id:
            raise UnknownComponent(component_id)
        return np.flatnonzero(self.labels == component_id)

    def component_edges(self, component_id: int) -> np.ndarray:
        self.component_vertices(component_id)
        if self.n_edges == 0:
            return self.edges
        return self.edges[self.labels[self.edges[:, 0]] == component_id]

    def with_edges(self, edges, time: float | None = None) -> "GraphState":
        return GraphState(self.n, edges, self.lam, self.seed, self.time if time is None else time)

    # -- snapshot file -------------------------------------------------
    def to_json(self) -> dict:
        return {
            "n": int(self.n),
            "lambda": float(self.lam),
            "seed": int(self.seed),
            "time": float(self.time),
            "edges": self.edges.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GraphState":
        edges = obj["edges"]
        return cls(int(obj["n"]), np.asarray(edges, dtype=np.int64).reshape(-1, 2),
                   float(obj["lambda"]), int(obj["seed"]), float(obj["time"]))

    def __eq__(self, other):
        if not isinstance(other, GraphState):
            return NotImplemented
        return (self.n, self.lam, self.seed, self.time) == (other.n, other.lam, other.seed, other.time) \
            and np.array_equal(self.edges, other.edges)

    __hash__ = None


def write_snapshot(state: GraphState, path) -> None:
    Path(path).write_text(json.dumps(state.to_json()) + "\n", encoding="utf-8")


def read_snapshot(path) -> GraphState:
    return GraphState.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def sample_er(n: int, lam: float, seed: int, strict: bool = False, p: float | None = None) -> GraphState:
    """Sample G(n, p(lam, n)): a Binomial edge count, then that many distinct uniform pairs.

    ``p`` overrides the critical-window probability when given.
    """
    if n < 2:
        raise ValueError("sample_er needs n >= 2")
    prob = p_critical(lam, n, strict=strict) if p is None else float(p)
    rng = stream(seed, "edges")
    total = n_pairs(n)
    k = int(rng.binomial(total, prob))
    if k == total:
        codes = np.arange(total, dtype=np.int64)
    else:
        codes = rng.choice(total, size=k, replace=False)
    return GraphState.from_codes(n, codes, lam=float(lam), seed=int(seed))


# -- traversal helpers ------------------------------------------------------

def _bfs_dist(nbrs: list[list[int]], src: int) -> dict[int, int]:
    dist = {src: 0}
    frontier = [src]
    d = 0
    while frontier:
        d += 1
        nxt = []
        for v in frontier:
            for w in nbrs[v]:
                if w not in dist:
                    dist[w] = d
                    nxt.append(w)
        frontier = nxt
    return dist


def _far(dist: dict[int, int]) -> tuple[int, int]:
    best_v, best_d = -1, -1
    for v, d in dist.items():
        if d > best_d or (d == best_d and v < best_v):
            best_v, best_d = v, d
    return best_v, best_d


def _two_sweep(nbrs, start: int) -> int:
    a, _ = _far(_bfs_dist(nbrs, start))
    _, d = _far(_bfs_dist(nbrs, a))
    return d


def _all_source(state: GraphState, nbrs, verts: np.ndarray) -> int:
    if len(verts) >= _SCIPY_BFS_MIN:
        ce = state.edges[state.labels[state.edges[:, 0]] == state.labels[verts[0]]]
        local = np.full(state.n + 1, -1, dtype=np.int64)
        local[verts] = np.arange(len(verts))
        k = len(verts)
        mat = coo_matrix((np.ones(len(ce)), (local[ce[:, 0]], local[ce[:, 1]])), shape=(k, k))
        return int(shortest_path(mat.tocsr(), directed=False, unweighted=True).max())
    best = 0
    for v in verts.tolist():
        best = max(best, max(_bfs_dist(nbrs, v).values()))
    return best


def exploration(state: GraphState) -> tuple[np.ndarray, np.ndarray]:
    """Depth-first exploration of the whole graph.

    Components are started from their smallest unexplored vertex.  The
    current vertex is popped from a stack and its unseen neighbours are
    pushed so that the smallest one is explored next; each newly seen vertex
    is one level below the vertex that discovered it.  Returns the visit
    order and the hop depth of each visited vertex.
    """
    nbrs = state.neighbours()
    n = state.n
    seen = bytearray(n + 1)
    depth = [0] * (n + 1)
    order: list[int] = []
    for root in range(1, n + 1):
        if seen[root]:
            continue
        seen[root] = 1
        stack = [root]
        while stack:
            v = stack.pop()
            order.append(v)
            dv = depth[v] + 1
            fresh = [w for w in nbrs[v] if not seen[w]]
            for w in fresh:
                seen[w] = 1
                depth[w] = dv
            stack.extend(reversed(fresh))
    order_arr = np.asarray(order, dtype=np.int64)
    return order_arr, np.asarray(depth, dtype=np.int64)[order_arr]


def _diameter_hops(state: GraphState, nbrs, cid: int, verts: np.ndarray, n_edges: int, method: str) -> int:
    k = len(verts)
    if k == 1:
        return 0
    if k == 2:
        return 1
    is_tree = n_edges == k - 1
    if method == "sweep" or (method == "auto" and is_tree):
        if not is_tree:
            raise ValueError("two-sweep diameter is only exact on trees")
        return _two_sweep(nbrs, cid)
    return _all_source(state, nbrs, verts)


def components(state: GraphState) -> list[ComponentSummary]:
    """One summary per component, sorted by (size desc, id asc)."""
    labels = state.labels[1:]
    ids, counts = np.unique(labels, return_counts=True)
    edge_count = dict.fromkeys(ids.tolist(), 0)
    if state.n_edges:
        e_ids, e_counts = np.unique(state.labels[state.edges[:, 0]], return_counts=True)
        edge_count.update(zip(e_ids.tolist(), e_counts.tolist()))
    order, depth = exploration(state)
    heights = dict.fromkeys(ids.tolist(), 0)
    roots = state.labels[order]
    if len(order):
        # per-component max depth
        hmax = np.zeros(state.n + 1, dtype=np.int64)
        np.maximum.at(hmax, roots, depth)
        heights = {c: int(hmax[c]) for c in heights}
    nbrs = state.neighbours() if state.n_edges else None
    big = ids[counts > 2]
    by_comp: dict[int, np.ndarray] = {}
    if len(big):
        sorter = np.argsort(labels, kind="stable")
        sl = labels[sorter]
        for c in big.tolist():
            lo, hi = np.searchsorted(sl, [c, c + 1])
            by_comp[c] = sorter[lo:hi] + 1
    out = []
    for c, k in zip(ids.tolist(), counts.tolist()):
        if k <= 2:
            diam = k - 1
        else:
            diam = _diameter_hops(state, nbrs, c, by_comp[c], edge_count[c], "auto")
        out.append(ComponentSummary(c, k, edge_count[c], state.n, diam, heights[c]))
    out.sort(key=lambda s: (-s.n_vertices, s.id))
    return out


def sizes_rescaled(state: GraphState) -> SizeSequence:
    counts = np.bincount(state.labels[1:])
    counts = np.sort(counts[counts > 0])[::-1]
    return SizeSequence(tuple(int(c) for c in counts), state.n)


def component_diameter(state: GraphState, component_id: int, method: str = "auto") -> float:
    """Rescaled diameter of one component.

    ``method`` is ``"all"`` (all-source BFS), ``"sweep"`` (two-sweep BFS,
    trees only) or ``"auto"`` (sweep on trees, all-source otherwise).
    """
    verts = state.component_vertices(component_id)
    n_edges = len(state.component_edges(component_id))
    nbrs = state.neighbours()
    k = len(verts)
    if k == 1:
        hops = 0
    elif method == "all":
        hops = _all_source(state, nbrs, verts)
    else:
        hops = _diameter_hops(state, nbrs, component_id, verts, n_edges, method)
    return hops * state.length_per_edge
