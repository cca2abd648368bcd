"""Core/kernel anatomy of discrete components, exploration heights and path bounds.

Distances are hop counts times ``n^{-1/3}``; trimming works on whole
vertices, never on interior points of edges.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from .errors import EmptyCore, NoKernel, RootRequired
from .graph_state import ComponentSummary, GraphState, _bfs_dist, _far, _two_sweep, exploration

__all__ = [
    "KernelEdge",
    "KernelMultigraph",
    "HeightProfile",
    "SuplengthReport",
    "two_core",
    "kernel",
    "trim_hanging",
    "alpha_projection",
    "exploration_height",
    "oscillation",
    "suplength_bound",
    "longest_path_hops",
]


def _component_graph(state: GraphState, cid: int) -> dict[int, list[int]]:
    verts = state.component_vertices(cid).tolist()
    nbrs = state.neighbours()
    return {v: nbrs[v] for v in verts}


def _peel(adj: dict[int, list[int]]) -> set[int]:
    deg = {v: len(ws) for v, ws in adj.items()}
    alive = set(adj)
    queue = deque(v for v, d in deg.items() if d <= 1)
    while queue:
        v = queue.popleft()
        if v not in alive:
            continue
        alive.discard(v)
        for w in adj[v]:
            if w in alive:
                deg[w] -= 1
                if deg[w] == 1:
                    queue.append(w)
    return alive


def two_core(state: GraphState, component_id: int) -> frozenset[int]:
    """Vertices surviving repeated removal of degree <= 1 vertices."""
    return frozenset(_peel(_component_graph(state, component_id)))


@dataclass(frozen=True)
class KernelEdge:
    u: int
    v: int
    hops: int

    @property
    def loop(self) -> bool:
        return self.u == self.v


@dataclass(frozen=True)
class KernelMultigraph:
    vertices: tuple[int, ...]
    edges: tuple[KernelEdge, ...]
    scale_n: int

    def length(self, e: KernelEdge) -> float:
        return e.hops * self.scale_n ** (-1.0 / 3.0)

    @property
    def surplus(self) -> int:
        return len(self.edges) - len(self.vertices) + 1

    def degree(self, v: int) -> int:
        return sum((e.u == v) + (e.v == v) for e in self.edges)

    def total_length(self) -> float:
        return sum(e.hops for e in self.edges) * self.scale_n ** (-1.0 / 3.0)

    def to_json(self) -> dict:
        return {
            "vertices": list(self.vertices),
            "edges": [{"u": e.u, "v": e.v, "loop": e.loop, "length": self.length(e)} for e in self.edges],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def kernel(state: GraphState, component_id: int) -> KernelMultigraph:
    """Contract the degree-2 chains of the 2-core into weighted multigraph edges."""
    adj = _component_graph(state, component_id)
    n_edges = sum(len(ws) for ws in adj.values()) // 2
    surplus = n_edges - len(adj) + 1
    if surplus < 2:
        raise NoKernel(f"component {component_id} has surplus {surplus}; a kernel needs surplus >= 2")
    core = _peel(adj)
    cadj = {v: [w for w in adj[v] if w in core] for v in core}
    kverts = sorted(v for v, ws in cadj.items() if len(ws) >= 3)
    used: set[tuple[int, int]] = set()
    edges = []
    for u in kverts:
        for first in cadj[u]:
            if (min(u, first), max(u, first)) in used:
                continue
            prev, cur, hops = u, first, 1
            used.add((min(u, first), max(u, first)))
            while len(cadj[cur]) == 2:
                a, b = cadj[cur]
                nxt = b if a == prev else a
                used.add((min(cur, nxt), max(cur, nxt)))
                prev, cur, hops = cur, nxt, hops + 1
            edges.append(KernelEdge(min(u, cur), max(u, cur), hops))
    edges.sort(key=lambda e: (e.u, e.v, e.hops))
    return KernelMultigraph(tuple(kverts), tuple(edges), state.n)


def _hanging_forest(adj: dict[int, list[int]], sources: set[int]):
    """Multi-source BFS from ``sources``: parent, hop distance and attachment point."""
    dist = {s: 0 for s in sources}
    attach = {s: s for s in sources}
    parent: dict[int, int] = {}
    queue = deque(sorted(sources))
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if w not in dist:
                dist[w] = dist[v] + 1
                attach[w] = attach[v]
                parent[w] = v
                queue.append(w)
    return parent, dist, attach


def trim_hanging(state: GraphState, component_id: int, eta: float, root: int | None = None) -> frozenset[int]:
    """Keep the 2-core plus every vertex that has a descendant at least ``eta`` further out.

    For a tree component the core is replaced by ``{root}`` and ``root`` must be given.
    """
    if eta < 0:
        raise ValueError("eta must be >= 0")
    adj = _component_graph(state, component_id)
    core = _peel(adj)
    if not core:
        if root is None:
            raise RootRequired(f"component {component_id} is a tree; pass root=")
        if root not in adj:
            raise ValueError(f"root {root} is not in component {component_id}")
        core = {root}
    parent, dist, _ = _hanging_forest(adj, core)
    below = dict.fromkeys(adj, 0)
    for v in sorted(parent, key=dist.__getitem__, reverse=True):
        p = parent[v]
        if p not in core:
            below[p] = max(below[p], below[v] + 1)
    need = eta / state.length_per_edge
    kept = set(core)
    kept.update(v for v in parent if below[v] >= need - 1e-9)
    return frozenset(kept)


def alpha_projection(state: GraphState, component_id: int) -> dict[int, tuple[int, float]]:
    """Map each vertex to its nearest 2-core vertex and the rescaled distance to it."""
    adj = _component_graph(state, component_id)
    core = _peel(adj)
    if not core:
        raise EmptyCore(f"component {component_id} is a tree")
    _, dist, attach = _hanging_forest(adj, core)
    step = state.length_per_edge
    return {v: (attach[v], dist[v] * step) for v in adj}


@dataclass(frozen=True)
class HeightProfile:
    """Exploration depths in hops; ``step`` rescales heights, ``index_scale`` the time axis."""

    hops: np.ndarray = field(repr=False)
    excursion_boundaries: tuple[int, ...]
    step: float
    index_scale: float

    @property
    def heights(self) -> np.ndarray:
        return self.hops * self.step

    def excursions(self):
        bounds = list(self.excursion_boundaries) + [len(self.hops)]
        for a, b in zip(bounds[:-1], bounds[1:]):
            yield a, b


def exploration_height(state: GraphState) -> HeightProfile:
    order, depth = exploration(state)
    starts = tuple(int(i) for i in np.flatnonzero(depth == 0))
    return HeightProfile(depth, starts, state.length_per_edge, state.mass_per_vertex)


def oscillation(profile: HeightProfile, epsilon: float) -> float:
    """Largest height change between two times of one excursion at most ``epsilon`` apart."""
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    gap = int(np.floor(epsilon / profile.index_scale + 1e-9))
    if gap == 0:
        return 0.0
    best = 0
    for a, b in profile.excursions():
        h = profile.hops[a:b]
        if len(h) < 2:
            continue
        if gap >= len(h) - 1:
            best = max(best, int(h.max() - h.min()))
            continue
        size = gap + 1
        origin = -(size // 2)
        hi = maximum_filter1d(h, size, mode="nearest", origin=origin)
        lo = minimum_filter1d(h, size, mode="nearest", origin=origin)
        best = max(best, int((hi - lo).max()))
    return best * profile.step


@dataclass(frozen=True)
class SuplengthReport:
    bound: float
    exact: float | None

    @property
    def holds(self) -> bool:
        return self.exact is None or self.exact <= self.bound + 1e-12


def _cycle_order(cadj: dict[int, list[int]]) -> list[int]:
    start = min(cadj)
    order = [start]
    prev, cur = start, cadj[start][0]
    while cur != start:
        order.append(cur)
        a, b = cadj[cur]
        prev, cur = cur, (b if a == prev else a)
    return order


def longest_path_hops(state: GraphState, component_id: int) -> int:
    """Exact longest simple path (in edges) for components of surplus 0 or 1."""
    adj = _component_graph(state, component_id)
    n_edges = sum(len(ws) for ws in adj.values()) // 2
    surplus = n_edges - len(adj) + 1
    if surplus == 0:
        if len(adj) == 1:
            return 0
        return _two_sweep(adj, component_id)
    if surplus != 1:
        raise ValueError("exact longest path is only computed for surplus <= 1")
    core = _peel(adj)
    cycle = _cycle_order({v: [w for w in adj[v] if w in core] for v in core})
    _, dist, attach = _hanging_forest(adj, core)
    depth = dict.fromkeys(cycle, 0)
    for v, d in dist.items():
        depth[attach[v]] = max(depth[attach[v]], d)
    best = 0
    # paths inside one hanging tree (cycle vertex included)
    members: dict[int, list[int]] = {c: [] for c in cycle}
    for v in adj:
        members[attach[v]].append(v)
    for c, vs in members.items():
        if len(vs) > 1:
            sub = {v: [w for w in adj[v] if w in vs and not (v in core and w in core)] for v in vs}
            a, _ = _far(_bfs_dist(sub, c))
            best = max(best, _far(_bfs_dist(sub, a))[1])
    L = len(cycle)
    d = [depth[c] for c in cycle]
    for i in range(L):
        for j in range(i + 1, L):
            arc = j - i
            best = max(best, d[i] + d[j] + max(arc, L - arc))
    return best


def suplength_bound(summary: ComponentSummary, state: GraphState | None = None) -> SuplengthReport:
    """``2 * height * (1 + surplus)``, with the exact longest path attached when surplus <= 1."""
    bound = 2.0 * summary.height * (1 + summary.surplus)
    exact = None
    if state is not None and summary.surplus <= 1:
        exact = longest_path_hops(state, summary.id) * state.length_per_edge
    return SuplengthReport(bound, exact)
