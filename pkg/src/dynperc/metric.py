"""Distances between finite measured metric spaces and between collections of them.

A d_GHP evaluation optimises jointly over a correspondence R and a finite
measure pi on A x B of

    max( ||pi_1 - mu|| + ||pi_2 - mu'||,  dis(R) / 2,  pi(R^c) ).

For a fixed R the optimisation over pi depends only on the total masses and
on the largest mass that R can carry (a bipartite max flow), and has the
closed form in ``inner_value``.  The outer search visits the maximal
correspondences of each distortion level; enlarging R never hurts, so
maximal cliques of the pair-compatibility graph are enough.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import shortest_path

from .errors import MissingSurplus, NotACorrespondence, TooLarge, TooLargeForExact
from .graph_state import GraphState

__all__ = [
    "FiniteMeasuredSpace",
    "Collection",
    "GHPBounds",
    "LGHPResult",
    "from_component",
    "distortion",
    "inner_value",
    "dghp",
    "dghp_surplus",
    "max_flow",
    "rho_lp",
    "f_k",
    "l_ghp",
    "lp_ghp",
    "matched_bound",
    "size_distance",
    "EXACT_CAP",
]

EXACT_CAP = 20
TOL = 1e-9


@dataclass(frozen=True, eq=False)
class FiniteMeasuredSpace:
    dist: np.ndarray = field(repr=False)
    mass: np.ndarray
    surplus: int | None = None

    def __post_init__(self):
        d = np.array(self.dist, dtype=float, ndmin=2)
        m = np.array(self.mass, dtype=float).ravel()
        k = m.size
        if k == 0:
            raise ValueError("a measured space needs at least one point")
        if d.shape != (k, k):
            raise ValueError(f"dist has shape {d.shape}, expected {(k, k)}")
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise ValueError("masses must be finite and >= 0")
        if np.any(d < 0) or not np.allclose(d, d.T, atol=TOL, rtol=0) or np.any(np.abs(np.diag(d)) > TOL):
            raise ValueError("dist must be symmetric, nonnegative, with zero diagonal")
        if k > 1 and np.any(d[:, None, :] > d[:, :, None] + d[None, :, :] + TOL):
            raise ValueError("dist violates the triangle inequality")
        if self.surplus is not None and self.surplus < 0:
            raise ValueError("surplus must be >= 0")
        d.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "dist", d)
        object.__setattr__(self, "mass", m)

    @property
    def size(self) -> int:
        return self.mass.size

    @property
    def total_mass(self) -> float:
        return float(math.fsum(self.mass))

    @property
    def diameter(self) -> float:
        return float(self.dist.max())

    def scaled(self, c: float) -> "FiniteMeasuredSpace":
        return FiniteMeasuredSpace(self.dist * c, self.mass * c, self.surplus)

    def to_json(self) -> dict:
        return {"dist": self.dist.tolist(), "mass": self.mass.tolist(), "surplus": self.surplus}

    @classmethod
    def from_json(cls, obj: dict) -> "FiniteMeasuredSpace":
        return cls(obj["dist"], obj["mass"], obj.get("surplus"))


@dataclass(frozen=True)
class Collection:
    spaces: tuple[FiniteMeasuredSpace, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "spaces", tuple(self.spaces))

    def __len__(self):
        return len(self.spaces)

    def masses(self) -> np.ndarray:
        return np.array([s.total_mass for s in self.spaces])

    def sizes(self) -> np.ndarray:
        return np.sort(self.masses())[::-1]

    def to_json(self) -> list:
        return [s.to_json() for s in self.spaces]

    @classmethod
    def from_json(cls, obj) -> "Collection":
        if isinstance(obj, dict):
            obj = [obj]
        return cls(tuple(FiniteMeasuredSpace.from_json(o) for o in obj))

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def from_component(state: GraphState, component_id: int, cap: int = 4096) -> FiniteMeasuredSpace:
    """Rescaled component: hop distances times n^{-1/3}, mass n^{-2/3} per vertex."""
    verts = state.component_vertices(component_id)
    k = len(verts)
    if k > cap:
        raise TooLarge(f"component {component_id} has {k} vertices (cap {cap})")
    labels = state.labels
    ce = state.edges[labels[state.edges[:, 0]] == component_id] if state.n_edges else np.zeros((0, 2), int)
    local = np.full(state.n + 1, -1, dtype=np.int64)
    local[verts] = np.arange(k)
    mat = coo_matrix((np.ones(len(ce)), (local[ce[:, 0]], local[ce[:, 1]])), shape=(k, k))
    hops = shortest_path(mat.tocsr(), directed=False, unweighted=True)
    surplus = len(ce) - k + 1
    return FiniteMeasuredSpace(hops * state.length_per_edge, np.full(k, state.mass_per_vertex), surplus)


def _check_correspondence(R, A: FiniteMeasuredSpace, B: FiniteMeasuredSpace) -> list[tuple[int, int]]:
    pairs = sorted({(int(a), int(b)) for a, b in R})
    for a, b in pairs:
        if not (0 <= a < A.size and 0 <= b < B.size):
            raise NotACorrespondence(f"pair {(a, b)} out of range")
    if {a for a, _ in pairs} != set(range(A.size)) or {b for _, b in pairs} != set(range(B.size)):
        raise NotACorrespondence("R does not cover every point of both spaces")
    return pairs


def distortion(R, A: FiniteMeasuredSpace, B: FiniteMeasuredSpace) -> float:
    """Largest |d_A(a, a2) - d_B(b, b2)| over pairs (a, b), (a2, b2) of R (0-based indices)."""
    pairs = _check_correspondence(R, A, B)
    ia = np.array([a for a, _ in pairs])
    ib = np.array([b for _, b in pairs])
    return float(np.abs(A.dist[np.ix_(ia, ia)] - B.dist[np.ix_(ib, ib)]).max())


def max_flow(cap_left, cap_right, edges) -> float:
    """Max flow in a bipartite network with vertex capacities (Edmonds-Karp).

    ``edges`` lists (i, j) pairs allowed to carry flow; they have no capacity of their own.
    """
    cl = [float(c) for c in cap_left]
    cr = [float(c) for c in cap_right]
    nl, nr = len(cl), len(cr)
    src, snk = nl + nr, nl + nr + 1
    size = nl + nr + 2
    cap: dict[tuple[int, int], float] = {}
    adj: list[set[int]] = [set() for _ in range(size)]

    def add(u, v, c):
        cap[(u, v)] = cap.get((u, v), 0.0) + c
        cap.setdefault((v, u), 0.0)
        adj[u].add(v)
        adj[v].add(u)

    big = sum(cl) + sum(cr) + 1.0
    for i, c in enumerate(cl):
        if c > 0:
            add(src, i, c)
    for j, c in enumerate(cr):
        if c > 0:
            add(nl + j, snk, c)
    for i, j in edges:
        if cl[i] > 0 and cr[j] > 0:
            add(i, nl + j, big)
    flow = 0.0
    eps = 1e-15 * big
    while True:
        prev = [-1] * size
        prev[src] = src
        queue = deque([src])
        while queue and prev[snk] < 0:
            u = queue.popleft()
            for v in adj[u]:
                if prev[v] < 0 and cap[(u, v)] > eps:
                    prev[v] = u
                    queue.append(v)
        if prev[snk] < 0:
            return flow
        push = math.inf
        v = snk
        while v != src:
            push = min(push, cap[(prev[v], v)])
            v = prev[v]
        v = snk
        while v != src:
            u = prev[v]
            cap[(u, v)] -= push
            cap[(v, u)] += push
            v = u
        flow += push


def inner_value(total_a: float, total_b: float, carried: float) -> float:
    """min over pi of max(D(pi; mu, mu'), pi(R^c)) given the max mass ``carried`` a coupling can put on R."""
    lo, hi = min(total_a, total_b), max(total_a, total_b)
    if hi + carried <= 2 * lo:
        return max((total_a + total_b - 2 * carried) / 3.0, 0.0)
    return max(hi - lo, lo - carried)


def _correspondence_value(pairs, A, B, dis=None) -> float:
    carried = max_flow(A.mass, B.mass, pairs)
    if dis is None:
        dis = distortion(pairs, A, B)
    return max(dis / 2.0, inner_value(A.total_mass, B.total_mass, carried))


def _maximal_cliques(nbr: list[int], k: int):
    """Bron-Kerbosch with pivoting over bitmask adjacency."""
    out = []

    def expand(r, p, x):
        if not p and not x:
            out.append(r)
            return
        pu = p | x
        pivot = max(range(k), key=lambda u: bin(nbr[u] & p).count("1") if pu >> u & 1 else -1)
        cand = p & ~nbr[pivot]
        while cand:
            low = cand & -cand
            v = low.bit_length() - 1
            expand(r | low, p & nbr[v], x & nbr[v])
            p &= ~low
            x |= low
            cand &= ~low

    expand(0, (1 << k) - 1, 0)
    return out


def _exact(A: FiniteMeasuredSpace, B: FiniteMeasuredSpace) -> float:
    ka, kb = A.size, B.size
    cells = [(a, b) for a in range(ka) for b in range(kb)]
    k = len(cells)
    ia = np.array([a for a, _ in cells])
    ib = np.array([b for _, b in cells])
    gap = np.abs(A.dist[np.ix_(ia, ia)] - B.dist[np.ix_(ib, ib)])
    full_a, full_b = (1 << ka) - 1, (1 << kb) - 1
    best = _correspondence_value(cells, A, B, float(gap.max()))
    for level in np.unique(gap):
        if level / 2.0 >= best:
            break
        ok = gap <= level
        nbr = [sum(1 << int(j) for j in np.flatnonzero(ok[i]) if j != i) for i in range(k)]
        for clique in _maximal_cliques(nbr, k):
            members = [i for i in range(k) if clique >> i & 1]
            cov_a = cov_b = 0
            for i in members:
                cov_a |= 1 << int(ia[i])
                cov_b |= 1 << int(ib[i])
            if cov_a != full_a or cov_b != full_b:
                continue
            pairs = [cells[i] for i in members]
            dis = float(gap[np.ix_(members, members)].max())
            best = min(best, _correspondence_value(pairs, A, B, dis))
    return best


def _greedy_pairs(A: FiniteMeasuredSpace, B: FiniteMeasuredSpace) -> list[tuple[int, int]]:
    """Match points whose sorted distance profiles look alike, then cover leftovers."""
    m = max(A.size, B.size)

    def profile(S, i):
        p = np.sort(S.dist[i])
        return np.pad(p, (0, m - p.size), mode="edge")

    pa = np.array([profile(A, i) for i in range(A.size)])
    pb = np.array([profile(B, j) for j in range(B.size)])
    cost = np.abs(pa[:, None, :] - pb[None, :, :]).max(axis=2)
    pairs = {(a, int(np.argmin(cost[a]))) for a in range(A.size)}
    pairs |= {(int(np.argmin(cost[:, b])), b) for b in range(B.size)}
    return sorted(pairs)


@dataclass(frozen=True)
class GHPBounds:
    lower: float
    upper: float

    def __iter__(self):
        return iter((self.lower, self.upper))


def _bounds(A: FiniteMeasuredSpace, B: FiniteMeasuredSpace) -> GHPBounds:
    lower = max(abs(A.total_mass - B.total_mass), abs(A.diameter - B.diameter) / 2.0)
    full = [(a, b) for a in range(A.size) for b in range(B.size)]
    upper = min(_correspondence_value(_greedy_pairs(A, B), A, B), _correspondence_value(full, A, B))
    return GHPBounds(lower, max(upper, lower))


def dghp(A: FiniteMeasuredSpace, B: FiniteMeasuredSpace, mode: str = "exact"):
    """Exact value (``mode="exact"``, needs size(A)*size(B) <= 20) or a ``GHPBounds`` pair."""
    if mode == "exact":
        if A.size * B.size > EXACT_CAP:
            raise TooLargeForExact(f"{A.size}x{B.size} exceeds the exact cap {EXACT_CAP}")
        return _exact(A, B)
    if mode == "bounds":
        return _bounds(A, B)
    raise ValueError(f"unknown mode {mode!r}")


def _dghp_best(A, B) -> tuple[float, bool]:
    """Exact value when allowed, otherwise the upper bound; the flag says which."""
    if A.size * B.size <= EXACT_CAP:
        return _exact(A, B), True
    return _bounds(A, B).upper, False


def dghp_surplus(A: FiniteMeasuredSpace, B: FiniteMeasuredSpace) -> float:
    if A.surplus is None or B.surplus is None:
        raise MissingSurplus("both spaces need a surplus annotation")
    return max(dghp(A, B, "exact"), float(abs(A.surplus - B.surplus)))


def f_k(mass: float, k: int) -> float:
    if k < 1:
        raise ValueError("k must be a positive integer")
    if mass < 0:
        raise ValueError("mass must be >= 0")
    if mass >= 1.0 / k:
        return 1.0
    if mass >= 1.0 / (k + 1):
        return k * (k + 1) * (mass - 1.0 / (k + 1))
    return 0.0


class _PairDistances:
    """Lazy cache of atom-to-atom distances between two collections."""

    def __init__(self, A: Collection, B: Collection, surplus: bool = False):
        self.A, self.B, self.surplus = A, B, surplus
        self.cache: dict[tuple[int, int], float] = {}
        self.exact = True

    def __call__(self, i: int, j: int) -> float:
        key = (i, j)
        if key not in self.cache:
            a, b = self.A.spaces[i], self.B.spaces[j]
            value, exact = _dghp_best(a, b)
            if self.surplus:
                if a.surplus is None or b.surplus is None:
                    raise MissingSurplus("surplus annotation missing")
                value = max(value, float(abs(a.surplus - b.surplus)))
            self.exact &= exact
            self.cache[key] = value
        return self.cache[key]


def _rho_weights(wa, wb, dist) -> float:
    ia = [i for i, w in enumerate(wa) if w > 0]
    jb = [j for j, w in enumerate(wb) if w > 0]
    top = max(math.fsum(wa), math.fsum(wb))
    if not ia or not jb:
        return top
    D = np.array([[dist(i, j) for j in jb] for i in ia], dtype=float)
    ca = [wa[i] for i in ia]
    cb = [wb[j] for j in jb]
    best = top
    for level in np.unique(np.concatenate([[0.0], D[np.isfinite(D)].ravel()])):
        if level >= best:
            break
        edges = [(p, q) for p, q in zip(*np.nonzero(D <= level))]
        best = min(best, max(float(level), top - max_flow(ca, cb, edges)))
    return best


def rho_lp(A: Collection, B: Collection, weight: int | None = None, surplus: bool = False,
           _dist: _PairDistances | None = None) -> float:
    """Levy-Prokhorov distance between the counting measures of two collections.

    Atoms are weighted by ``f_k`` of their total mass when ``weight=k``; the
    distance between atoms is d_GHP (exact when small enough, otherwise the
    bounds-mode upper value).
    """
    dist = _dist if _dist is not None else _PairDistances(A, B, surplus)
    if weight is None:
        wa = [1.0] * len(A)
        wb = [1.0] * len(B)
    else:
        wa = [f_k(m, weight) for m in A.masses()]
        wb = [f_k(m, weight) for m in B.masses()]
    return _rho_weights(wa, wb, dist)


@dataclass(frozen=True)
class LGHPResult:
    value: float
    terms: tuple[float, ...]
    tail_bound: float
    exact_atoms: bool

    def __float__(self):
        return self.value


def l_ghp(A: Collection, B: Collection, tol: float = 1e-6, surplus: bool = False) -> LGHPResult:
    """Partial sum of ``2^-k min(1, rho_LP(f_k A, f_k B))``; the omitted tail is below ``tail_bound``."""
    if tol <= 0:
        raise ValueError("tol must be > 0")
    dist = _PairDistances(A, B, surplus)
    terms = []
    k = 0
    while 2.0**-k >= tol:
        k += 1
        terms.append(2.0**-k * min(1.0, rho_lp(A, B, k, _dist=dist)))
    return LGHPResult(math.fsum(terms), tuple(terms), 2.0**-k, dist.exact)


def size_distance(a: np.ndarray, b: np.ndarray, p: int) -> float:
    m = max(a.size, b.size)
    d = np.pad(a, (0, m - a.size)) - np.pad(b, (0, m - b.size))
    return float(np.sum(np.abs(d) ** p) ** (1.0 / p)) if m else 0.0


def lp_ghp(A: Collection, B: Collection, p: int = 2, tol: float = 1e-6, surplus: bool = False) -> float:
    """max(L_GHP, l^p distance between the zero-padded sorted size sequences)."""
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    return max(l_ghp(A, B, tol, surplus).value, size_distance(A.sizes(), B.sizes(), p))


def matched_bound(A: Collection, B: Collection, sigma=None) -> float:
    """``sup_m d_GHP(m, sigma(m)) * (1 + 8 * count)`` for a bijection ``sigma`` (identity by default)."""
    if len(A) != len(B):
        raise ValueError("collections must have equal length")
    sigma = list(range(len(A))) if sigma is None else list(sigma)
    worst = max((_dghp_best(A.spaces[i], B.spaces[sigma[i]])[0] for i in range(len(A))), default=0.0)
    return worst * (1 + 8 * len(A))
