"""Multiplicative coalescent on finite mass vectors.

Blocks ``i`` and ``j`` are joined by a Poisson(``t x_i x_j``) number of
edges, block ``i`` carries a Poisson(``t x_i^2 / 2``) number of loops.  The
whole clock set is one Poisson process of intensity ``||x||_1^2 / 2`` whose
points pick both endpoints independently with probability proportional to
``x``; restricting its points to times ``<= t`` gives MG(x, t) for every
``t`` at once, which is the monotone coupling used by the structure checks.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import BadPartition, InstanceTooLarge, Unsatisfiable
from .rng import stream

__all__ = [
    "MassVector",
    "CoalMultigraph",
    "Thresholds",
    "StructureReport",
    "LemmaResult",
    "sample_mg",
    "sample_mg_path",
    "component_labels",
    "s_statistic",
    "s_of_graph",
    "tail_s",
    "thresholds",
    "analyze_structure",
    "classify_structure",
    "lemma20_bound",
    "check_lemma20",
    "check_lemma23",
    "check_lemma17",
    "check_pourSkorL2",
    "random_lemma17_instance",
    "random_pourskor_instance",
    "lemma_csv",
]

MAX_EXHAUSTIVE_EDGES = 10


@dataclass(frozen=True, eq=False)
class MassVector:
    x: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        if x.size and (np.any(x <= 0) or np.any(np.diff(x) > 0)):
            raise ValueError("masses must be positive and non-increasing")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @classmethod
    def from_values(cls, values) -> "MassVector":
        v = np.asarray(values, dtype=float).ravel()
        return cls(np.sort(v[v > 0])[::-1])

    def __len__(self):
        return self.x.size


def _as_array(x) -> np.ndarray:
    return x.x if isinstance(x, MassVector) else np.asarray(x, dtype=float)


@dataclass(frozen=True, eq=False)
class CoalMultigraph:
    """Edges are 1-based ``(i, j)`` with ``i <= j``; ``i == j`` is a loop."""

    block_count: int
    edges: np.ndarray = field(repr=False)
    times: np.ndarray | None = field(default=None, repr=False)

    def at(self, t: float) -> "CoalMultigraph":
        if self.times is None:
            raise ValueError("no clock times recorded")
        keep = self.times <= t
        return CoalMultigraph(self.block_count, self.edges[keep], self.times[keep])

    def multiplicities(self) -> dict[tuple[int, int], int]:
        out: dict[tuple[int, int], int] = {}
        for i, j in self.edges.tolist():
            out[(i, j)] = out.get((i, j), 0) + 1
        return out

    def simple_pairs(self) -> set[tuple[int, int]]:
        """Edge set of the simple graph W(x, t): loops dropped, multi-edges merged."""
        return {(i, j) for i, j in self.edges.tolist() if i != j}


def sample_mg_path(x, t_max: float, seed: int) -> CoalMultigraph:
    """All clock rings up to ``t_max``, with their times."""
    x = _as_array(x)
    if t_max < 0:
        raise ValueError("t must be >= 0")
    k = x.size
    rng = stream(seed, "mg")
    l1 = float(x.sum())
    count = int(rng.poisson(t_max * l1 * l1 / 2.0)) if k else 0
    if count == 0:
        return CoalMultigraph(k, np.zeros((0, 2), dtype=np.int64), np.zeros(0))
    cdf = np.cumsum(x) / l1
    ends = np.minimum(np.searchsorted(cdf, rng.random((count, 2)), side="right"), k - 1)
    times = rng.random(count) * t_max
    ends = np.sort(ends, axis=1) + 1
    order = np.argsort(times, kind="stable")
    return CoalMultigraph(k, ends[order], times[order])


def sample_mg(x, t: float, seed: int) -> CoalMultigraph:
    return sample_mg_path(x, t, seed)


def component_labels(k: int, edges: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Component labels of blocks ``0..k-1`` using 1-based ``edges``; ``mask`` restricts to a block subset.

    Blocks outside ``mask`` get label -1.
    """
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2) - 1
    if mask is not None:
        e = e[mask[e[:, 0]] & mask[e[:, 1]]]
    mat = coo_matrix((np.ones(len(e), dtype=np.int8), (e[:, 0], e[:, 1])), shape=(k, k))
    _, lab = connected_components(mat, directed=False)
    if mask is not None:
        lab = np.where(mask, lab, -1)
    return lab


def _s_from_labels(x: np.ndarray, lab: np.ndarray) -> float:
    keep = lab >= 0
    if not np.any(keep):
        return 0.0
    masses = np.bincount(lab[keep], weights=x[keep])
    return float(np.sum(masses**2))


def s_of_graph(x, edges, mask: np.ndarray | None = None) -> float:
    """S of the graph on ``x`` (or on the blocks in ``mask``) with the given edges."""
    x = _as_array(x)
    return _s_from_labels(x, component_labels(x.size, edges, mask))


def s_statistic(x, partition) -> float:
    """Sum over blocks of the partition of the squared total mass."""
    x = _as_array(x)
    seen: set[int] = set()
    total = 0.0
    for block in partition:
        block = list(block)
        for i in block:
            if not 1 <= i <= x.size or i in seen:
                raise BadPartition(f"index {i} repeated or out of range")
            seen.add(i)
        total += math.fsum(x[i - 1] for i in block) ** 2
    if len(seen) != x.size:
        raise BadPartition("partition does not cover every index")
    return total


def tail_s(x, level: float) -> float:
    """S(x_{<= level}, 0): sum of squares of the masses not exceeding ``level``."""
    x = _as_array(x)
    small = x[x <= level]
    return float(np.sum(small**2))


@dataclass(frozen=True)
class Thresholds:
    epsilon: float
    epsilon1: float
    epsilon2: float
    K: float
    T: float
    samples: int = 0
    tail_probability: float = float("nan")

    def check(self, x) -> dict[str, bool]:
        """Replay the three hypotheses of the structure lemma."""
        x = _as_array(x)
        eps, e1, e2, K, T = self.epsilon, self.epsilon1, self.epsilon2, self.K, self.T
        return {
            "order": 0 < e2 < e1 < eps < 1 and K >= 1,
            "K": self.tail_probability <= eps / 100,
            "epsilon1": tail_s(x, e1) <= eps**2 / (100 * (1 + T + K * T**2)),
            "epsilon2": tail_s(x, e2) <= 2 * e1**2 * eps**2 / (100 * (1 + T * (K + 2)) ** 2),
        }


def sample_s(x, t: float, samples: int, seed: int) -> np.ndarray:
    x = _as_array(x)
    out = np.empty(samples)
    for r in range(samples):
        out[r] = s_of_graph(x, sample_mg(x, t, _child(seed, "S", r)).edges)
    return out


def _child(seed: int, name: str, r: int) -> int:
    from .rng import derive_seed
    return derive_seed(seed, name, r)


def thresholds(x, epsilon: float, T: float, samples: int = 10_000, seed: int = 0,
               max_level: int = 60) -> Thresholds:
    """Dyadic K, epsilon1, epsilon2 meeting the structure lemma's hypotheses.

    K is the smallest power of two with empirical P(S(x, T) >= K) <= epsilon/100.
    """
    x = _as_array(x)
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if T < 0:
        raise ValueError("T must be >= 0")
    s = sample_s(x, T, samples, seed)
    K = 1.0
    while np.mean(s >= K) > epsilon / 100:
        K *= 2.0
    tail_p = float(np.mean(s >= K))

    def largest(below: float, cap: float) -> float:
        for j in range(max_level + 1):
            level = 2.0**-j
            if level < below and tail_s(x, level) <= cap:
                return level
        raise Unsatisfiable(f"no dyadic level below {below} with tail S <= {cap}")

    e1 = largest(epsilon, epsilon**2 / (100 * (1 + T + K * T**2)))
    e2 = largest(e1, 2 * e1**2 * epsilon**2 / (100 * (1 + T * (K + 2)) ** 2))
    return Thresholds(epsilon, e1, e2, K, T, samples, tail_p)


@dataclass
class ComponentStructure:
    blocks: list[int]
    mass: float
    heart: list[int]
    hanging: list[int]
    attachments: dict[int, int]
    hanging_mass: float
    boundary_small: bool

    @property
    def single_attachments(self) -> bool:
        return all(m == 1 for m in self.attachments.values())


@dataclass
class StructureReport:
    thresholds: Thresholds
    t: float
    times: tuple[float, ...]
    flags: dict[str, bool]
    components: list[ComponentStructure]
    failed_at: dict[str, list[float]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.flags.values())

    def to_json(self) -> dict:
        return {
            "epsilon": self.thresholds.epsilon,
            "epsilon1": self.thresholds.epsilon1,
            "epsilon2": self.thresholds.epsilon2,
            "K": self.thresholds.K,
            "T": self.thresholds.T,
            "t": self.t,
            "times": list(self.times),
            "flags": self.flags,
            "failed_at": self.failed_at,
            "components": [asdict(c) | {"attachments": {str(k): v for k, v in c.attachments.items()}}
                           for c in self.components],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def _flags(x: np.ndarray, edges: np.ndarray, th: Thresholds):
    k = x.size
    eps, e1, e2 = th.epsilon, th.epsilon1, th.epsilon2
    large = x > e1
    small = ~large
    above2 = x > e2
    lab = component_labels(k, edges)
    masses = np.bincount(lab, weights=x)
    flags = {}
    # (a) significant components contain a Large block
    has_large = np.zeros(masses.size, dtype=bool)
    has_large[lab[large]] = True
    flags["a"] = bool(np.all(has_large[masses > eps]))
    # (b) the graph restricted to blocks <= epsilon1 is a forest
    e0 = np.asarray(edges, dtype=np.int64).reshape(-1, 2) - 1
    inner = e0[small[e0[:, 0]] & small[e0[:, 1]]]
    lab_s = component_labels(k, edges, small)
    n_small_comp = np.unique(lab_s[small]).size
    flags["b"] = bool(np.all(inner[:, 0] != inner[:, 1]) and len(inner) == int(small.sum()) - n_small_comp)
    # (c) at most one edge between a small-side and a large-side component
    lab_l = component_labels(k, edges, large)
    cross = e0[small[e0[:, 0]] != small[e0[:, 1]]]
    if len(cross):
        s_end = np.where(small[cross[:, 0]], cross[:, 0], cross[:, 1])
        l_end = np.where(small[cross[:, 0]], cross[:, 1], cross[:, 0])
        keys = lab_s[s_end].astype(np.int64) * (k + 1) + lab_l[l_end]
        flags["c"] = bool(np.unique(keys).size == keys.size)
    else:
        flags["c"] = True
    # (d) S(x,t) - S(x_{>eps2},t) <= 2 eps1^2
    lab_2 = component_labels(k, edges, above2)
    s_all = float(np.sum(masses**2))
    s_2 = _s_from_labels(x, lab_2)
    flags["d"] = bool(s_all - s_2 <= 2 * e1**2)
    # (e) Large blocks: mass gap between full and >eps2-restricted components below eps1
    if np.any(large):
        m2 = np.bincount(lab_2[above2], weights=x[above2])
        gaps = masses[lab[large]] - m2[lab_2[large]]
        flags["e"] = bool(np.all(gaps < e1))
    else:
        flags["e"] = True
    return flags, lab, masses, lab_2


def _anatomy(x, edges, th: Thresholds, lab, masses, lab_2) -> list[ComponentStructure]:
    k = x.size
    large = x > th.epsilon1
    e0 = np.asarray(edges, dtype=np.int64).reshape(-1, 2) - 1
    out = []
    for c in np.flatnonzero(masses > th.epsilon):
        blocks = np.flatnonzero(lab == c)
        heart_labels = set(lab_2[blocks[large[blocks]]].tolist()) - {-1}
        in_heart = np.zeros(k, dtype=bool)
        for hl in heart_labels:
            in_heart |= lab_2 == hl
        in_heart &= lab == c
        hanging = blocks[~in_heart[blocks]]
        hang_mask = np.zeros(k, dtype=bool)
        hang_mask[hanging] = True
        lab_h = component_labels(k, edges, hang_mask)
        attach: dict[int, int] = {}
        boundary_small = True
        for a, b in e0.tolist():
            if hang_mask[a] and in_heart[b]:
                a, b = a, b
            elif hang_mask[b] and in_heart[a]:
                a, b = b, a
            else:
                continue
            root = int(np.flatnonzero(lab_h == lab_h[a])[0]) + 1
            attach[root] = attach.get(root, 0) + 1
            if x[a] > th.epsilon2:
                boundary_small = False
        out.append(ComponentStructure(
            blocks=(blocks + 1).tolist(),
            mass=float(masses[c]),
            heart=(np.flatnonzero(in_heart) + 1).tolist(),
            hanging=(hanging + 1).tolist(),
            attachments=attach,
            hanging_mass=float(x[hanging].sum()),
            boundary_small=boundary_small,
        ))
    return out


def analyze_structure(x, mg: CoalMultigraph, th: Thresholds, times=None) -> StructureReport:
    """Evaluate flags (a)-(e) at each time of ``times`` (default: all of ``mg``) and
    the heart/hanging-tree anatomy of the significant components at the last time."""
    x = _as_array(x)
    if times is None:
        times = (float(mg.times[-1]) if mg.times is not None and len(mg.times) else 0.0,)
    times = tuple(float(t) for t in times)
    agg = dict.fromkeys("abcde", True)
    failed: dict[str, list[float]] = {}
    for t in times:
        edges = mg.at(t).edges if mg.times is not None else mg.edges
        flags, lab, masses, lab_2 = _flags(x, edges, th)
        for key, ok in flags.items():
            if not ok:
                agg[key] = False
                failed.setdefault(key, []).append(t)
    anatomy = _anatomy(x, edges, th, lab, masses, lab_2)
    return StructureReport(th, times[-1], times, agg, anatomy, failed)


def classify_structure(x, t: float, th: Thresholds, seed: int, grid: int = 4) -> StructureReport:
    """Sample one clock path up to ``t`` and check the flags on ``grid`` equally spaced times."""
    x = _as_array(x)
    mg = sample_mg_path(x, t, seed)
    times = [t * (i + 1) / grid for i in range(grid)] if t > 0 else [0.0]
    return analyze_structure(x, mg, th, times)


# -- lemma checkers ---------------------------------------------------------

@dataclass
class LemmaResult:
    lemma: str
    instance: int
    statistic: float
    bound: float
    passed: bool
    detail: str = ""


def lemma_csv(results: list[LemmaResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["instance", "lemma", "statistic", "bound", "pass"])
    for r in results:
        w.writerow([r.instance, r.lemma, repr(r.statistic), repr(r.bound), int(r.passed)])
    return buf.getvalue()


def lemma20_bound(x, t: float, s: float) -> float:
    s0 = float(np.sum(_as_array(x) ** 2))
    if s <= s0:
        raise ValueError("need s > S(x, 0)")
    return t * s * s0 / (s - s0)


def check_lemma20(x, t: float, s: float, replicas: int, seed: int, instance: int = 0) -> LemmaResult:
    """Monte-Carlo P(S(x,t) > s) against ``t s S(x,0) / (s - S(x,0))``."""
    x = _as_array(x)
    bound = lemma20_bound(x, t, s)
    svals = sample_s(x, t, replicas, seed)
    phat = float(np.mean(svals > s))
    sigma = math.sqrt(max(phat * (1 - phat), 1.0 / replicas) / replicas)
    return LemmaResult("lemma20", instance, phat, bound, phat <= bound + 3 * sigma, f"sigma={sigma}")


def check_lemma23(z, m: int, t: float, epsilon: float, replicas: int, seed: int,
                  instance: int = 0) -> LemmaResult:
    """Bipartite graph between blocks ``1..m`` and ``m+1..n``:
    ``eps * P(sum Z^2 >= alpha1 + eps) <= (1 + t(alpha1 + eps))^2 alpha2``."""
    z = np.asarray(z, dtype=float)
    n = z.size
    if not 1 <= m < n:
        raise ValueError("need 1 <= m < n")
    alpha1 = float(np.sum(z[:m] ** 2))
    alpha2 = float(np.sum(z[m:] ** 2))
    bound = (1 + t * (alpha1 + epsilon)) ** 2 * alpha2
    prob = -np.expm1(-t * np.outer(z[:m], z[m:]))
    rng = stream(seed, "lemma23")
    ii, jj = np.meshgrid(np.arange(m), np.arange(m, n), indexing="ij")
    hits = 0
    for _ in range(replicas):
        present = rng.random(prob.shape) < prob
        edges = np.stack([ii[present], jj[present]], axis=1) + 1
        if s_of_graph(z, edges) >= alpha1 + epsilon:
            hits += 1
    phat = hits / replicas
    sigma = math.sqrt(max(phat * (1 - phat), 1.0 / replicas) / replicas)
    return LemmaResult("lemma23", instance, epsilon * phat, bound, epsilon * phat <= bound + 3 * epsilon * sigma,
                       f"sigma={sigma}")


def _sizes_desc(x: np.ndarray, edges) -> np.ndarray:
    lab = component_labels(x.size, edges) if x.size else np.zeros(0, dtype=np.int64)
    m = np.bincount(lab, weights=x) if x.size else np.zeros(0)
    return np.sort(m)[::-1]


def check_lemma17(instances, tol: float = 1e-12) -> list[LemmaResult]:
    """For every subgraph G of G~ (all edge subsets), with weights x <= x~:
    ``||a~ - a||_2^2 <= sum a~^2 - sum a^2``.

    Each instance is ``(edges, x_tilde, x)`` with 1-based edges.
    """
    out = []
    for idx, (edges, x_tilde, x) in enumerate(instances):
        edges = [tuple(e) for e in edges]
        if len(edges) > MAX_EXHAUSTIVE_EDGES:
            raise InstanceTooLarge(f"instance {idx} has {len(edges)} edges")
        xt = np.asarray(x_tilde, dtype=float)
        xs = np.asarray(x, dtype=float)
        if np.any(xs > xt) or np.any(xs < 0):
            raise ValueError("need 0 <= x <= x_tilde")
        a_t = _sizes_desc(xt, np.asarray(edges, dtype=np.int64).reshape(-1, 2))
        worst = -math.inf
        for mask in itertools.product((False, True), repeat=len(edges)):
            sub = np.asarray([e for e, keep in zip(edges, mask) if keep], dtype=np.int64).reshape(-1, 2)
            a = _sizes_desc(xs, sub)
            pad = np.zeros(max(a_t.size, a.size))
            d = pad.copy()
            d[: a_t.size] += a_t
            d[: a.size] -= a
            lhs = float(np.sum(d**2))
            rhs = float(np.sum(a_t**2) - np.sum(a**2))
            worst = max(worst, lhs - rhs)
        out.append(LemmaResult("lemma17", idx, worst, 0.0, worst <= tol))
    return out


def _s_sub(x: np.ndarray, keep: np.ndarray, edges: list[tuple[int, int]]) -> float:
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    return _s_from_labels(x, component_labels(x.size, e, keep))


def pourskor_hypothesis(x, edges, W) -> bool:
    """At most one edge of E between any component of (W, E) and any of (V minus W, E)."""
    x = np.asarray(x, dtype=float)
    k = x.size
    w = np.zeros(k, dtype=bool)
    w[np.asarray(sorted(W), dtype=np.int64) - 1] = True
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    lab_w = component_labels(k, e, w)
    lab_v = component_labels(k, e, ~w)
    seen = set()
    for a, b in (e - 1).tolist():
        if w[a] == w[b]:
            continue
        if not w[a]:
            a, b = b, a
        key = (lab_w[a], lab_v[b])
        if key in seen:
            return False
        seen.add(key)
    return True


def check_pourSkorL2(instances, tol: float = 1e-12) -> list[LemmaResult]:
    """For every E' subset of E: ``S(V,E) - S(W,E) >= S(V,E') - S(W,E')``.

    Each instance is ``(x, edges, W)``; edges may repeat (multigraph).
    """
    out = []
    for idx, (x, edges, W) in enumerate(instances):
        edges = [tuple(e) for e in edges]
        if len(edges) > MAX_EXHAUSTIVE_EDGES:
            raise InstanceTooLarge(f"instance {idx} has {len(edges)} edges")
        x = np.asarray(x, dtype=float)
        if not pourskor_hypothesis(x, edges, W):
            out.append(LemmaResult("pourSkorL2", idx, math.nan, 0.0, False, "hypothesis on W not met"))
            continue
        all_v = np.ones(x.size, dtype=bool)
        w = np.zeros(x.size, dtype=bool)
        w[np.asarray(sorted(W), dtype=np.int64) - 1] = True
        full = _s_sub(x, all_v, edges) - _s_sub(x, w, edges)
        worst = math.inf
        for mask in itertools.product((False, True), repeat=len(edges)):
            sub = [e for e, keep in zip(edges, mask) if keep]
            worst = min(worst, full - (_s_sub(x, all_v, sub) - _s_sub(x, w, sub)))
        out.append(LemmaResult("pourSkorL2", idx, worst, 0.0, worst >= -tol))
    return out


def random_lemma17_instance(rng: np.random.Generator, max_vertices: int = 10, max_edges: int = 8):
    k = int(rng.integers(1, max_vertices + 1))
    pairs = [(i, j) for i in range(1, k + 1) for j in range(i + 1, k + 1)]
    m = int(rng.integers(0, min(max_edges, len(pairs)) + 1))
    chosen = [pairs[i] for i in rng.choice(len(pairs), size=m, replace=False)] if m else []
    x_tilde = rng.random(k) + 0.01
    x = x_tilde * rng.random(k)
    return chosen, x_tilde, x


def random_pourskor_instance(rng: np.random.Generator, max_vertices: int = 8, max_edges: int = 8,
                             tries: int = 1000):
    """Random weighted multigraph with a vertex subset W that satisfies the hypothesis."""
    for _ in range(tries):
        k = int(rng.integers(1, max_vertices + 1))
        m = int(rng.integers(0, max_edges + 1)) if k > 1 else 0
        edges = []
        for _ in range(m):
            a, b = rng.choice(k, size=2, replace=False) + 1
            edges.append((int(min(a, b)), int(max(a, b))))
        x = rng.random(k) + 0.01
        W = {int(i) + 1 for i in np.flatnonzero(rng.random(k) < 0.5)}
        if pourskor_hypothesis(x, edges, W):
            return x, edges, W
    raise RuntimeError("could not draw an instance satisfying the hypothesis")
