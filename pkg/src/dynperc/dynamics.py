"""Coalescence, fragmentation and dynamical percolation on GraphState.

Every pair carries an addition clock and a deletion clock.  Clocks that
would not change the state are never simulated: additions fire at rate
``add_rate * #absent`` and deletions at ``del_rate * #present``, the
affected pair being uniform within its class.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import stats

from ._kernel import EdgeProcess
from .errors import DomainError, InvalidSpec
from .graph_state import GraphState, components, n_pairs, p_critical, sample_er, sizes_rescaled
from .rng import derive_seed, stream

__all__ = [
    "MODES",
    "ProcessSpec",
    "Snapshot",
    "Trajectory",
    "EdgeJointLaw",
    "run",
    "duality_params",
    "edge_joint_law_coal",
    "edge_joint_law_frag",
    "duality_experiment",
    "DualityReport",
    "read_trajectory",
]

MODES = ("coalescence", "fragmentation", "dynamical_percolation")
_ALIASES = {"coal": "coalescence", "frag": "fragmentation", "dynperc": "dynamical_percolation"}


def _mode(name: str) -> str:
    mode = _ALIASES.get(name, name)
    if mode not in MODES:
        raise InvalidSpec(f"unknown mode {name!r}")
    return mode


@dataclass(frozen=True)
class ProcessSpec:
    mode: str
    rate: float
    horizon: float
    snapshot_times: tuple[float, ...] = ()
    p_refresh: float | None = None
    full_state: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mode", _mode(self.mode))
        object.__setattr__(self, "snapshot_times", tuple(float(t) for t in self.snapshot_times))
        self.validate()

    @classmethod
    def critical(cls, mode: str, n: int, lam: float, horizon: float, snapshot_times=None,
                 full_state: bool = False) -> "ProcessSpec":
        """Window rates: ``n^{-4/3}`` (coalescence), ``n^{-1/3}`` (fragmentation and refresh)."""
        mode = _mode(mode)
        if snapshot_times is None:
            snapshot_times = (0.0, float(horizon))
        if mode == "coalescence":
            return cls(mode, n ** (-4.0 / 3.0), horizon, snapshot_times, None, full_state)
        if mode == "fragmentation":
            return cls(mode, n ** (-1.0 / 3.0), horizon, snapshot_times, None, full_state)
        return cls(mode, n ** (-1.0 / 3.0), horizon, snapshot_times, p_critical(lam, n), full_state)

    def validate(self) -> None:
        if not (self.rate >= 0 and math.isfinite(self.rate)):
            raise InvalidSpec("rate must be a finite nonnegative number")
        if not (self.horizon >= 0 and math.isfinite(self.horizon)):
            raise InvalidSpec("horizon must be finite and >= 0")
        ts = self.snapshot_times
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise InvalidSpec("snapshot_times must be sorted")
        if ts and (ts[0] < 0 or ts[-1] > self.horizon):
            raise InvalidSpec("snapshot_times must lie in [0, horizon]")
        if self.mode == "dynamical_percolation":
            if self.p_refresh is None or not 0.0 <= self.p_refresh <= 1.0:
                raise InvalidSpec("dynamical percolation needs p_refresh in [0, 1]")

    @property
    def add_rate(self) -> float:
        if self.mode == "coalescence":
            return self.rate
        if self.mode == "dynamical_percolation":
            return self.rate * self.p_refresh
        return 0.0

    @property
    def del_rate(self) -> float:
        if self.mode == "fragmentation":
            return self.rate
        if self.mode == "dynamical_percolation":
            return self.rate * (1.0 - self.p_refresh)
        return 0.0

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "rate": self.rate,
            "horizon": self.horizon,
            "snapshot_times": list(self.snapshot_times),
            "p_refresh": self.p_refresh,
            "full_state": self.full_state,
        }


@dataclass(frozen=True, eq=False)
class Snapshot:
    time: float
    state: GraphState = field(repr=False)

    @cached_property
    def components(self):
        return components(self.state)

    @property
    def edge_count(self) -> int:
        return self.state.n_edges

    def sizes(self):
        return sizes_rescaled(self.state)

    def to_record(self, full_state: bool = False, seed: int | None = None) -> dict:
        rec = {
            "t": float(self.time),
            "components": [c.to_record() for c in self.components],
            "edge_count": self.edge_count,
        }
        if full_state:
            rec["edges"] = self.state.edges.tolist()
        if seed is not None:
            rec["seed"] = int(seed)
        return rec


@dataclass(eq=False)
class Trajectory:
    spec: ProcessSpec
    snapshots: list[Snapshot]
    event_count: int
    seed: int
    n_additions: int = 0
    n_deletions: int = 0
    final: GraphState | None = field(default=None, repr=False)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(s.to_record(self.spec.full_state, self.seed)) + "\n" for s in self.snapshots)

    def write(self, path) -> None:
        Path(path).write_bytes(self.to_jsonl().encode("utf-8"))


def read_trajectory(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def run(state: GraphState, spec: ProcessSpec, seed: int) -> Trajectory:
    """Simulate ``spec`` from ``state``; snapshots hold the state after all events <= t."""
    spec.validate()
    n = state.n
    total = n_pairs(n)
    proc = EdgeProcess(total, state.codes, spec.add_rate, spec.del_rate,
                       stream(seed, "event_times"), stream(seed, "pair_selection"))
    snaps = []
    for t in spec.snapshot_times:
        proc.advance(t)
        snaps.append(Snapshot(t, GraphState.from_codes(n, proc.codes(), lam=state.lam, seed=state.seed, time=t)))
    proc.advance(spec.horizon)
    final = GraphState.from_codes(n, proc.codes(), lam=state.lam, seed=state.seed, time=spec.horizon)
    return Trajectory(spec, snaps, proc.n_add + proc.n_del, int(seed), proc.n_add, proc.n_del, final)


# -- time reversal ----------------------------------------------------------

@dataclass(frozen=True)
class EdgeJointLaw:
    """Law of (state before, state after) of one pair; 0 = absent, 1 = present."""

    p00: float
    p01: float
    p10: float
    p11: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.p00, self.p01, self.p10, self.p11)


def duality_params(p: float, p_prime: float, gamma_plus: float, gamma_minus: float) -> tuple[float, float]:
    """Times making coalescence from G(n,p) and fragmentation to G(n,p') mirror images."""
    if not (0.0 < p < 1.0 and 0.0 < p_prime < 1.0):
        raise DomainError("p and p' must lie in (0, 1)")
    if p > p_prime:
        raise DomainError("need p <= p' (times would be negative)")
    if gamma_plus <= 0 or gamma_minus <= 0:
        raise DomainError("rates must be positive")
    t = math.log((1.0 - p) / (1.0 - p_prime)) / gamma_plus
    t_prime = math.log(p_prime / p) / gamma_minus
    return t, t_prime


def edge_joint_law_coal(p: float, gamma: float, t: float) -> EdgeJointLaw:
    stay = math.exp(-gamma * t)
    return EdgeJointLaw((1.0 - p) * stay, (1.0 - p) * -math.expm1(-gamma * t), 0.0, p)


def edge_joint_law_frag(p_prime: float, mu: float, t_prime: float) -> EdgeJointLaw:
    return EdgeJointLaw(1.0 - p_prime, p_prime * -math.expm1(-mu * t_prime), 0.0, p_prime * math.exp(-mu * t_prime))


def _cells(before: GraphState, after: GraphState) -> np.ndarray:
    a = before.codes
    b = after.codes
    both = np.intersect1d(a, b, assume_unique=True).size
    only_a = a.size - both
    only_b = b.size - both
    none = n_pairs(before.n) - both - only_a - only_b
    return np.array([none, only_b, only_a, both], dtype=np.int64)


def _pair_cell(before: GraphState, after: GraphState, code: int) -> int:
    x = int(np.isin(code, before.codes))
    y = int(np.isin(code, after.codes))
    return 2 * x + y


@dataclass
class DualityReport:
    n: int
    lam: float
    s: float
    replicas: int
    seed: int
    p: float
    p_prime: float
    t: float
    t_prime: float
    law: EdgeJointLaw
    coal_cells: np.ndarray
    frag_cells: np.ndarray
    coal_pair_cells: np.ndarray
    frag_pair_cells: np.ndarray
    coal_largest: np.ndarray = field(repr=False)
    frag_largest: np.ndarray = field(repr=False)
    coupled: bool = False

    def _z(self, cells: np.ndarray) -> np.ndarray:
        total = cells.sum()
        q = np.asarray(self.law.as_tuple())
        freq = cells / total
        sigma = np.sqrt(q * (1 - q) / total)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(sigma > 0, np.abs(freq - q) / sigma, np.where(freq == q, 0.0, np.inf))
        return z

    def cell_z_scores(self) -> dict[str, np.ndarray]:
        return {
            "coal_pooled": self._z(self.coal_cells),
            "frag_pooled": self._z(self.frag_cells),
            "coal_pair": self._z(self.coal_pair_cells),
            "frag_pair": self._z(self.frag_pair_cells),
        }

    def ks(self) -> dict[str, tuple[float, float]]:
        out = {}
        for i, name in enumerate(("before", "after")):
            res = stats.ks_2samp(self.coal_largest[:, i], self.frag_largest[:, i])
            out[name] = (float(res.statistic), float(res.pvalue))
        return out

    def joint_histogram(self, which: str) -> dict[tuple[float, float], int]:
        arr = self.coal_largest if which == "coal" else self.frag_largest
        keys, counts = np.unique(arr, axis=0, return_counts=True)
        return {(float(a), float(b)): int(c) for (a, b), c in zip(keys, counts)}

    def to_json(self) -> dict:
        freq = lambda c: (c / c.sum()).tolist()  # noqa: E731
        return {
            "n": self.n, "lambda": self.lam, "s": self.s, "replicas": self.replicas, "seed": self.seed,
            "p": self.p, "p_prime": self.p_prime, "t": self.t, "t_prime": self.t_prime,
            "closed_form": dict(zip(("p00", "p01", "p10", "p11"), self.law.as_tuple())),
            "coal_cells": self.coal_cells.tolist(), "frag_cells": self.frag_cells.tolist(),
            "coal_freq": freq(self.coal_cells), "frag_freq": freq(self.frag_cells),
            "coal_pair_cells": self.coal_pair_cells.tolist(), "frag_pair_cells": self.frag_pair_cells.tolist(),
            "ks": {k: {"statistic": v[0], "pvalue": v[1]} for k, v in self.ks().items()},
            "coupled": self.coupled,
        }


def duality_experiment(n: int, lam: float, s: float, replicas: int, seed: int) -> DualityReport:
    """Sample (G(n,p), coalescence at t) and (fragmentation at t', G(n,p')) independently.

    The two directions use different named streams, so replicas are never
    coupled even though they share the master seed.
    """
    if replicas < 2:
        raise ValueError("replicas must be >= 2")
    p = p_critical(lam, n)
    p_prime = p_critical(lam + s, n)
    g_plus = n ** (-4.0 / 3.0)
    g_minus = n ** (-1.0 / 3.0)
    t, t_prime = duality_params(p, p_prime, g_plus, g_minus)
    coal = ProcessSpec("coalescence", g_plus, t, (t,))
    frag = ProcessSpec("fragmentation", g_minus, t_prime, (t_prime,))
    coal_cells = np.zeros(4, dtype=np.int64)
    frag_cells = np.zeros(4, dtype=np.int64)
    coal_pair = np.zeros(4, dtype=np.int64)
    frag_pair = np.zeros(4, dtype=np.int64)
    coal_largest = np.zeros((replicas, 2))
    frag_largest = np.zeros((replicas, 2))
    for r in range(replicas):
        s_c = derive_seed(seed, "duality-coal", r)
        g0 = sample_er(n, lam, s_c)
        g1 = run(g0, coal, s_c).final
        coal_cells += _cells(g0, g1)
        coal_pair[_pair_cell(g0, g1, 0)] += 1
        coal_largest[r] = sizes_rescaled(g0).values[0], sizes_rescaled(g1).values[0]

        s_f = derive_seed(seed, "duality-frag", r)
        h1 = sample_er(n, lam + s, s_f)
        h0 = run(h1, frag, s_f).final
        frag_cells += _cells(h0, h1)
        frag_pair[_pair_cell(h0, h1, 0)] += 1
        frag_largest[r] = sizes_rescaled(h0).values[0], sizes_rescaled(h1).values[0]
    law = edge_joint_law_coal(p, g_plus, t)
    return DualityReport(n, lam, s, replicas, seed, p, p_prime, t, t_prime, law, coal_cells, frag_cells,
                         coal_pair, frag_pair, coal_largest, frag_largest, coupled=False)
