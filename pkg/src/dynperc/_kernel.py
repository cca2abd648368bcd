"""Compiled event loop for edge addition/deletion dynamics.

The edge set is held as a dense array of present pair codes plus a typed
dict from code to position, so a uniform present edge and membership tests
are O(1).  Additions draw a uniform pair and reject present ones.
"""
from __future__ import annotations

import numba as nb
import numpy as np
from numba import types
from numba.typed import Dict


@nb.njit(cache=True)
def _fill(present, pos, codes):
    for i in range(codes.shape[0]):
        present[i] = codes[i]
        pos[codes[i]] = i
    return codes.shape[0]


@nb.njit(cache=True)
def _advance(rng_time, rng_pair, n_pairs, present, count, pos, t, t_stop, add_rate, del_rate, pending):
    """Run events up to ``t_stop``.

    ``pending`` is the already drawn time of the next event (negative if
    none).  It is carried across calls so that stopping at observation times
    does not change the trajectory.
    """
    n_add = 0
    n_del = 0
    while True:
        absent = n_pairs - count
        lam = add_rate * absent + del_rate * count
        if lam <= 0.0:
            return count, n_add, n_del, -1.0
        if pending < 0.0:
            pending = t + rng_time.exponential(1.0 / lam)
        if pending > t_stop:
            return count, n_add, n_del, pending
        if count == present.shape[0] and count < n_pairs:
            # out of room; caller grows ``present`` and resumes at ``pending``
            return count, n_add, n_del, pending
        t = pending
        pending = -1.0
        if rng_pair.random() * lam < add_rate * absent:
            while True:
                k = rng_pair.integers(0, n_pairs)
                if k not in pos:
                    break
            pos[k] = count
            present[count] = k
            count += 1
            n_add += 1
        else:
            i = rng_pair.integers(0, count)
            k = present[i]
            last = present[count - 1]
            present[i] = last
            pos[last] = i
            del pos[k]
            count -= 1
            n_del += 1


class EdgeProcess:
    """Mutable edge set driven by class-aggregated exponential clocks."""

    def __init__(self, n_pairs: int, codes: np.ndarray, add_rate: float, del_rate: float,
                 rng_time: np.random.Generator, rng_pair: np.random.Generator, capacity: int | None = None):
        self.n_pairs = int(n_pairs)
        codes = np.asarray(codes, dtype=np.int64)
        cap = capacity if capacity is not None else min(n_pairs, max(1024, 2 * len(codes)))
        self.present = np.zeros(max(int(cap), len(codes), 1), dtype=np.int64)
        self.pos = Dict.empty(key_type=types.int64, value_type=types.int64)
        self.count = _fill(self.present, self.pos, codes)
        self.add_rate = float(add_rate)
        self.del_rate = float(del_rate)
        self.rng_time = rng_time
        self.rng_pair = rng_pair
        self.t = 0.0
        self.pending = -1.0
        self.n_add = 0
        self.n_del = 0

    def advance(self, t_stop: float) -> None:
        while True:
            count, a, d, pending = _advance(self.rng_time, self.rng_pair, self.n_pairs, self.present,
                                            self.count, self.pos, self.t, float(t_stop), self.add_rate,
                                            self.del_rate, self.pending)
            self.count = count
            self.n_add += a
            self.n_del += d
            self.pending = pending
            if count < self.present.shape[0] or count == self.n_pairs or pending < 0.0 or pending > t_stop:
                break
            grown = np.zeros(min(self.n_pairs, 2 * self.present.shape[0]), dtype=np.int64)
            grown[:count] = self.present[:count]
            self.present = grown
            # resume from the unexecuted event; its time is already drawn
            self.t = pending
        self.t = float(t_stop)

    def codes(self) -> np.ndarray:
        return np.sort(self.present[: self.count])
