import math

import numpy as np
import pytest
from scipy import stats
from hypothesis import given
from hypothesis import strategies as st

from dynperc.dynamics import (ProcessSpec, duality_experiment, duality_params, edge_joint_law_coal,
                              edge_joint_law_frag, read_trajectory, run)
from dynperc.errors import DomainError, InvalidSpec
from dynperc.graph_state import GraphState, p_critical, sample_er


def empty(n):
    return GraphState(n, np.zeros((0, 2), dtype=np.int64))


class TestSpec:
    def test_critical_rates(self):
        n = 1000
        assert ProcessSpec.critical("coal", n, 0.0, 1.0).rate == pytest.approx(n ** (-4 / 3))
        frag = ProcessSpec.critical("frag", n, 0.0, 1.0)
        assert frag.rate == pytest.approx(0.1) and frag.add_rate == 0.0
        dyn = ProcessSpec.critical("dynperc", n, 1.0, 1.0)
        assert dyn.add_rate + dyn.del_rate == pytest.approx(0.1)
        assert dyn.add_rate == pytest.approx(0.1 * p_critical(1.0, n))

    @pytest.mark.parametrize("kw", [
        dict(mode="bogus", rate=1, horizon=1),
        dict(mode="coal", rate=-1, horizon=1),
        dict(mode="coal", rate=1, horizon=1, snapshot_times=(0.5, 0.2)),
        dict(mode="coal", rate=1, horizon=1, snapshot_times=(2.0,)),
        dict(mode="dynperc", rate=1, horizon=1),
    ])
    def test_invalid(self, kw):
        with pytest.raises(InvalidSpec):
            ProcessSpec(**kw)


def test_zero_rate_fragmentation_is_identity():
    g = sample_er(200, 1.0, 3)
    traj = run(g, ProcessSpec("frag", 0.0, 5.0, (0.0, 5.0)), 1)
    assert np.array_equal(traj.final.edges, g.edges) and traj.event_count == 0


def test_single_pair_coalescence():
    t, reps = 0.7, 10_000
    hits = sum(run(empty(2), ProcessSpec("coal", 1.0, t, (t,)), s).final.n_edges for s in range(reps))
    p = 1 - math.exp(-t)
    assert abs(hits / reps - p) < 3 * math.sqrt(p * (1 - p) / reps)


def test_three_vertex_configuration_law():
    """Class-aggregated sampler vs product of independent two-state chains."""
    n, T, rate, p, reps = 3, 1.0, 1.3, 0.4, 100_000
    start = GraphState(n, [(1, 2)])  # pair codes 0=(1,2), 1=(1,3), 2=(2,3)
    spec = ProcessSpec("dynperc", rate, T, (T,), p_refresh=p)
    counts = np.zeros(8)
    for s in range(reps):
        c = run(start, spec, s).final.codes
        counts[sum(1 << int(k) for k in c)] += 1
    decay = math.exp(-rate * T)
    on_from_on = p + (1 - p) * decay
    on_from_off = p * (1 - decay)
    marg = [on_from_on, on_from_off, on_from_off]
    q = np.array([math.prod(marg[k] if st >> k & 1 else 1 - marg[k] for k in range(3)) for st in range(8)])
    # family-wise check over 8 cells: omnibus chi-square plus Bonferroni-corrected 3-sigma per cell
    assert stats.chisquare(counts, q * reps).pvalue > 1e-3
    z = np.abs(counts / reps - q) / np.sqrt(q * (1 - q) / reps)
    assert np.all(z < stats.norm.isf(0.00135 / 8))


def test_stationary_event_rate():
    n, p, rate, T = 60, 0.25, 1.0, 3.0
    pairs = n * (n - 1) // 2
    adds = [run(sample_er(n, 0, s, p=p), ProcessSpec("dynperc", rate, T, (), p_refresh=p), s).n_additions
            for s in range(200)]
    mean = rate * p * (1 - p) * pairs * T
    assert abs(np.mean(adds) - mean) < 4 * math.sqrt(mean / 200)


def partition(state):
    lab = state.labels[1:]
    return lab


def refines(fine, coarse):
    """Every block of ``fine`` lies inside one block of ``coarse``."""
    mapping = {}
    for f, c in zip(fine.tolist(), coarse.tolist()):
        if mapping.setdefault(f, c) != c:
            return False
    return True


@pytest.mark.parametrize("mode", ["coal", "frag"])
def test_partition_monotonicity(mode):
    n = 400
    spec = ProcessSpec.critical(mode, n, 0.0, 3.0, snapshot_times=(0.0, 0.5, 1.0, 2.0, 3.0))
    traj = run(sample_er(n, 0.0, 9), spec, 9)
    labs = [partition(s.state) for s in traj.snapshots]
    for a, b in zip(labs, labs[1:]):
        assert refines(a, b) if mode == "coal" else refines(b, a)
    if mode == "coal":
        largest = [s.sizes().values[0] for s in traj.snapshots]
        assert largest == sorted(largest)


@pytest.mark.parametrize("mode", ["coal", "frag", "dynperc"])
def test_conservation_and_determinism(mode, tmp_path):
    n = 1000
    spec = ProcessSpec.critical(mode, n, 0.5, 2.0, snapshot_times=(0.0, 0.5, 1.0, 2.0))
    a = run(sample_er(n, 0.5, 4), spec, 4)
    b = run(sample_er(n, 0.5, 4), spec, 4)
    for s in a.snapshots:
        assert abs(s.sizes().total() - n ** (1 / 3)) < 1e-12
    a.write(tmp_path / "a.jsonl")
    b.write(tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    recs = read_trajectory(tmp_path / "a.jsonl")
    assert [r["t"] for r in recs] == list(spec.snapshot_times)
    assert set(recs[0]) == {"t", "components", "edge_count", "seed"}
    assert set(recs[0]["components"][0]) == {"size", "surplus", "diameter", "n_vertices"}


def test_snapshots_do_not_perturb_trajectory():
    n = 500
    g = sample_er(n, 0.0, 2)
    few = run(g, ProcessSpec.critical("dynperc", n, 0.0, 2.0, snapshot_times=(2.0,)), 7)
    many = run(g, ProcessSpec.critical("dynperc", n, 0.0, 2.0, snapshot_times=tuple(np.linspace(0, 2, 17))), 7)
    assert np.array_equal(few.final.edges, many.final.edges)
    assert np.array_equal(few.snapshots[-1].state.edges, many.snapshots[-1].state.edges)


def test_full_state_snapshots():
    n = 50
    g = sample_er(n, 0.0, 1)
    spec = ProcessSpec.critical("coal", n, 0.0, 1.0, snapshot_times=(0.0,), full_state=True)
    rec = run(g, spec, 1).snapshots[0].to_record(True)
    assert rec["edges"] == g.edges.tolist()


def test_capacity_growth_matches_roomy_run():
    """Growing the edge buffer mid-run must not change the trajectory."""
    from dynperc._kernel import EdgeProcess
    from dynperc.rng import stream
    args = (4950, np.zeros(0, dtype=np.int64), 1.0, 0.1)
    small = EdgeProcess(*args, stream(1, "a"), stream(1, "b"), capacity=4)
    roomy = EdgeProcess(*args, stream(1, "a"), stream(1, "b"), capacity=4950)
    small.advance(0.5)
    roomy.advance(0.5)
    assert np.array_equal(small.codes(), roomy.codes()) and small.count > 4


class TestDualityLaw:
    def test_params_examples(self):
        assert duality_params(0.3, 0.3, 1.0, 1.0) == (0.0, 0.0)
        t, tp = duality_params(0.2, 0.5, 1.0, 1.0)
        assert t == pytest.approx(math.log(1.6)) and tp == pytest.approx(math.log(2.5))

    def test_domain(self):
        with pytest.raises(DomainError):
            duality_params(0.5, 0.2, 1.0, 1.0)
        with pytest.raises(DomainError):
            duality_params(0.0, 0.2, 1.0, 1.0)

    def test_t_tends_to_s(self):
        s = 1.0
        errs = []
        for n in (10**3, 10**6):
            t, _ = duality_params(p_critical(0.0, n), p_critical(s, n), n ** (-4 / 3), n ** (-1 / 3))
            errs.append(abs(t - s))
        assert errs[1] < errs[0] < 0.01

    def test_law_examples(self):
        assert edge_joint_law_coal(0.3, 1.0, 0.0).as_tuple() == pytest.approx((0.7, 0.0, 0.0, 0.3))
        assert edge_joint_law_coal(0.5, 1.0, math.log(2)).as_tuple() == pytest.approx((0.25, 0.25, 0, 0.5))

    @given(st.floats(0.01, 0.98), st.floats(0.0, 1.0), st.floats(0.1, 10), st.floats(0.1, 10))
    def test_laws_coincide(self, p, frac, gp, gm):
        pp = p + frac * (0.99 - p)
        t, tp = duality_params(p, pp, gp, gm)
        a = edge_joint_law_coal(p, gp, t).as_tuple()
        b = edge_joint_law_frag(pp, gm, tp).as_tuple()
        assert np.max(np.abs(np.subtract(a, b))) < 1e-12
        assert sum(a) == pytest.approx(1.0)


def test_duality_experiment_small():
    rep = duality_experiment(30, 0.0, 1.0, 300, seed=2)
    assert not rep.coupled and rep.coal_cells[2] == 0 and rep.frag_cells[2] == 0
    z = rep.cell_z_scores()
    assert np.all(z["coal_pooled"] < 4) and np.all(z["frag_pooled"] < 4)
    obj = rep.to_json()
    assert obj["coupled"] is False and set(obj["closed_form"]) == {"p00", "p01", "p10", "p11"}
