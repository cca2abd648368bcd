import itertools
import json
import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dynperc.errors import InvalidWindow, UnknownComponent
from dynperc.graph_state import (GraphState, component_diameter, components, exploration, n_pairs,
                                 p_critical, pair_from_index, pair_index, read_snapshot, sample_er,
                                 sizes_rescaled, write_snapshot)
from strategies import small_graphs, small_trees


def G(n, edges):
    return GraphState(n, np.asarray(edges, dtype=np.int64).reshape(-1, 2))


def to_nx(state):
    g = nx.Graph()
    g.add_nodes_from(range(1, state.n + 1))
    g.add_edges_from(state.edges.tolist())
    return g


class TestPCritical:
    def test_examples(self):
        assert p_critical(0, 1000) == pytest.approx(0.001, abs=0, rel=1e-15)
        assert p_critical(2, 4096) == 0.000274658203125
        assert p_critical(-2.0, 8) == 0.0

    def test_clamping_and_strict(self):
        assert p_critical(-100, 8) == 0.0
        assert p_critical(1e6, 8) == 1.0
        with pytest.raises(InvalidWindow):
            p_critical(-100, 8, strict=True)
        with pytest.raises(InvalidWindow):
            p_critical(1e6, 8, strict=True)


@given(st.integers(2, 60), st.data())
def test_pair_codes_roundtrip(n, data):
    u = data.draw(st.integers(1, n - 1))
    v = data.draw(st.integers(u + 1, n))
    k = pair_index(u, v, n)
    assert 0 <= k < n_pairs(n)
    assert tuple(pair_from_index(np.array([k]), n)[0]) == (u, v)


def test_pair_codes_are_lexicographic():
    n = 7
    codes = [pair_index(u, v, n) for u, v in itertools.combinations(range(1, n + 1), 2)]
    assert codes == list(range(n_pairs(n)))


class TestGraphState:
    def test_rejects_bad_edges(self):
        with pytest.raises(ValueError):
            G(3, [(1, 4)])
        with pytest.raises(ValueError):
            G(3, [(1, 2), (2, 1)])
        with pytest.raises(ValueError):
            G(3, [(2, 2)])

    def test_edges_canonical(self):
        g = G(4, [(3, 4), (1, 2)])
        assert g.edges.tolist() == [[1, 2], [3, 4]]
        with pytest.raises(ValueError):
            G(4, [(2, 1)])

    def test_snapshot_roundtrip(self, tmp_path):
        g = sample_er(300, 1.5, seed=4)
        path = tmp_path / "snap.json"
        write_snapshot(g, path)
        text = path.read_text()
        back = read_snapshot(path)
        assert back == g
        write_snapshot(back, tmp_path / "again.json")
        assert (tmp_path / "again.json").read_text() == text
        assert list(json.loads(text)) == ["n", "lambda", "seed", "time", "edges"]

    def test_unknown_component(self):
        g = G(3, [(1, 2)])
        with pytest.raises(UnknownComponent):
            g.component_vertices(2)
        with pytest.raises(UnknownComponent):
            component_diameter(g, 9)


class TestSampleER:
    def test_forced_edge_and_empty(self):
        assert sample_er(2, 10.0, 0).edges.tolist() == [[1, 2]]
        assert sample_er(5, -(5 ** (1 / 3)) * 2, 0).n_edges == 0

    def test_deterministic(self):
        a, b = sample_er(500, 0.0, 17), sample_er(500, 0.0, 17)
        assert np.array_equal(a.edges, b.edges)
        assert not np.array_equal(a.edges, sample_er(500, 0.0, 18).edges)

    def test_edge_count_moments(self):
        counts = np.array([sample_er(1000, 0.0, s).n_edges for s in range(200)])
        mean, sigma = 499.5, math.sqrt(499.5 * 0.999)
        assert abs(counts.mean() - mean) < 3 * sigma / math.sqrt(200)
        assert abs(counts.std() - sigma) < 0.2 * sigma

    def test_pair_marginals_small_n(self):
        # every pair present with probability p, pairs pairwise uncorrelated
        n, p, reps = 5, 0.3, 4000
        hits = np.zeros(n_pairs(n))
        both = 0
        for s in range(reps):
            c = sample_er(n, 0.0, s, p=p).codes
            hits[c] += 1
            both += (0 in c) and (9 in c)
        sigma = math.sqrt(p * (1 - p) / reps)
        assert np.all(np.abs(hits / reps - p) < 4 * sigma)
        assert abs(both / reps - p * p) < 4 * math.sqrt(p * p * (1 - p * p) / reps)


class TestComponents:
    def test_empty_graph(self):
        cs = components(G(3, []))
        assert [c.n_vertices for c in cs] == [1, 1, 1]
        assert all(c.size == pytest.approx(3 ** (-2 / 3)) for c in cs)

    def test_triangle(self):
        (c,) = components(G(3, [(1, 2), (2, 3), (1, 3)]))
        assert c.surplus == 1 and c.diameter == pytest.approx(3 ** (-1 / 3))

    def test_path_plus_isolated(self):
        cs = components(G(4, [(1, 2), (2, 3)]))
        assert [c.size for c in cs] == pytest.approx([3 * 4 ** (-2 / 3), 4 ** (-2 / 3)])
        assert [c.surplus for c in cs] == [0, 0]
        assert [c.id for c in cs] == [1, 4]

    def test_sorted_by_size_then_id(self):
        cs = components(G(7, [(5, 6), (2, 3), (1, 7), (4, 7)]))
        assert [(c.n_vertices, c.id) for c in cs] == [(3, 1), (2, 2), (2, 5)]

    @given(small_graphs())
    def test_against_networkx(self, g):
        ref = to_nx(g)
        cs = components(g)
        assert sorted(c.n_vertices for c in cs) == sorted(len(cc) for cc in nx.connected_components(ref))
        for c in cs:
            verts = set(g.component_vertices(c.id).tolist())
            assert c.id == min(verts)
            sub = ref.subgraph(verts)
            assert c.n_edges == sub.number_of_edges()
            assert c.surplus >= 0
            assert (c.surplus == 0) == nx.is_forest(sub)
            assert c.diameter_hops == nx.diameter(sub)
            assert c.diameter_hops <= c.n_vertices - 1

    @given(small_graphs())
    def test_conservation(self, g):
        assert sizes_rescaled(g).total() == pytest.approx(g.n ** (1 / 3), abs=1e-12)


def test_sizes_rescaled_example():
    g = G(8, [(1, 2), (2, 3), (3, 4), (5, 6), (6, 7)])
    assert sizes_rescaled(g).values.tolist() == [1.0, 0.75, 0.25]
    assert sizes_rescaled(G(8, [])).values.tolist() == [0.25] * 8


def test_conservation_large():
    for seed in range(5):
        g = sample_er(5000, 1.0, seed)
        assert abs(sizes_rescaled(g).total() - 5000 ** (1 / 3)) < 1e-12


class TestDiameter:
    def test_path_and_triangle(self):
        n = 10
        path = G(n, [(i, i + 1) for i in range(1, 6)])
        assert component_diameter(path, 1) == pytest.approx(5 * n ** (-1 / 3))
        tri = G(n, [(1, 2), (2, 3), (1, 3)])
        assert component_diameter(tri, 1) == pytest.approx(n ** (-1 / 3))

    @given(small_trees())
    def test_sweep_matches_all_source_on_trees(self, t):
        assert component_diameter(t, 1, "sweep") == component_diameter(t, 1, "all")

    def test_sweep_rejects_cycles(self):
        with pytest.raises(ValueError):
            component_diameter(G(3, [(1, 2), (2, 3), (1, 3)]), 1, "sweep")

    def test_large_random_components(self):
        g = sample_er(3000, 2.0, 5)
        ref = to_nx(g)
        for c in components(g)[:5]:
            assert c.diameter_hops == nx.diameter(ref.subgraph(g.component_vertices(c.id).tolist()))

    @given(small_graphs(max_n=10), st.data())
    def test_adding_an_edge_never_increases_distances(self, g, data):
        absent = [p for p in itertools.combinations(range(1, g.n + 1), 2) if pair_index(*p, g.n) not in set(g.codes)]
        if not absent:
            return
        extra = data.draw(st.sampled_from(absent))
        h = g.with_edges(np.vstack([g.edges, [extra]]))
        d0 = dict(nx.all_pairs_shortest_path_length(to_nx(g)))
        d1 = dict(nx.all_pairs_shortest_path_length(to_nx(h)))
        for u in d0:
            for v, d in d0[u].items():
                assert d1[u][v] <= d


class TestExploration:
    def test_path(self):
        order, depth = exploration(G(3, [(1, 2), (2, 3)]))
        assert order.tolist() == [1, 2, 3] and depth.tolist() == [0, 1, 2]

    def test_triangle(self):
        _, depth = exploration(G(3, [(1, 2), (2, 3), (1, 3)]))
        assert depth.tolist() == [0, 1, 1]

    @given(small_graphs())
    def test_visits_each_vertex_once(self, g):
        order, depth = exploration(g)
        assert sorted(order.tolist()) == list(range(1, g.n + 1))
        # depth is a BFS-tree-free upper bound on the hop distance to the root
        roots = g.labels[order]
        ref = to_nx(g)
        for v, d, r in zip(order.tolist(), depth.tolist(), roots.tolist()):
            assert d >= nx.shortest_path_length(ref, r, v)
