import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wealthlab.exceptions import (
    CapacityError,
    DisconnectedNetworkError,
    EdgeListError,
    InvalidPairError,
    InvalidSizeError,
)
from _graphs import random_connected
from wealthlab.network import (
    build_complete,
    build_ring,
    build_star,
    coupling,
    from_descriptor,
    load_edge_list,
    shortest_path_lengths,
    stationary_residual,
    stationary_wealth,
)


class TestBuilders:
    def test_complete_degrees(self):
        net = build_complete(10)
        assert np.all(net.degrees == 9)
        assert net.avg_degree == 9
        assert net.is_complete

    def test_complete_two_is_single_edge(self):
        net = build_complete(2)
        assert list(net.edges()) == [(0, 1)]
        assert np.all(net.degrees == 1)

    def test_ring_three_is_complete(self):
        assert build_ring(3) == build_complete(3)
        assert build_ring(3).is_complete

    def test_ring_degrees_and_antipode(self):
        net = build_ring(10)
        assert np.all(net.degrees == 2) and net.avg_degree == 2
        assert shortest_path_lengths(build_ring(4))[0, 2] == 2

    def test_star(self):
        net = build_star(5)
        assert net.degrees.tolist() == [4, 1, 1, 1, 1]
        assert net.avg_degree == pytest.approx(8 / 5)
        assert build_star(2) == build_complete(2)
        big = build_star(10)
        assert big.degrees[0] == 9 and big.avg_degree == pytest.approx(1.8)

    @pytest.mark.parametrize("builder,n", [(build_complete, 1), (build_ring, 2), (build_star, 1)])
    def test_too_small(self, builder, n):
        with pytest.raises(InvalidSizeError):
            builder(n)

    def test_cap(self):
        with pytest.raises(CapacityError):
            build_complete(10_001)

    def test_complete_is_implicit(self):
        net = build_complete(10_000)
        assert net.n_edges == 10_000 * 9_999 // 2
        with pytest.raises(CapacityError):
            net.adjacency_matrix


class TestEdgeList:
    def test_triangle_is_ring(self):
        assert load_edge_list("0 1\n1 2\n2 0") == build_ring(3)

    def test_self_loop(self):
        with pytest.raises(EdgeListError) as exc:
            load_edge_list("0 1\n0 0")
        assert exc.value.lineno == 2

    def test_duplicates_collapse(self):
        net = load_edge_list("0 1\n0 1\n1 0")
        assert net.degrees.tolist() == [1, 1]

    def test_comments_and_blank_lines(self):
        net = load_edge_list("# header\n\n0 1  # trailing\n1 2\n")
        assert net.n_agents == 3 and net.n_edges == 2

    def test_bytes_and_stream(self):
        assert load_edge_list(b"0 1\n1 2") == load_edge_list(io.StringIO("0 1\n1 2"))

    @pytest.mark.parametrize("text", ["0 x", "0 1 2", "-1 2", "0"])
    def test_malformed(self, text):
        with pytest.raises(EdgeListError):
            load_edge_list(text)

    def test_isolated_agent(self):
        # agent 1 never appears
        with pytest.raises(EdgeListError):
            load_edge_list("0 2")

    def test_round_trip(self):
        net = load_edge_list(random_connected(30, 15, 1))
        assert load_edge_list(net.to_edge_list()) == net

    def test_descriptor(self, tmp_path):
        p = tmp_path / "g.txt"
        p.write_text("0 1\n1 2\n")
        assert from_descriptor(f"file:{p}").n_edges == 2
        assert from_descriptor("ring:5") == build_ring(5)
        for bad in ("ring", "torus:4", "ring:x"):
            with pytest.raises(ValueError):
                from_descriptor(bad)


class TestCoupling:
    def test_complete(self):
        net = build_complete(10)
        assert coupling(net, 3, 7) == pytest.approx(1 / 9)

    def test_star_direction(self):
        net = build_star(5)
        assert coupling(net, 0, 1) == 1.0
        assert coupling(net, 1, 0) == 0.25

    def test_ring_non_neighbours(self):
        assert coupling(build_ring(10), 0, 5) == 0.0

    def test_same_agent(self):
        with pytest.raises(InvalidPairError):
            coupling(build_ring(4), 2, 2)

    @pytest.mark.parametrize("net", [build_ring(7), build_star(6), load_edge_list(random_connected(40, 20, 3))])
    def test_columns_sum_to_one(self, net):
        J = net.transfer_matrix.toarray()
        assert np.allclose(J.sum(axis=0), 1.0, atol=1e-15)
        for i in range(net.n_agents):
            for j in range(net.n_agents):
                if i != j:
                    assert J[i, j] == coupling(net, i, j)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(3, 30))
def test_trade_conserves_wealth(seed, n):
    net = load_edge_list(random_connected(n, n // 2, seed))
    v = np.random.default_rng(seed).exponential(size=n)
    J = net.transfer_matrix
    inflow = J @ v
    # each agent spends its whole wealth per unit time
    assert abs((inflow - v).sum()) <= 1e-12 * v.sum()


class TestStationaryWealth:
    def test_complete(self):
        assert np.all(stationary_wealth(build_complete(10)) == 1.0)

    def test_star(self):
        w = stationary_wealth(build_star(5))
        assert w.tolist() == [2.5, 0.625, 0.625, 0.625, 0.625]
        assert w.mean() == 1.0

    def test_ring(self):
        assert np.all(stationary_wealth(build_ring(9)) == 1.0)

    @pytest.mark.parametrize("net", [build_star(5), build_ring(10), build_complete(6)])
    def test_residual(self, net):
        assert stationary_residual(net, stationary_wealth(net)) < 1e-12

    def test_disconnected(self):
        net = load_edge_list("0 1\n2 3")
        with pytest.raises(DisconnectedNetworkError):
            stationary_wealth(net)
        with pytest.raises(DisconnectedNetworkError):
            shortest_path_lengths(net)


class TestDistances:
    def test_examples(self):
        assert shortest_path_lengths(build_ring(10))[0, 5] == 5
        assert shortest_path_lengths(build_star(5))[1, 3] == 2
        L = shortest_path_lengths(build_complete(6))
        assert np.array_equal(L, 1 - np.eye(6, dtype=int))

    def test_properties(self):
        net = load_edge_list(random_connected(25, 10, 7))
        L = shortest_path_lengths(net)
        assert np.array_equal(L, L.T) and np.all(np.diag(L) == 0)
        A = net.adjacency_matrix.toarray().astype(bool)
        assert np.all(L[A] == 1) and np.all(L[~A & ~np.eye(25, dtype=bool)] > 1)

    def test_matches_plain_bfs(self):
        net = load_edge_list(random_connected(20, 5, 11))
        adj = net.adjacency
        for s in range(20):
            dist = {s: 0}
            frontier = [s]
            while frontier:
                nxt = []
                for u in frontier:
                    for w in adj[u]:
                        if w not in dist:
                            dist[w] = dist[u] + 1
                            nxt.append(w)
                frontier = nxt
            assert [dist[t] for t in range(20)] == shortest_path_lengths(net)[s].tolist()
