import copy

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsclab.errors import ConfigurationError, ParseError, RoutingError
from tsclab.netgraph import (
    adjacency_matrix,
    degree_centrality,
    generate_grid,
    parse_network,
    reachable_exits,
    serialize_network,
    shortest_route,
)

from conftest import arterial_document, triangle_document


class TestGenerateGrid:
    def test_2x2_has_4_signals(self, grid22):
        assert len(grid22.signals) == 4

    def test_3x3_has_9_signals(self, grid33):
        assert len(grid33.signals) == 9

    def test_1x1_boundary_lanes(self, grid11):
        assert len(grid11.signals) == 1
        assert len(grid11.entry_lanes) == 4
        assert len(grid11.exit_lanes) == 4
        assert len(grid11.lanes) == 8

    def test_2x2_lane_count(self, grid22):
        # 4 undirected internal edges + 8 boundary sides, 2 directed lanes each
        assert len(grid22.lanes) == 24

    def test_invalid_dimensions(self):
        with pytest.raises(ConfigurationError):
            generate_grid(0, 2)
        with pytest.raises(ConfigurationError):
            generate_grid(2, -1)
        with pytest.raises(ConfigurationError):
            generate_grid(2, 2, edge_length=10.0)

    def test_two_phase_declares_no_lefts(self, grid22):
        assert all(m.turn in ("through", "right") for m in grid22.movements.values())

    def test_four_phase_adds_protected_lefts(self):
        net = generate_grid(2, 2, phase_scheme="four_phase")
        turns = {m.turn for m in net.movements.values()}
        assert turns == {"through", "right", "left"}
        sig = net.signals[0]
        assert sig.n_phases == 4
        left_phase = sig.green_phases[1]
        assert all(net.movements[mid].turn == "left" for mid in left_phase.permitted)

    def test_signal_ordering_deterministic(self, grid22):
        ids = [s.id for s in grid22.signals]
        assert ids == sorted(ids)

    def test_capacity_from_spacing(self, grid22):
        lane = next(iter(grid22.lanes.values()))
        assert lane.capacity == int(200.0 // 7.5) == 26


class TestParseNetwork:
    @pytest.mark.parametrize("rows,cols", [(1, 1), (1, 2), (2, 2), (3, 3), (2, 3)])
    @pytest.mark.parametrize("scheme", ["two_phase", "four_phase"])
    def test_round_trip(self, rows, cols, scheme):
        net = generate_grid(rows, cols, phase_scheme=scheme)
        again = parse_network(serialize_network(net))
        assert again == net

    def test_missing_lane_named_in_error(self, grid22):
        doc = serialize_network(grid22)
        doc["movements"][0]["from_lane"] = "x"
        with pytest.raises(ParseError, match="x"):
            parse_network(doc)

    def test_phase_with_unknown_movement(self, grid22):
        doc = serialize_network(grid22)
        doc["signals"][0]["green_phases"][0]["permitted"][0] = "ghost"
        with pytest.raises(ParseError, match="ghost"):
            parse_network(doc)

    def test_non_dense_phase_indices(self, grid22):
        doc = serialize_network(grid22)
        doc["signals"][0]["green_phases"][1]["index"] = 5
        with pytest.raises(ParseError, match="dense"):
            parse_network(doc)

    def test_entry_lane_with_upstream_rejected(self, grid22):
        doc = serialize_network(grid22)
        entry = doc["entry_lanes"][0]
        for lane in doc["lanes"]:
            if lane["id"] == entry:
                lane["upstream_intersection"] = doc["signals"][0]["id"]
        with pytest.raises(ParseError):
            parse_network(doc)

    def test_arterial_fixture(self):
        net = parse_network(arterial_document())
        assert len(net.signals) == 3
        adj = adjacency_matrix(net)
        expected = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]])
        assert np.array_equal(adj, expected)


class TestAdjacency:
    def test_1x1(self, grid11):
        assert np.array_equal(adjacency_matrix(grid11), np.zeros((1, 1), dtype=np.int64))

    def test_2x2_row_sums(self, grid22):
        adj = adjacency_matrix(grid22)
        assert adj.sum(axis=1).tolist() == [2, 2, 2, 2]

    def test_3x3_degree_profile(self, grid33):
        sums = adjacency_matrix(grid33).sum(axis=1)
        assert sorted(sums.tolist()) == [2, 2, 2, 2, 3, 3, 3, 3, 4]
        # signals sort row-major; the center of the lattice is index 4
        assert sums[4] == 4

    @pytest.mark.parametrize("rows,cols", [(1, 1), (2, 2), (3, 3), (2, 3), (1, 4)])
    def test_symmetric_zero_diagonal_edge_count(self, rows, cols):
        net = generate_grid(rows, cols)
        adj = adjacency_matrix(net)
        assert np.array_equal(adj, adj.T)
        assert np.all(np.diag(adj) == 0)
        assert adj.sum() == 2 * (rows * (cols - 1) + cols * (rows - 1))
        assert len(net.signals) == rows * cols


class TestDegreeCentrality:
    def test_2x2_uniform(self, grid22):
        assert np.allclose(degree_centrality(grid22), 2.0 / 3.0)

    def test_3x3_center(self, grid33):
        cent = degree_centrality(grid33)
        assert cent[4] == pytest.approx(0.5)

    def test_single_signal_error(self, grid11):
        with pytest.raises(ConfigurationError):
            degree_centrality(grid11)

    def test_triangle_maximal(self):
        net = parse_network(triangle_document())
        assert np.allclose(degree_centrality(net), 1.0)

    def test_symmetry_classes(self, grid33):
        cent = degree_centrality(grid33)
        assert np.all(cent >= 0.0) and np.all(cent <= 1.0)
        corners = [cent[i] for i in (0, 2, 6, 8)]
        edges = [cent[i] for i in (1, 3, 5, 7)]
        assert len(set(corners)) == 1
        assert len(set(edges)) == 1


class TestShortestRoute:
    def test_direct_two_lane_route(self, grid11):
        route = shortest_route(grid11, "x00_00n__n00_00", "n00_00__x00_00s")
        assert route == ["x00_00n__n00_00", "n00_00__x00_00s"]

    def test_2x2_nw_entry_to_se_exit(self, grid22):
        route = shortest_route(grid22, "x00_00w__n00_00", "n01_01__x01_01s")
        assert len(route) == 4
        assert route[0] == "x00_00w__n00_00"
        assert route[-1] == "n01_01__x01_01s"

    def test_unreachable_destination(self, grid11):
        # from the north entry only through (south) and right (west) exist
        with pytest.raises(RoutingError):
            shortest_route(grid11, "x00_00n__n00_00", "n00_00__x00_00e")

    def test_non_entry_origin_rejected(self, grid22):
        internal = "n00_00__n00_01"
        with pytest.raises(RoutingError):
            shortest_route(grid22, internal, "n01_01__x01_01s")

    @settings(max_examples=60, deadline=None)
    @given(data=st.data())
    def test_routes_are_movement_consistent(self, data):
        rows = data.draw(st.integers(1, 3))
        cols = data.draw(st.integers(1, 3))
        scheme = data.draw(st.sampled_from(["two_phase", "four_phase"]))
        net = generate_grid(rows, cols, phase_scheme=scheme)
        origin = data.draw(st.sampled_from(sorted(net.entry_lanes)))
        exits = reachable_exits(net, origin)
        if not exits:
            return
        dest = data.draw(st.sampled_from(exits))
        route = shortest_route(net, origin, dest)
        assert route[0] == origin and route[-1] == dest
        for a, b in zip(route, route[1:]):
            assert (a, b) in net.movement_by_pair

    def test_four_phase_reaches_all_exits(self):
        net = generate_grid(2, 2, phase_scheme="four_phase")
        for origin in sorted(net.entry_lanes):
            assert set(reachable_exits(net, origin)) == net.exit_lanes
