import pytest

from tsclab.netgraph import generate_grid


@pytest.fixture(scope="session")
def grid22():
    return generate_grid(2, 2, edge_length=200.0, speed_limit=13.89, phase_scheme="two_phase")


@pytest.fixture(scope="session")
def grid33():
    return generate_grid(3, 3, edge_length=200.0, speed_limit=13.89, phase_scheme="two_phase")


@pytest.fixture(scope="session")
def grid11():
    return generate_grid(1, 1, edge_length=200.0, speed_limit=13.89, phase_scheme="two_phase")


def arterial_document():
    """Hand-written 3-signal east-west arterial (linear chain)."""
    lanes = [
        ("a_in", None, "s0"),
        ("s0_s1", "s0", "s1"),
        ("s1_s2", "s1", "s2"),
        ("s2_out", "s2", None),
        ("b_in", None, "s2"),
        ("s2_s1", "s2", "s1"),
        ("s1_s0", "s1", "s0"),
        ("s0_out", "s0", None),
    ]
    movements = [
        ("a_in", "s0_s1"),
        ("s0_s1", "s1_s2"),
        ("s1_s2", "s2_out"),
        ("b_in", "s2_s1"),
        ("s2_s1", "s1_s0"),
        ("s1_s0", "s0_out"),
    ]
    mid = lambda f, t: f"{f}>>{t}"
    signals = [
        {
            "id": "s0",
            "incoming_lanes": ["a_in", "s1_s0"],
            "outgoing_lanes": ["s0_out", "s0_s1"],
            "green_phases": [
                {"index": 0, "permitted": [mid("a_in", "s0_s1")], "kind": "green"},
                {"index": 1, "permitted": [mid("s1_s0", "s0_out")], "kind": "green"},
            ],
        },
        {
            "id": "s1",
            "incoming_lanes": ["s0_s1", "s2_s1"],
            "outgoing_lanes": ["s1_s0", "s1_s2"],
            "green_phases": [
                {"index": 0, "permitted": [mid("s0_s1", "s1_s2")], "kind": "green"},
                {"index": 1, "permitted": [mid("s2_s1", "s1_s0")], "kind": "green"},
            ],
        },
        {
            "id": "s2",
            "incoming_lanes": ["b_in", "s1_s2"],
            "outgoing_lanes": ["s2_out", "s2_s1"],
            "green_phases": [
                {"index": 0, "permitted": [mid("s1_s2", "s2_out")], "kind": "green"},
                {"index": 1, "permitted": [mid("b_in", "s2_s1")], "kind": "green"},
            ],
        },
    ]
    return {
        "format": "roadnet-v1",
        "lanes": [
            {"id": lid, "length": 100.0, "speed_limit": 10.0,
             "upstream_intersection": up, "downstream_intersection": down}
            for lid, up, down in lanes
        ],
        "movements": [
            {"id": mid(f, t), "from_lane": f, "to_lane": t, "turn": "through"}
            for f, t in movements
        ],
        "signals": signals,
        "entry_lanes": ["a_in", "b_in"],
        "exit_lanes": ["s0_out", "s2_out"],
    }


def triangle_document():
    """Three pairwise-connected signals; every degree is maximal."""
    lanes = []
    for lid, up, down in [
        ("e0", None, "t0"), ("e1", None, "t1"), ("e2", None, "t2"),
        ("t0_t1", "t0", "t1"), ("t1_t2", "t1", "t2"), ("t2_t0", "t2", "t0"),
        ("t0_t2", "t0", "t2"), ("t2_t1", "t2", "t1"), ("t1_t0", "t1", "t0"),
        ("x0", "t0", None), ("x1", "t1", None), ("x2", "t2", None),
    ]:
        lanes.append({"id": lid, "length": 120.0, "speed_limit": 10.0,
                      "upstream_intersection": up, "downstream_intersection": down})
    mid = lambda f, t: f"{f}>>{t}"
    movements = []
    signals = []
    ring = {"t0": ("e0", "t1_t0", "t2_t0", "t0_t1", "t0_t2", "x0"),
            "t1": ("e1", "t2_t1", "t0_t1", "t1_t2", "t1_t0", "x1"),
            "t2": ("e2", "t0_t2", "t1_t2", "t2_t0", "t2_t1", "x2")}
    for sid, (entry, in_a, in_b, out_a, out_b, exit_lane) in ring.items():
        moves = [(entry, out_a), (in_a, out_b), (in_b, exit_lane)]
        for f, t in moves:
            movements.append({"id": mid(f, t), "from_lane": f, "to_lane": t, "turn": "through"})
        signals.append({
            "id": sid,
            "incoming_lanes": sorted([entry, in_a, in_b]),
            "outgoing_lanes": sorted([out_a, out_b, exit_lane]),
            "green_phases": [
                {"index": 0, "permitted": sorted([mid(entry, out_a), mid(in_b, exit_lane)]),
                 "kind": "green"},
                {"index": 1, "permitted": [mid(in_a, out_b)], "kind": "green"},
            ],
        })
    return {
        "format": "roadnet-v1",
        "lanes": lanes,
        "movements": movements,
        "signals": sorted(signals, key=lambda s: s["id"]),
        "entry_lanes": ["e0", "e1", "e2"],
        "exit_lanes": ["x0", "x1", "x2"],
    }
