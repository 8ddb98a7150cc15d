"""Road network model and analytics.

A network is a directed graph of lanes joined by movements at signalized
intersections.  Everything is ordered deterministically (lexicographic by
id) so observation layouts, matrices, and routes are reproducible across
runs and platforms.  Networks are immutable after construction and safe to
share read-only between any number of simulator instances.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from .errors import ConfigurationError, ParseError, RoutingError

# Jam spacing of one stopped vehicle, meters.  Fixes lane capacity.
VEHICLE_SPACING = 7.5

DEFAULT_VISIBILITY = 50.0
DEFAULT_EDGE_LENGTH = 200.0
DEFAULT_SPEED_LIMIT = 13.89

GREEN = "green"
YELLOW = "yellow"

TURN_THROUGH = "through"
TURN_LEFT = "left"
TURN_RIGHT = "right"
TURNS = (TURN_THROUGH, TURN_LEFT, TURN_RIGHT)

TWO_PHASE = "two_phase"
FOUR_PHASE = "four_phase"
PHASE_SCHEMES = (TWO_PHASE, FOUR_PHASE)

NETWORK_FORMAT = "roadnet-v1"


@dataclass(frozen=True)
class Lane:
    """A directed stretch of road with a fixed free-flow speed.

    Capacity is the number of vehicles the lane can hold at jam spacing.
    """

    id: str
    length: float
    speed_limit: float
    upstream_intersection: Optional[str] = None
    downstream_intersection: Optional[str] = None

    @property
    def capacity(self) -> int:
        return int(self.length // VEHICLE_SPACING)


@dataclass(frozen=True)
class Movement:
    """A permitted lane-to-lane crossing of a single intersection."""

    id: str
    from_lane: str
    to_lane: str
    turn: str


@dataclass(frozen=True)
class Phase:
    """A signal configuration permitting a set of movements.

    Green phases carry dense indices 0..P-1; each green phase has an implied
    yellow twin with the same index and permitted set.
    """

    index: int
    permitted: Tuple[str, ...]
    kind: str = GREEN


@dataclass(frozen=True)
class TrafficSignal:
    """A signalized intersection: the agent unit of the environment."""

    id: str
    incoming_lanes: Tuple[str, ...]
    outgoing_lanes: Tuple[str, ...]
    green_phases: Tuple[Phase, ...]
    visibility: float = DEFAULT_VISIBILITY

    @property
    def n_phases(self) -> int:
        return len(self.green_phases)


@dataclass
class RoadNetwork:
    """Immutable-by-convention lane graph with signalized intersections."""

    lanes: Dict[str, Lane]
    signals: List[TrafficSignal]
    movements: Dict[str, Movement]
    entry_lanes: Set[str]
    exit_lanes: Set[str]

    @cached_property
    def signal_ids(self) -> List[str]:
        return [s.id for s in self.signals]

    @cached_property
    def signal_by_id(self) -> Dict[str, TrafficSignal]:
        return {s.id: s for s in self.signals}

    @cached_property
    def sorted_lane_ids(self) -> List[str]:
        return sorted(self.lanes)

    @cached_property
    def movements_from_lane(self) -> Dict[str, List[str]]:
        out: Dict[str, List[str]] = {lid: [] for lid in self.lanes}
        for mid in sorted(self.movements):
            out[self.movements[mid].from_lane].append(mid)
        return out

    @cached_property
    def movement_by_pair(self) -> Dict[Tuple[str, str], Movement]:
        return {(m.from_lane, m.to_lane): m for m in self.movements.values()}

    @cached_property
    def lane_successors(self) -> Dict[str, List[str]]:
        """Next lanes reachable from each lane, sorted by id."""
        succ: Dict[str, List[str]] = {lid: [] for lid in self.lanes}
        for m in self.movements.values():
            succ[m.from_lane].append(m.to_lane)
        for lid in succ:
            succ[lid].sort()
        return succ


def movement_id(from_lane: str, to_lane: str) -> str:
    return f"{from_lane}>>{to_lane}"


# ---------------------------------------------------------------------------
# Grid generation

# Side the lane enters from -> travel heading.
_HEADING = {"n": "s", "s": "n", "w": "e", "e": "w"}
# (heading, turn) -> side of the intersection the vehicle leaves through.
_OUT_SIDE = {
    ("s", TURN_THROUGH): "s", ("s", TURN_RIGHT): "w", ("s", TURN_LEFT): "e",
    ("n", TURN_THROUGH): "n", ("n", TURN_RIGHT): "e", ("n", TURN_LEFT): "w",
    ("e", TURN_THROUGH): "e", ("e", TURN_RIGHT): "s", ("e", TURN_LEFT): "n",
    ("w", TURN_THROUGH): "w", ("w", TURN_RIGHT): "n", ("w", TURN_LEFT): "s",
}
_SIDES = ("n", "s", "w", "e")


def _node(r: int, c: int) -> str:
    return f"n{r:02d}_{c:02d}"


def _ext(r: int, c: int, side: str) -> str:
    return f"x{r:02d}_{c:02d}{side}"


def _lane_id(src: str, dst: str) -> str:
    return f"{src}__{dst}"


def generate_grid(
    rows: int,
    cols: int,
    edge_length: float = DEFAULT_EDGE_LENGTH,
    speed_limit: float = DEFAULT_SPEED_LIMIT,
    phase_scheme: str = TWO_PHASE,
    visibility: float = DEFAULT_VISIBILITY,
) -> RoadNetwork:
    """Build a rows x cols lattice of 4-way signalized intersections.

    One lane per direction per edge; boundary approaches become entry/exit
    lanes.  ``two_phase`` serves {NS through+right, EW through+right} and
    declares no left-turn movements; ``four_phase`` adds protected lefts.
    """
    if rows < 1 or cols < 1:
        raise ConfigurationError(f"grid dimensions must be positive, got {rows}x{cols}")
    if edge_length < 2 * VEHICLE_SPACING:
        raise ConfigurationError(
            f"edge_length must be at least {2 * VEHICLE_SPACING} m, got {edge_length}"
        )
    if speed_limit <= 0:
        raise ConfigurationError(f"speed_limit must be positive, got {speed_limit}")
    if phase_scheme not in PHASE_SCHEMES:
        raise ConfigurationError(f"unknown phase scheme {phase_scheme!r}")

    def side_node(r: int, c: int, side: str) -> str:
        nr, nc = {"n": (r - 1, c), "s": (r + 1, c), "w": (r, c - 1), "e": (r, c + 1)}[side]
        if 0 <= nr < rows and 0 <= nc < cols:
            return _node(nr, nc)
        return _ext(r, c, side)

    lanes: Dict[str, Lane] = {}

    def add_lane(src: str, dst: str) -> str:
        lid = _lane_id(src, dst)
        if lid not in lanes:
            lanes[lid] = Lane(
                id=lid,
                length=edge_length,
                speed_limit=speed_limit,
                upstream_intersection=src if src.startswith("n") else None,
                downstream_intersection=dst if dst.startswith("n") else None,
            )
        return lid

    for r in range(rows):
        for c in range(cols):
            me = _node(r, c)
            for side in _SIDES:
                other = side_node(r, c, side)
                add_lane(other, me)
                add_lane(me, other)

    turns = (TURN_THROUGH, TURN_RIGHT) if phase_scheme == TWO_PHASE else TURNS
    movements: Dict[str, Movement] = {}
    signals: List[TrafficSignal] = []

    for r in range(rows):
        for c in range(cols):
            me = _node(r, c)
            incoming = {side: _lane_id(side_node(r, c, side), me) for side in _SIDES}
            outgoing = {side: _lane_id(me, side_node(r, c, side)) for side in _SIDES}
            by_group: Dict[Tuple[str, str], List[str]] = {}
            for side in _SIDES:
                heading = _HEADING[side]
                axis = "ns" if side in ("n", "s") else "ew"
                for turn in turns:
                    out_lane = outgoing[_OUT_SIDE[(heading, turn)]]
                    mid = movement_id(incoming[side], out_lane)
                    movements[mid] = Movement(
                        id=mid, from_lane=incoming[side], to_lane=out_lane, turn=turn
                    )
                    key = (axis, "left" if turn == TURN_LEFT else "main")
                    by_group.setdefault(key, []).append(mid)

            if phase_scheme == TWO_PHASE:
                groups = [("ns", "main"), ("ew", "main")]
            else:
                groups = [("ns", "main"), ("ns", "left"), ("ew", "main"), ("ew", "left")]
            phases = tuple(
                Phase(index=i, permitted=tuple(sorted(by_group[g])), kind=GREEN)
                for i, g in enumerate(groups)
            )
            signals.append(
                TrafficSignal(
                    id=me,
                    incoming_lanes=tuple(sorted(incoming.values())),
                    outgoing_lanes=tuple(sorted(outgoing.values())),
                    green_phases=phases,
                    visibility=visibility,
                )
            )

    signals.sort(key=lambda s: s.id)
    entry = {lid for lid, l in lanes.items() if l.upstream_intersection is None}
    exit_ = {lid for lid, l in lanes.items() if l.downstream_intersection is None}
    net = RoadNetwork(
        lanes=lanes, signals=signals, movements=movements, entry_lanes=entry, exit_lanes=exit_
    )
    validate_network(net)
    return net


# ---------------------------------------------------------------------------
# Validation, serialization, parsing


def validate_network(net: RoadNetwork) -> None:
    """Check every structural invariant; raises ParseError naming the culprit."""
    for lid, lane in net.lanes.items():
        if lane.length <= 0 or lane.speed_limit <= 0:
            raise ParseError(f"lane {lid} has non-positive length or speed")
        if lane.capacity < 1:
            raise ParseError(
                f"lane {lid} shorter than one vehicle spacing ({VEHICLE_SPACING} m)"
            )

    signal_ids = [s.id for s in net.signals]
    if signal_ids != sorted(signal_ids):
        raise ParseError("signals are not sorted by id")
    if len(set(signal_ids)) != len(signal_ids):
        raise ParseError("duplicate signal ids")
    known_signals = set(signal_ids)

    for lid, lane in net.lanes.items():
        for ref in (lane.upstream_intersection, lane.downstream_intersection):
            if ref is not None and ref not in known_signals:
                raise ParseError(f"lane {lid} references unknown intersection {ref}")

    for mid, m in net.movements.items():
        for lid in (m.from_lane, m.to_lane):
            if lid not in net.lanes:
                raise ParseError(f"movement {mid} references missing lane {lid}")
        if m.turn not in TURNS:
            raise ParseError(f"movement {mid} has unknown turn {m.turn!r}")
        down = net.lanes[m.from_lane].downstream_intersection
        up = net.lanes[m.to_lane].upstream_intersection
        if down is None or down != up:
            raise ParseError(
                f"movement {mid} does not cross exactly one intersection "
                f"(from-lane ends at {down}, to-lane starts at {up})"
            )

    for sig in net.signals:
        if not sig.incoming_lanes:
            raise ParseError(f"signal {sig.id} has no incoming lanes")
        if list(sig.incoming_lanes) != sorted(sig.incoming_lanes):
            raise ParseError(f"signal {sig.id} incoming lanes not sorted")
        for lid in tuple(sig.incoming_lanes) + tuple(sig.outgoing_lanes):
            if lid not in net.lanes:
                raise ParseError(f"signal {sig.id} references missing lane {lid}")
        if len(sig.green_phases) < 2:
            raise ParseError(f"signal {sig.id} needs at least 2 green phases")
        indices = [p.index for p in sig.green_phases]
        if indices != list(range(len(indices))):
            raise ParseError(f"signal {sig.id} green phase indices not dense from 0")
        for p in sig.green_phases:
            if p.kind != GREEN:
                raise ParseError(f"signal {sig.id} lists a non-green phase at index {p.index}")
            for mid in p.permitted:
                if mid not in net.movements:
                    raise ParseError(
                        f"phase {p.index} of signal {sig.id} permits unknown movement {mid}"
                    )
                m = net.movements[mid]
                if net.lanes[m.from_lane].downstream_intersection != sig.id:
                    raise ParseError(
                        f"phase {p.index} of signal {sig.id} permits movement {mid} "
                        f"of another intersection"
                    )

    derived_entry = {lid for lid, l in net.lanes.items() if l.upstream_intersection is None}
    derived_exit = {lid for lid, l in net.lanes.items() if l.downstream_intersection is None}
    if net.entry_lanes != derived_entry:
        raise ParseError("entry_lanes set inconsistent with lane upstream fields")
    if net.exit_lanes != derived_exit:
        raise ParseError("exit_lanes set inconsistent with lane downstream fields")


def serialize_network(net: RoadNetwork) -> dict:
    return {
        "format": NETWORK_FORMAT,
        "lanes": [
            {
                "id": l.id,
                "length": l.length,
                "speed_limit": l.speed_limit,
                "upstream_intersection": l.upstream_intersection,
                "downstream_intersection": l.downstream_intersection,
            }
            for l in (net.lanes[lid] for lid in sorted(net.lanes))
        ],
        "movements": [
            {"id": m.id, "from_lane": m.from_lane, "to_lane": m.to_lane, "turn": m.turn}
            for m in (net.movements[mid] for mid in sorted(net.movements))
        ],
        "signals": [
            {
                "id": s.id,
                "incoming_lanes": list(s.incoming_lanes),
                "outgoing_lanes": list(s.outgoing_lanes),
                "visibility": s.visibility,
                "green_phases": [
                    {"index": p.index, "permitted": list(p.permitted), "kind": p.kind}
                    for p in s.green_phases
                ],
            }
            for s in net.signals
        ],
        "entry_lanes": sorted(net.entry_lanes),
        "exit_lanes": sorted(net.exit_lanes),
    }


def parse_network(document: dict) -> RoadNetwork:
    """Build and fully validate a RoadNetwork from a parsed JSON document."""
    if not isinstance(document, dict):
        raise ParseError("network document must be a JSON object")
    fmt = document.get("format", NETWORK_FORMAT)
    if fmt != NETWORK_FORMAT:
        raise ParseError(f"unsupported network format {fmt!r}")

    def require(obj: dict, key: str, ctx: str):
        if key not in obj:
            raise ParseError(f"{ctx} is missing field {key!r}")
        return obj[key]

    lanes: Dict[str, Lane] = {}
    for entry in document.get("lanes", []):
        lid = require(entry, "id", "lane")
        if lid in lanes:
            raise ParseError(f"duplicate lane id {lid}")
        lanes[lid] = Lane(
            id=lid,
            length=float(require(entry, "length", f"lane {lid}")),
            speed_limit=float(require(entry, "speed_limit", f"lane {lid}")),
            upstream_intersection=entry.get("upstream_intersection"),
            downstream_intersection=entry.get("downstream_intersection"),
        )

    movements: Dict[str, Movement] = {}
    for entry in document.get("movements", []):
        mid = entry.get("id") or movement_id(
            require(entry, "from_lane", "movement"), require(entry, "to_lane", "movement")
        )
        if mid in movements:
            raise ParseError(f"duplicate movement id {mid}")
        movements[mid] = Movement(
            id=mid,
            from_lane=require(entry, "from_lane", f"movement {mid}"),
            to_lane=require(entry, "to_lane", f"movement {mid}"),
            turn=entry.get("turn", TURN_THROUGH),
        )

    signals: List[TrafficSignal] = []
    for entry in document.get("signals", []):
        sid = require(entry, "id", "signal")
        phases = tuple(
            Phase(
                index=int(require(p, "index", f"phase of signal {sid}")),
                permitted=tuple(sorted(require(p, "permitted", f"phase of signal {sid}"))),
                kind=p.get("kind", GREEN),
            )
            for p in require(entry, "green_phases", f"signal {sid}")
        )
        signals.append(
            TrafficSignal(
                id=sid,
                incoming_lanes=tuple(sorted(require(entry, "incoming_lanes", f"signal {sid}"))),
                outgoing_lanes=tuple(sorted(entry.get("outgoing_lanes", []))),
                green_phases=tuple(sorted(phases, key=lambda p: p.index)),
                visibility=float(entry.get("visibility", DEFAULT_VISIBILITY)),
            )
        )
    signals.sort(key=lambda s: s.id)

    entry_lanes = set(document.get("entry_lanes", []))
    exit_lanes = set(document.get("exit_lanes", []))
    if not document.get("entry_lanes") and lanes:
        entry_lanes = {lid for lid, l in lanes.items() if l.upstream_intersection is None}
    if not document.get("exit_lanes") and lanes:
        exit_lanes = {lid for lid, l in lanes.items() if l.downstream_intersection is None}

    net = RoadNetwork(
        lanes=lanes,
        signals=signals,
        movements=movements,
        entry_lanes=entry_lanes,
        exit_lanes=exit_lanes,
    )
    validate_network(net)
    return net


def load_network(path: str) -> RoadNetwork:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_network(json.load(fh))


def save_network(net: RoadNetwork, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(serialize_network(net), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Graph analytics


def adjacency_matrix(net: RoadNetwork) -> np.ndarray:
    """0/1 symmetric matrix over signals: 1 iff some lane joins the pair."""
    index = {sid: i for i, sid in enumerate(net.signal_ids)}
    n = len(index)
    adj = np.zeros((n, n), dtype=np.int64)
    for lane in net.lanes.values():
        u, d = lane.upstream_intersection, lane.downstream_intersection
        if u is not None and d is not None and u != d:
            adj[index[u], index[d]] = 1
            adj[index[d], index[u]] = 1
    return adj


def degree_centrality(net: RoadNetwork) -> np.ndarray:
    """Row sums of the adjacency matrix normalized by n-1."""
    n = len(net.signals)
    if n < 2:
        raise ConfigurationError("degree centrality undefined for fewer than 2 signals")
    adj = adjacency_matrix(net)
    return adj.sum(axis=1) / float(n - 1)


def shortest_route(net: RoadNetwork, origin: str, destination: str) -> List[str]:
    """Minimal-hop, movement-consistent lane sequence from an entry to an exit.

    Ties are broken by expanding successor lanes in lexicographic id order, so
    the returned route is deterministic.
    """
    if origin not in net.lanes:
        raise RoutingError(f"origin lane {origin} does not exist")
    if destination not in net.lanes:
        raise RoutingError(f"destination lane {destination} does not exist")
    if origin not in net.entry_lanes:
        raise RoutingError(f"origin lane {origin} is not an entry lane")
    if destination not in net.exit_lanes:
        raise RoutingError(f"destination lane {destination} is not an exit lane")

    if origin == destination:
        return [origin]
    parent: Dict[str, str] = {origin: origin}
    queue = deque([origin])
    while queue:
        lane = queue.popleft()
        for nxt in net.lane_successors[lane]:
            if nxt in parent:
                continue
            parent[nxt] = lane
            if nxt == destination:
                route = [nxt]
                while route[-1] != origin:
                    route.append(parent[route[-1]])
                route.reverse()
                return route
            queue.append(nxt)
    raise RoutingError(f"no route from {origin} to {destination}")


def reachable_exits(net: RoadNetwork, origin: str) -> List[str]:
    """Exit lanes reachable from an entry lane, sorted by id."""
    seen = {origin}
    queue = deque([origin])
    while queue:
        lane = queue.popleft()
        for nxt in net.lane_successors[lane]:
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return sorted(seen & net.exit_lanes)
