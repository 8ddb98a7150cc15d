"""Discrete-time mesoscopic queue simulator (1 s ticks).

Vehicles free-flow along lanes at the speed limit, stack into a stop-line
queue at jam spacing, and discharge through the green movements of the
active phase at saturation flow, with spillback when the receiving lane is
full.  The model trades car-following realism for analyzable dynamics that
still expose the quantities the controllers observe: per-lane counts,
queues, and speeds.

A ``Simulation`` plus its RNG form a single-threaded unit; independent
instances may run concurrently without coordination.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, RoutingError
from .netgraph import (
    GREEN,
    VEHICLE_SPACING,
    YELLOW,
    RoadNetwork,
    reachable_exits,
    shortest_route,
)

# Saturation flow per movement under green, vehicles/second (2 s headway).
DEFAULT_SATURATION_FLOW = 0.5

RUNNING = "running"
QUEUED = "queued"


@dataclass
class Vehicle:
    id: int
    route: Tuple[str, ...]
    leg: int
    position: float
    mode: str
    spawn_tick: int
    wait_ticks: int = 0
    queue_join_tick: Optional[int] = None

    @property
    def lane(self) -> str:
        return self.route[self.leg]


@dataclass
class LaneState:
    """Occupants of one lane: free-flowing vehicles plus the stop-line queue.

    ``running`` is ordered oldest-first (largest position first, since all
    vehicles travel at the lane speed limit).  ``queued`` front is at the
    stop line.  Discharge credit accumulates fractionally per outgoing
    movement while that movement is green.
    """

    running: Deque[int] = field(default_factory=deque)
    queued: Deque[int] = field(default_factory=deque)
    discharge_credit: Dict[str, float] = field(default_factory=dict)

    def occupancy(self) -> int:
        return len(self.running) + len(self.queued)


@dataclass
class SignalState:
    signal_id: str
    active_index: int
    active_kind: str
    phase_elapsed: int
    pending_index: Optional[int] = None

    @property
    def phase_id(self) -> int:
        """Index of the current green, or of the pending green during yellow."""
        if self.active_kind == GREEN:
            return self.active_index
        assert self.pending_index is not None
        return self.pending_index


@dataclass
class Counters:
    spawned: int = 0
    completed: int = 0
    dropped: int = 0


@dataclass
class SimState:
    clock: int
    lane_states: Dict[str, LaneState]
    vehicles: Dict[int, Vehicle]
    signal_states: Dict[str, SignalState]
    counters: Counters
    completed_travel_times: List[int] = field(default_factory=list)
    completed_wait_ticks: List[int] = field(default_factory=list)


@dataclass(frozen=True)
class FlowSpec:
    """Poisson demand from an entry lane to an exit lane over a time window."""

    origin: str
    destination: str
    rate: float  # vehicles/hour
    start: int = 0
    end: int = 360

    def __post_init__(self):
        if self.rate < 0:
            raise ConfigurationError(f"flow rate must be non-negative, got {self.rate}")
        if self.start >= self.end:
            raise ConfigurationError(
                f"flow window must be non-empty, got [{self.start}, {self.end})"
            )


def flows_to_document(flows: Sequence[FlowSpec]) -> list:
    return [
        {"origin": f.origin, "destination": f.destination, "rate": f.rate,
         "start": f.start, "end": f.end}
        for f in flows
    ]


def flows_from_document(doc: Sequence[dict]) -> List[FlowSpec]:
    return [
        FlowSpec(
            origin=d["origin"],
            destination=d["destination"],
            rate=float(d["rate"]),
            start=int(d.get("start", 0)),
            end=int(d.get("end", 360)),
        )
        for d in doc
    ]


def load_flows(path: str) -> List[FlowSpec]:
    with open(path, "r", encoding="utf-8") as fh:
        return flows_from_document(json.load(fh))


def save_flows(flows: Sequence[FlowSpec], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(flows_to_document(flows), fh, indent=2)
        fh.write("\n")


def generate_flows(
    net: RoadNetwork,
    rate: float,
    start: int = 0,
    end: int = 360,
    seed: int = 0,
    per_entry: int = 1,
) -> List[FlowSpec]:
    """One flow per entry lane to a randomly drawn reachable exit."""
    rng = np.random.default_rng(seed)
    flows: List[FlowSpec] = []
    for origin in sorted(net.entry_lanes):
        exits = reachable_exits(net, origin)
        if not exits:
            continue
        for _ in range(per_entry):
            dest = exits[int(rng.integers(len(exits)))]
            flows.append(FlowSpec(origin=origin, destination=dest, rate=rate,
                                  start=start, end=end))
    return flows


def initial_state(net: RoadNetwork) -> SimState:
    return SimState(
        clock=0,
        lane_states={lid: LaneState() for lid in net.lanes},
        vehicles={},
        signal_states={
            s.id: SignalState(signal_id=s.id, active_index=0, active_kind=GREEN,
                              phase_elapsed=0)
            for s in net.signals
        },
        counters=Counters(),
    )


class Simulation:
    """Owns one SimState, its RNG, and the derived lookup tables."""

    def __init__(
        self,
        net: RoadNetwork,
        flows: Sequence[FlowSpec],
        seed: int = 0,
        saturation_flow: float = DEFAULT_SATURATION_FLOW,
    ):
        self.net = net
        self.flows = list(flows)
        self.seed = seed
        self.saturation_flow = saturation_flow
        self.rng = np.random.default_rng(seed)
        self.state = initial_state(net)
        self._next_vehicle_id = 0
        # routes fail fast at construction rather than mid-episode
        self._routes: Dict[Tuple[str, str], Tuple[str, ...]] = {}
        for f in self.flows:
            key = (f.origin, f.destination)
            if key not in self._routes:
                self._routes[key] = tuple(shortest_route(net, f.origin, f.destination))
        self._lane_length = {lid: l.length for lid, l in net.lanes.items()}
        self._lane_speed = {lid: l.speed_limit for lid, l in net.lanes.items()}
        self._lane_capacity = {lid: l.capacity for lid, l in net.lanes.items()}
        self._movement_to_lane = {mid: m.to_lane for mid, m in net.movements.items()}
        self._movement_from_lane = {mid: m.from_lane for mid, m in net.movements.items()}
        # per signal, per green phase index: permitted movement ids (sorted)
        self._phase_moves = {
            s.id: [p.permitted for p in s.green_phases] for s in net.signals
        }
        self._sorted_lanes = net.sorted_lane_ids
        self._signal_ids = net.signal_ids
        self._incoming = {s.id: s.incoming_lanes for s in net.signals}

    # -- demand ------------------------------------------------------------

    def spawn(self) -> None:
        """Draw Poisson arrivals for every active flow at this tick boundary."""
        st = self.state
        clock = st.clock
        for f in self.flows:
            if f.rate <= 0 or not (f.start <= clock < f.end):
                continue
            arrivals = int(self.rng.poisson(f.rate / 3600.0))
            if arrivals == 0:
                continue
            route = self._routes[(f.origin, f.destination)]
            ls = st.lane_states[f.origin]
            cap = self._lane_capacity[f.origin]
            for _ in range(arrivals):
                if ls.occupancy() >= cap:
                    st.counters.dropped += 1
                    continue
                vid = self._next_vehicle_id
                self._next_vehicle_id += 1
                st.vehicles[vid] = Vehicle(
                    id=vid, route=route, leg=0, position=0.0, mode=RUNNING,
                    spawn_tick=clock,
                )
                ls.running.append(vid)
                st.counters.spawned += 1

    # -- dynamics ----------------------------------------------------------

    def tick(self) -> None:
        """Advance one second: free-flow, discharge, wait accrual, clock."""
        st = self.state
        vehicles = st.vehicles
        clock = st.clock

        # (1) running vehicles advance, capped at the back of the queue;
        # on the final leg of a route the lane end is a sink
        for lid in self._sorted_lanes:
            ls = st.lane_states[lid]
            if not ls.running:
                continue
            length = self._lane_length[lid]
            speed = self._lane_speed[lid]
            still_running: Deque[int] = deque()
            for vid in ls.running:
                v = vehicles[vid]
                back_slot = length - len(ls.queued) * VEHICLE_SPACING
                pos = v.position + speed
                if v.leg == len(v.route) - 1 and self.net.lanes[lid].downstream_intersection is None:
                    if pos >= length:
                        self._complete(v)
                        continue
                    v.position = pos
                    still_running.append(vid)
                    continue
                if pos >= back_slot:
                    v.position = back_slot
                    v.mode = QUEUED
                    v.queue_join_tick = clock
                    ls.queued.append(vid)
                else:
                    v.position = pos
                    still_running.append(vid)
            ls.running = still_running

        # (2) green movements accumulate saturation-flow credit and pop the
        # queue front while it matches the movement and fits downstream
        sat = self.saturation_flow
        for sid in self._signal_ids:
            ss = st.signal_states[sid]
            if ss.active_kind != GREEN:
                continue
            for mid in self._phase_moves[sid][ss.active_index]:
                from_lane = self._movement_from_lane[mid]
                to_lane = self._movement_to_lane[mid]
                ls = st.lane_states[from_lane]
                credit = ls.discharge_credit.get(mid, 0.0) + sat
                while credit >= 1.0 and ls.queued:
                    front = vehicles[ls.queued[0]]
                    if front.leg == len(front.route) - 1:
                        # route ends at this stop line: any green movement
                        # from the lane discharges it out of the network
                        ls.queued.popleft()
                        self._shift_queue(ls, from_lane)
                        self._complete(front)
                        credit -= 1.0
                        continue
                    if front.route[front.leg + 1] != to_lane:
                        break  # head of line wants a different movement
                    nxt = st.lane_states[to_lane]
                    if nxt.occupancy() >= self._lane_capacity[to_lane]:
                        break  # spillback
                    ls.queued.popleft()
                    self._shift_queue(ls, from_lane)
                    front.leg += 1
                    front.position = 0.0
                    front.mode = RUNNING
                    front.queue_join_tick = None
                    nxt.running.append(front.id)
                    credit -= 1.0
                ls.discharge_credit[mid] = min(credit, 1.0)

        # (3) every vehicle stopped at a queue accrues waiting time
        for lid in self._sorted_lanes:
            q = st.lane_states[lid].queued
            if q:
                for vid in q:
                    vehicles[vid].wait_ticks += 1

        # (4) clocks
        st.clock = clock + 1
        for ss in st.signal_states.values():
            ss.phase_elapsed += 1

    def _shift_queue(self, ls: LaneState, lane_id: str) -> None:
        # queue slots close up after a pop: position of index k is
        # length - k * spacing
        length = self._lane_length[lane_id]
        for k, vid in enumerate(ls.queued):
            self.state.vehicles[vid].position = length - k * VEHICLE_SPACING

    def _complete(self, v: Vehicle) -> None:
        st = self.state
        st.counters.completed += 1
        st.completed_travel_times.append(st.clock - v.spawn_tick)
        st.completed_wait_ticks.append(v.wait_ticks)
        del st.vehicles[v.id]

    # -- signal control ----------------------------------------------------

    def set_phase(self, signal_id: str, target_green: int) -> None:
        """Request a green phase; a differing request starts the yellow twin.

        Requests during yellow replace the pending green without resetting
        the yellow timer, so action flapping cannot freeze a signal.
        """
        ss = self.state.signal_states.get(signal_id)
        if ss is None:
            raise ConfigurationError(f"unknown signal {signal_id}")
        n = len(self._phase_moves[signal_id])
        if not (0 <= target_green < n):
            raise ConfigurationError(
                f"signal {signal_id}: phase {target_green} out of range [0, {n})"
            )
        if ss.active_kind == GREEN:
            if target_green == ss.active_index:
                return
            ss.active_kind = YELLOW
            ss.pending_index = target_green
            ss.phase_elapsed = 0
            self._reset_credits(signal_id)
        else:
            ss.pending_index = target_green

    def promote_due(self, yellow_duration: int) -> None:
        """Promote pending greens whose yellow interval has elapsed."""
        for ss in self.state.signal_states.values():
            if ss.active_kind == YELLOW and ss.phase_elapsed >= yellow_duration:
                ss.active_index = ss.pending_index
                ss.active_kind = GREEN
                ss.pending_index = None
                ss.phase_elapsed = 0

    def _reset_credits(self, signal_id: str) -> None:
        # a fresh green starts with empty saturation accumulators
        for lid in self._incoming[signal_id]:
            self.state.lane_states[lid].discharge_credit.clear()

    # -- measurement -------------------------------------------------------

    def lane_metrics(self, lane_id: str, visibility: float) -> Tuple[int, float, int]:
        """(count, mean normalized speed, queue) within ``visibility`` of the
        stop line.  An empty window reads free-flow speed 1.0."""
        ls = self.state.lane_states[lane_id]
        length = self._lane_length[lane_id]
        n = q = 0
        for vid in ls.queued:
            if length - self.state.vehicles[vid].position <= visibility:
                n += 1
                q += 1
        for vid in ls.running:
            if length - self.state.vehicles[vid].position <= visibility:
                n += 1
        if n == 0:
            return 0, 1.0, 0
        return n, (n - q) / n, q

    def gather(self, visibility: float) -> Dict[str, Tuple[int, int, int, int]]:
        """Single pass over all lanes: (n_full, q_full, n_visible, q_visible)."""
        out: Dict[str, Tuple[int, int, int, int]] = {}
        vehicles = self.state.vehicles
        for lid in self._sorted_lanes:
            ls = self.state.lane_states[lid]
            length = self._lane_length[lid]
            horizon = length - visibility
            q_full = len(ls.queued)
            n_full = q_full + len(ls.running)
            q_vis = 0
            for vid in ls.queued:
                if vehicles[vid].position >= horizon:
                    q_vis += 1
            n_vis = q_vis
            for vid in ls.running:
                if vehicles[vid].position >= horizon:
                    n_vis += 1
            out[lid] = (n_full, q_full, n_vis, q_vis)
        return out

    def queue_total(self) -> int:
        return sum(len(ls.queued) for ls in self.state.lane_states.values())
