"""Static network model: placement, unit-disk links, hop counts, energy."""

from __future__ import annotations

import math
import random
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Iterable

from .automaton import ProbabilityVector
from .metrics import EnergyLedger, energy_total

SPEED_OF_LIGHT = 3e8
SINK, SENSOR = "sink", "sensor"


class TopologyError(ValueError):
    def __init__(self, message: str, unreachable: Iterable[int] = ()):
        self.unreachable = sorted(unreachable)
        if self.unreachable:
            message = f"{message}: unreachable nodes {self.unreachable}"
        super().__init__(message)


@dataclass(slots=True)
class ParentEntry:
    parent_id: int
    selection_probability: float
    traffic_index: float
    hop_count: int


@dataclass(frozen=True, slots=True)
class Link:
    a: int
    b: int
    distance: float
    lqi: float
    prop_delay: float

    def other(self, node_id: int) -> int:
        return self.b if node_id == self.a else self.a


@dataclass
class DodagState:
    max_hop: int
    hop_counts: dict[int, int]
    unreachable: set[int] = field(default_factory=set)


@dataclass(slots=True, eq=False)
class NodeState:
    id: int
    position: tuple[float, float]
    role: str = SENSOR
    initial_energy: float = 2.0
    energy_remaining: float = 2.0
    ledger: EnergyLedger = field(default_factory=EnergyLedger)
    queue: deque = field(default_factory=deque)
    capacity: int = 10
    alive: bool = True
    death_time: float = math.inf
    hop_count: int | None = None
    routing_table: list[ParentEntry] = field(default_factory=list)
    automaton: ProbabilityVector | None = None
    tx_batch_counters: Counter = field(default_factory=Counter)
    # radio timeline: energy has been charged up to this instant
    charged_until: float = 0.0
    in_service: object = None

    @property
    def is_sink(self) -> bool:
        return self.role == SINK

    def alive_at(self, t: float) -> bool:
        return t < self.death_time

    def queue_len(self) -> int:
        return len(self.queue) + (self.in_service is not None)


def place_nodes(
    n: int,
    area: tuple[float, float],
    rng: random.Random,
    *,
    radio_range: float | None = None,
    mode: str = "connected",
    initial_energy: float = 2.0,
    capacity: int = 10,
    ledger_template: EnergyLedger | None = None,
) -> list[NodeState]:
    """Sink at the area centre (id 0) plus ``n - 1`` randomly placed sensors.

    ``mode="uniform"`` draws every sensor uniformly over the area.
    ``mode="connected"`` draws each sensor uniformly inside the radio disk
    of a uniformly chosen, already placed node (rejecting points outside
    the area), which keeps the sink component connected at any density.
    """
    if n < 2:
        raise ValueError(f"need at least 2 nodes, got {n}")
    w, h = area
    if w <= 0 or h <= 0:
        raise ValueError(f"area must be positive, got {area}")
    if mode not in ("connected", "uniform"):
        raise ValueError(f"unknown placement mode {mode!r}")
    if mode == "connected" and not radio_range:
        raise ValueError("connected placement needs a radio range")

    positions = [(w / 2.0, h / 2.0)]
    while len(positions) < n:
        if mode == "uniform":
            positions.append((rng.uniform(0.0, w), rng.uniform(0.0, h)))
            continue
        ax, ay = positions[rng.randrange(len(positions))]
        r = radio_range * math.sqrt(rng.random())
        phi = 2.0 * math.pi * rng.random()
        x, y = ax + r * math.cos(phi), ay + r * math.sin(phi)
        if 0.0 <= x <= w and 0.0 <= y <= h:
            positions.append((x, y))

    template = ledger_template or EnergyLedger()
    nodes = []
    for i, pos in enumerate(positions):
        sink = i == 0
        energy = math.inf if sink else initial_energy
        nodes.append(
            NodeState(
                id=i,
                position=pos,
                role=SINK if sink else SENSOR,
                initial_energy=energy,
                energy_remaining=energy,
                ledger=EnergyLedger(template.p_tx, template.p_rx, template.p_idle, template.p_sleep),
                capacity=capacity,
            )
        )
    return nodes


def link_quality(distance: float, radio_range: float) -> float:
    return max(0.0, 1.0 - (distance / radio_range) ** 2)


def build_links(
    nodes: list[NodeState],
    radio_range: float,
    *,
    lqi_override: float | None = None,
    require_connected: bool = True,
) -> list[Link]:
    links = []
    for i, u in enumerate(nodes):
        ux, uy = u.position
        for v in nodes[i + 1 :]:
            d = math.hypot(v.position[0] - ux, v.position[1] - uy)
            if d <= radio_range:
                lqi = link_quality(d, radio_range) if lqi_override is None else lqi_override
                links.append(Link(u.id, v.id, d, lqi, d / SPEED_OF_LIGHT))
    if require_connected:
        dodag = compute_hop_counts(nodes, links)
        if dodag.unreachable:
            raise TopologyError("topology is not connected to the sink", dodag.unreachable)
    return links


def adjacency(nodes: list[NodeState], links: list[Link]) -> dict[int, list[Link]]:
    adj: dict[int, list[Link]] = {node.id: [] for node in nodes}
    for link in links:
        adj[link.a].append(link)
        adj[link.b].append(link)
    return adj


def compute_hop_counts(
    nodes: list[NodeState], links: list[Link], at_time: float | None = None
) -> DodagState:
    """Breadth-first hop counts from the sink over nodes alive at ``at_time``."""
    alive = {
        node.id for node in nodes if at_time is None or node.is_sink or node.alive_at(at_time)
    }
    adj = adjacency(nodes, links)
    sink = next(node.id for node in nodes if node.is_sink)
    hops = {sink: 0}
    frontier = deque([sink])
    while frontier:
        u = frontier.popleft()
        for link in adj[u]:
            v = link.other(u)
            if v in alive and v not in hops:
                hops[v] = hops[u] + 1
                frontier.append(v)
    unreachable = alive - hops.keys()
    return DodagState(max(hops.values()), hops, unreachable)


def consume_energy(node: NodeState, state: str, duration: float) -> float:
    """Charge ``duration`` seconds of ``state`` starting at ``node.charged_until``.

    Returns the duration actually charged, shorter than requested when the
    battery runs out; in that case the node dies at the depletion instant.
    """
    if duration < 0:
        raise ValueError(f"negative duration {duration}")
    if not node.alive or duration == 0.0:
        return 0.0
    power = node.ledger.power(state)
    cost = power * duration
    if cost >= node.energy_remaining:
        duration = node.energy_remaining / power
        node.ledger.add(state, duration)
        node.energy_remaining = 0.0
        node.alive = False
        node.death_time = node.charged_until + duration
        node.charged_until = node.death_time
        return duration
    node.ledger.add(state, duration)
    node.energy_remaining -= cost
    node.charged_until += duration
    return duration


def energy_residual_error(node: NodeState) -> float:
    """|initial - remaining - consumed|; zero up to rounding for a sensor."""
    if node.is_sink:
        return 0.0
    return abs(node.initial_energy - node.energy_remaining - energy_total(node.ledger))


def topology_json(nodes: list[NodeState], links: list[Link], dodag: DodagState) -> dict:
    return {
        "nodes": [
            {
                "id": node.id,
                "x": node.position[0],
                "y": node.position[1],
                "role": node.role,
                "hop_count": dodag.hop_counts.get(node.id),
            }
            for node in nodes
        ],
        "links": [
            {"a": l.a, "b": l.b, "distance": l.distance, "lqi": l.lqi} for l in links
        ],
        "max_hop": dodag.max_hop,
    }
