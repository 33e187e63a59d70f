"""Evaluation metrics: traffic index, delivery, throughput, fairness, delay,
energy and lifetime.

All functions are pure.  Units: seconds, bits, bits/second, watts, joules.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class ChildContribution:
    child_id: int
    theta: float
    traffic: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise MetricError(f"theta must be in [0, 1], got {self.theta}")
        if self.traffic < 0:
            raise MetricError(f"traffic must be >= 0, got {self.traffic}")


@dataclass
class EnergyLedger:
    p_tx: float = 0.0522
    p_rx: float = 0.0591
    p_idle: float = 0.00128
    p_sleep: float = 1e-6
    t_tx: float = 0.0
    t_rx: float = 0.0
    t_idle: float = 0.0
    t_sleep: float = 0.0

    def power(self, state: str) -> float:
        return getattr(self, "p_" + state)

    def add(self, state: str, duration: float) -> None:
        attr = "t_" + state
        setattr(self, attr, getattr(self, attr) + duration)

    @property
    def busy_time(self) -> float:
        return self.t_tx + self.t_rx + self.t_idle + self.t_sleep


@dataclass(frozen=True)
class DelayBreakdown:
    proc: float = 0.0
    queue: float = 0.0
    trans: float = 0.0
    prop: float = 0.0


class UndefinedMetric:
    """Marker for a metric with no samples (e.g. delay with zero deliveries)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNDEFINED"

    def __bool__(self):
        return False


UNDEFINED = UndefinedMetric()


def traffic_index(contributions: Sequence[ChildContribution], cb: float) -> float:
    if cb <= 0:
        raise MetricError(f"capacity must be positive, got {cb}")
    load = math.fsum(c.theta * c.traffic for c in contributions)
    return min(1.0, load / cb)


def pdr(sent: int, received: int) -> float:
    if received > sent:
        raise MetricError(f"received ({received}) exceeds sent ({sent})")
    if sent == 0:
        return 0.0
    return received / sent


def throughput_basic(received_bits: Sequence[float], dt: float) -> float:
    if dt <= 0:
        raise MetricError(f"window must be positive, got {dt}")
    return math.fsum(received_bits) / dt


def throughput_weighted(
    per_neighbor: Sequence[tuple[float, float]], dt: float, child_count: float
) -> float:
    """LQI-weighted rate scaled by ln(1 + children)."""
    if dt <= 0:
        raise MetricError(f"window must be positive, got {dt}")
    if child_count < 0:
        raise MetricError(f"child count must be >= 0, got {child_count}")
    for _, lqi in per_neighbor:
        if not 0.0 <= lqi <= 1.0:
            raise MetricError(f"lqi must be in [0, 1], got {lqi}")
    rate = math.fsum(bits * lqi for bits, lqi in per_neighbor) / dt
    return rate * math.log1p(child_count)


def jain_fairness(values: Sequence[float]) -> float:
    n = len(values)
    if n == 0:
        raise MetricError("fairness of an empty set is undefined")
    if any(v < 0 for v in values):
        raise MetricError("fairness inputs must be non-negative")
    sq = math.fsum(v * v for v in values)
    if sq == 0.0:
        return 1.0
    s = math.fsum(values)
    return min(1.0, s * s / (n * sq))


def node_delay(d: DelayBreakdown) -> float:
    return d.proc + d.queue + d.trans + d.prop


def link_delay_index(per_hop_delays: Sequence[float]) -> float:
    if any(x < 0 for x in per_hop_delays):
        raise MetricError("delays must be non-negative")
    return math.fsum(per_hop_delays)


def avg_end_to_end_delay(latencies: Sequence[float]):
    """Mean latency of delivered packets, or ``UNDEFINED`` when none arrived."""
    if len(latencies) == 0:
        return UNDEFINED
    return math.fsum(latencies) / len(latencies)


def energy_total(ledger: EnergyLedger) -> float:
    return (
        ledger.p_tx * ledger.t_tx
        + ledger.p_rx * ledger.t_rx
        + ledger.p_idle * ledger.t_idle
        + ledger.p_sleep * ledger.t_sleep
    )


def altn(death_times: Sequence[float], survivors: int, lifetime_cap: float, n: int) -> float:
    """Average node lifetime, survivors credited the full cap, normalized by the cap."""
    if n < 1:
        raise MetricError("need at least one node")
    if lifetime_cap <= 0:
        raise MetricError("lifetime cap must be positive")
    if survivors < 0 or len(death_times) != n - survivors:
        raise MetricError(
            f"{len(death_times)} deaths + {survivors} survivors != {n} nodes"
        )
    if any(t < 0 or t > lifetime_cap for t in death_times):
        raise MetricError("death times must lie in [0, lifetime_cap]")
    raw = (math.fsum(death_times) + survivors * lifetime_cap) / n
    return raw / lifetime_cap


@dataclass
class MetricsReport:
    pdr: float = 0.0
    throughput_per_node: list[float] = field(default_factory=list)
    weighted_throughput_per_node: list[float] = field(default_factory=list)
    jfi_throughput: float = 1.0
    aeed: float | None = None
    jfi_energy: float = 1.0
    energy_per_node: list[float] = field(default_factory=list)
    altn: float = 1.0
    death_times: list[float] = field(default_factory=list)
    packets_sent: int = 0
    packets_received: int = 0
    packets_dropped: int = 0

    SCALARS = (
        "pdr",
        "jfi_throughput",
        "aeed",
        "jfi_energy",
        "altn",
        "packets_sent",
        "packets_received",
        "packets_dropped",
    )
    LISTS = (
        "throughput_per_node",
        "weighted_throughput_per_node",
        "energy_per_node",
        "death_times",
    )

    def to_dict(self) -> dict:
        return asdict(self)

    def mismatches(self, other: MetricsReport, rel: float = 1e-9) -> list[str]:
        """Fields on which two reports disagree beyond ``rel`` relative error."""
        bad = []
        for name in self.SCALARS + self.LISTS:
            a, b = getattr(self, name), getattr(other, name)
            if isinstance(a, list):
                if len(a) != len(b) or not all(_close(x, y, rel) for x, y in zip(a, b)):
                    bad.append(name)
            elif a is None or b is None:
                if a is not b:
                    bad.append(name)
            elif not _close(a, b, rel):
                bad.append(name)
        return bad


def _close(a: float, b: float, rel: float) -> bool:
    return math.isclose(a, b, rel_tol=rel, abs_tol=1e-300) or a == b
