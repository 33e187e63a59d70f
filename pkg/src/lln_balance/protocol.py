"""LALARPL routing logic and the two comparison baselines.

Parent-set formation from DIO-indicators, automaton-driven parent choice,
batched Acks carrying the parent's traffic index, and reward/penalty
classification of those Acks.  The simulator owns timing and energy; the
functions here only read and mutate per-node routing state.
"""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Sequence

from . import automaton as la
from .metrics import ChildContribution, traffic_index
from .netmodel import NodeState, ParentEntry

VARIANTS = ("lalarpl", "minhop", "random")

AliveFn = Callable[[int], bool]


@dataclass(frozen=True)
class DioIndicator:
    sender: int
    min_hops_to_root: int
    traffic_index: float
    size: int = 80


@dataclass(frozen=True)
class AckPacket:
    sender: int
    traffic_index: float
    covers: int
    size: int = 80


class FeedbackKind(enum.Enum):
    REWARD = "reward"
    PENALTY = "penalty"
    NEUTRAL = "neutral"


@dataclass(frozen=True)
class FeedbackClass:
    kind: FeedbackKind
    step: float | None = None

    def __post_init__(self):
        if (self.step is None) != (self.kind is FeedbackKind.NEUTRAL):
            raise ValueError(f"step must be present iff kind is not neutral: {self}")


@dataclass(frozen=True)
class ProtocolConfig:
    zeta: float = 0.5
    batch_p: int = 5
    min_parents: int = 2
    max_parents: int = 5
    automaton: la.AutomatonConfig = field(default_factory=la.AutomatonConfig)
    variant: str = "lalarpl"
    dio_period: float = 30.0
    invert_traffic_term: bool = False
    # baselines run the same batched-Ack exchange but ignore the feedback
    baseline_acks: bool = True

    def __post_init__(self):
        if not 0.0 <= self.zeta <= 1.0:
            raise ValueError(f"zeta must be in [0, 1], got {self.zeta}")
        if self.batch_p < 1:
            raise ValueError(f"batch_p must be >= 1, got {self.batch_p}")
        if not 1 <= self.min_parents <= self.max_parents:
            raise ValueError("need 1 <= min_parents <= max_parents")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.dio_period <= 0:
            raise ValueError("dio_period must be positive")

    @property
    def learning(self) -> bool:
        return self.variant == "lalarpl"

    @property
    def sends_acks(self) -> bool:
        return self.learning or self.baseline_acks


def make_dio(
    node: NodeState, contributions: Sequence[ChildContribution], cb: float
) -> DioIndicator | None:
    if not node.alive or node.hop_count is None:
        return None
    return DioIndicator(node.id, node.hop_count, traffic_index(contributions, cb))


def selection_probabilities(
    candidates: Sequence[tuple[int, float]], zeta: float, invert_traffic_term: bool = False
) -> list[float]:
    """Blend inverse-hop share and traffic-index share for each candidate.

    ``candidates`` holds ``(num_hop, traffic_index)`` pairs.  When every
    traffic index is zero the traffic share falls back to uniform.
    """
    n = len(candidates)
    if n == 0:
        raise ValueError("no candidates")
    if n == 1:
        return [1.0]
    inv_hops = [1.0 / h for h, _ in candidates]
    hop_sum = math.fsum(inv_hops)
    tis = [t for _, t in candidates]
    if invert_traffic_term:
        zeros = [t == 0.0 for t in tis]
        if any(zeros):
            weights = [1.0 if z else 0.0 for z in zeros]
        else:
            weights = [1.0 / t for t in tis]
    else:
        weights = tis
    t_sum = math.fsum(weights)
    if t_sum == 0.0:
        traffic_share = [1.0 / n] * n
    else:
        traffic_share = [w / t_sum for w in weights]
    return [zeta * (ih / hop_sum) + (1.0 - zeta) * ts for ih, ts in zip(inv_hops, traffic_share)]


def form_parent_set(
    node: NodeState, received_dios: Sequence[DioIndicator], cfg: ProtocolConfig
) -> tuple[list[ParentEntry], la.ProbabilityVector | None]:
    """Build a routing table from this round's DIO-indicators.

    Only senders strictly closer to the root are eligible.  Returns an
    empty table (and no automaton) when none qualify.
    """
    if node.hop_count is None:
        return [], None
    eligible = sorted(
        (d for d in received_dios if d.min_hops_to_root < node.hop_count),
        key=lambda d: d.sender,
    )
    if not eligible:
        return [], None
    if len(eligible) == 1:
        d = eligible[0]
        return [ParentEntry(d.sender, 1.0, d.traffic_index, d.min_hops_to_root)], la.ProbabilityVector((1.0,))

    probs = selection_probabilities(
        [(d.min_hops_to_root, d.traffic_index) for d in eligible],
        cfg.zeta,
        cfg.invert_traffic_term,
    )
    keep = max(cfg.min_parents, min(cfg.max_parents, len(eligible)))
    ranked = sorted(range(len(eligible)), key=lambda i: (-probs[i], eligible[i].sender))[:keep]
    ranked.sort(key=lambda i: eligible[i].sender)
    pv = la.ProbabilityVector.from_weights([probs[i] for i in ranked])
    table = [
        ParentEntry(eligible[i].sender, p, eligible[i].traffic_index, eligible[i].min_hops_to_root)
        for i, p in zip(ranked, pv.entries)
    ]
    return table, pv


def _alive_indices(node: NodeState, alive: AliveFn | None) -> list[int]:
    if alive is None:
        return list(range(len(node.routing_table)))
    return [i for i, e in enumerate(node.routing_table) if alive(e.parent_id)]


def choose_parent(node: NodeState, rng: random.Random, alive: AliveFn | None = None) -> int | None:
    """Sample a parent from the automaton, restricted to live parents.

    Returns ``None`` when the table is empty or every parent is dead.
    Exactly one uniform draw is consumed whenever a parent is returned.
    """
    idx = _alive_indices(node, alive)
    if not idx:
        return None
    pv = node.automaton
    if len(idx) == len(node.routing_table):
        k = la.select_action(pv, rng)
    else:
        weights = [pv.entries[i] for i in idx]
        if math.fsum(weights) > 0.0:
            sub = la.ProbabilityVector.from_weights(weights)
        else:
            sub = la.init_uniform(len(idx))
        k = idx[la.select_action(sub, rng)]
    parent = node.routing_table[k].parent_id
    node.tx_batch_counters[parent] += 1
    return parent


def baseline_choose(
    variant: str, node: NodeState, rng: random.Random, alive: AliveFn | None = None
) -> int | None:
    idx = _alive_indices(node, alive)
    if not idx:
        return None
    table = node.routing_table
    if variant == "minhop":
        k = min(idx, key=lambda i: (table[i].hop_count, table[i].parent_id))
    elif variant == "random":
        k = idx[min(int(rng.random() * len(idx)), len(idx) - 1)]
    else:
        raise ValueError(f"not a baseline variant: {variant!r}")
    parent = table[k].parent_id
    node.tx_batch_counters[parent] += 1
    return parent


def on_data_received(
    parent: NodeState,
    child_id: int,
    received_counts,
    cfg: ProtocolConfig,
    parent_ti: float | Callable[[], float],
) -> AckPacket | None:
    """Count an accepted data packet; every ``batch_p``-th one yields an Ack.

    ``parent_ti`` may be a zero-argument callable, evaluated only when an
    Ack is actually due.
    """
    received_counts[child_id] += 1
    if received_counts[child_id] % cfg.batch_p == 0:
        ti = parent_ti() if callable(parent_ti) else parent_ti
        return AckPacket(parent.id, ti, cfg.batch_p)
    return None


def classify_feedback(
    ack_ti: float,
    other_parent_tis: Sequence[float],
    ack_sender_hops: int,
    table_hops: Sequence[int],
) -> FeedbackKind:
    if not other_parent_tis:
        return FeedbackKind.NEUTRAL
    avg = math.fsum(other_parent_tis) / len(other_parent_tis)
    if ack_ti < 0.5 * avg:
        return FeedbackKind.REWARD
    if ack_ti < 0.8 * avg and ack_sender_hops == min(table_hops):
        return FeedbackKind.REWARD
    if ack_ti > avg:
        return FeedbackKind.PENALTY
    return FeedbackKind.NEUTRAL


def on_ack_received(
    child: NodeState,
    ack: AckPacket,
    max_hop: int,
    cfg: ProtocolConfig,
    diag: la.Diagnostics | None = None,
) -> FeedbackClass | None:
    """Apply one Ack to the child's automaton; ``None`` if the sender is unknown."""
    table = child.routing_table
    idx = next((i for i, e in enumerate(table) if e.parent_id == ack.sender), None)
    if idx is None or child.automaton is None:
        if diag is not None:
            diag.bump("ack_from_unknown_parent")
        return None
    sender = table[idx]
    sender.traffic_index = ack.traffic_index
    others = [e.traffic_index for i, e in enumerate(table) if i != idx]
    kind = classify_feedback(ack.traffic_index, others, sender.hop_count, [e.hop_count for e in table])

    acfg = cfg.automaton
    if kind is FeedbackKind.REWARD:
        step = la.compute_alpha(
            ack.traffic_index, sender.hop_count, max_hop, max(e.traffic_index for e in table), acfg, diag
        )
        child.automaton = la.reward(child.automaton, idx, step)
    elif kind is FeedbackKind.PENALTY:
        avg_others = math.fsum(others) / len(others)
        step = la.compute_beta(avg_others, ack.traffic_index, sender.hop_count, max_hop, acfg, diag)
        child.automaton = la.penalize(child.automaton, idx, step)
    else:
        return FeedbackClass(kind)
    for entry, p in zip(table, child.automaton.entries):
        entry.selection_probability = p
    return FeedbackClass(kind, step)
