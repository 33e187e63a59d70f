"""Deterministic discrete-event engine for one scenario run.

Timing model per hop: a packet that arrives at a node becomes ready after a
fixed processing delay, waits in the node's FIFO queue, then occupies both
the sender's and the receiver's radio for ``size * 8 / data_rate`` seconds
and propagates at light speed.  Radios are half-duplex and serialized: a
transmission starts no earlier than the moment both radios are free.

Energy is charged on each radio's timeline (idle gap, then the active
state) when the transmission is scheduled; a node dies at the exact
instant its battery is exhausted.

Every state change that feeds a metric is appended to an :class:`EventLog`,
from which :func:`lln_balance.replay.replay_oracle` recomputes the report
without touching simulator state.
"""

from __future__ import annotations

import heapq
import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from . import metrics as m
from . import netmodel as nm
from . import protocol as proto
from .automaton import Diagnostics
from .config import ScenarioConfig
from .rng import split_streams

# event kinds, also the tie-break priority at equal timestamps
DIO_ROUND, GEN, TX_DONE, RX, ACK_RX, SAMPLE, END = range(7)

DROP_REASONS = ("buffer_full", "link_loss", "no_route", "node_dead")

# field names of each log record kind; the first field is always the
# simulation time at which the record was written
LOG_FIELDS = {
    "HDR": ("config", "n_nodes", "sink", "relays", "initial_energy", "power"),
    "GEN": ("t", "node", "pkt"),
    "TX": ("t", "src", "dst", "pkt", "start", "dur", "lost", "src_idle", "src_tx", "dst_idle", "dst_rx"),
    "RX": ("t", "node", "from", "pkt", "bits", "lqi"),
    "DLV": ("t", "pkt", "created"),
    "DROP": ("t", "pkt", "node", "reason"),
    "ACK": ("t", "src", "dst", "start", "dur", "src_idle", "src_tx", "dst_idle", "dst_rx"),
    "ACK_RX": ("t", "node", "parent", "feedback", "step"),
    "DIO": ("t", "src", "start", "dur", "src_idle", "src_tx", "receivers"),
    "IDLE": ("t", "node", "dur"),
    "DEATH": ("t", "node", "death_time"),
    "SAMPLE": ("t", "window"),
    "END": ("t", "records"),
}


class EventLog(list):
    """Append-only list of tuples ``(kind, *fields)`` in processing order."""

    def to_ndjson(self, path) -> None:
        with open(path, "w") as fh:
            for seq, rec in enumerate(self):
                fh.write(record_json(seq, rec))
                fh.write("\n")

    @classmethod
    def from_ndjson(cls, path) -> EventLog:
        log = cls()
        for line in Path(path).read_text().splitlines():
            obj = json.loads(line)
            kind = obj["kind"]
            fields = LOG_FIELDS[kind]
            values = [obj[f] for f in fields]
            if kind == "DIO":
                values[-1] = [tuple(r) for r in values[-1]]
            log.append((kind, *values))
        return log


def record_json(seq: int, rec: tuple) -> str:
    kind = rec[0]
    obj = {"seq": seq, "kind": kind}
    obj.update(zip(LOG_FIELDS[kind], rec[1:]))
    return json.dumps(obj, separators=(",", ":"), allow_nan=False, default=_json_default)


def _json_default(obj):
    if isinstance(obj, float) and math.isinf(obj):
        return None
    raise TypeError(obj)


class Packet:
    __slots__ = ("id", "src", "created", "bits", "arrived", "ready", "per_hop_delays", "status", "reason")

    def __init__(self, pid: int, src: int, created: float, bits: int):
        self.id = pid
        self.src = src
        self.created = created
        self.bits = bits
        self.arrived = created
        self.ready = created
        self.per_hop_delays: list[m.DelayBreakdown] = []
        self.status = "in-flight"
        self.reason: str | None = None

    @property
    def hops_taken(self) -> int:
        return len(self.per_hop_delays)


@dataclass
class _Window:
    """Per-node traffic accounting for throughput and traffic index."""

    rx_bits: Counter
    offered_cur: Counter
    offered_prev: Counter
    sent_cur: float = 0.0
    sent_prev: float = 0.0


class Simulator:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.pcfg = cfg.protocol
        self.streams = split_streams(cfg.seed)
        self.nodes = nm.place_nodes(
            cfg.n_nodes,
            (cfg.area_width, cfg.area_height),
            self.streams["placement"],
            radio_range=cfg.radio_range,
            mode=cfg.placement,
            initial_energy=cfg.initial_energy,
            capacity=cfg.queue_capacity,
            ledger_template=cfg.ledger_template(),
        )
        self.links = nm.build_links(self.nodes, cfg.radio_range, lqi_override=cfg.lqi_override)
        self.neighbors: dict[int, list[tuple[int, nm.Link]]] = {n.id: [] for n in self.nodes}
        self.link_of: dict[tuple[int, int], nm.Link] = {}
        for link in self.links:
            self.neighbors[link.a].append((link.b, link))
            self.neighbors[link.b].append((link.a, link))
            self.link_of[(link.a, link.b)] = self.link_of[(link.b, link.a)] = link
        self.sink = self.nodes[0]
        self.dodag = nm.compute_hop_counts(self.nodes, self.links)
        hops = self.dodag.hop_counts
        self.relays = sorted(
            n.id
            for n in self.nodes
            if not n.is_sink and any(hops[v] > hops[n.id] for v, _ in self.neighbors[n.id])
        )
        self.windows = {
            n.id: _Window(Counter(), Counter(), Counter()) for n in self.nodes
        }
        self.rx_counts = {n.id: Counter() for n in self.nodes}
        self.acks_sent: Counter = Counter()
        self.throughput_series: dict[int, list[float]] = {n.id: [] for n in self.nodes}
        self.weighted_series: dict[int, list[float]] = {n.id: [] for n in self.nodes}
        self.samples: list[tuple] = []
        self.window_start = 0.0
        self.prev_window_len = 0.0
        self.diag = Diagnostics()
        self.dead: set[int] = set()

        self.heap: list = []
        self._seq = itertools.count()
        self._pkt_ids = itertools.count()
        self.now = 0.0
        self.last_popped = (-math.inf, -1, -1)
        self.sent = 0
        self.delivered = 0
        self.latencies: list[float] = []
        self.delivered_packets: list[Packet] = []
        self.drops: Counter = Counter()
        self.packets: dict[int, Packet] = {}

        self.log = EventLog()
        self.log.append((
            "HDR",
            _jsonable_config(cfg),
            cfg.n_nodes,
            self.sink.id,
            self.relays,
            cfg.initial_energy,
            [cfg.p_tx, cfg.p_rx, cfg.p_idle, cfg.p_sleep],
        ))

    # ---- scheduling -------------------------------------------------

    def _push(self, t: float, kind: int, *payload) -> None:
        heapq.heappush(self.heap, (t, kind, next(self._seq), payload))

    def _schedule_initial(self) -> None:
        cfg = self.cfg
        self._push(0.0, DIO_ROUND)
        period = 1.0 / cfg.lambda_
        rng = self.streams["traffic"]
        for node in self.nodes[1:]:
            phase = rng.random() * period
            if phase < cfg.sim_time:
                self._push(phase, GEN, node, phase, 0)
        k = 1
        while k * cfg.metric_dt < cfg.sim_time - 1e-9:
            self._push(k * cfg.metric_dt, SAMPLE)
            k += 1
        self._push(cfg.sim_time, SAMPLE)
        self._push(cfg.sim_time, END)

    def run(self) -> tuple[m.MetricsReport, EventLog]:
        self._schedule_initial()
        handlers = {
            DIO_ROUND: self._on_dio_round,
            GEN: self._on_gen,
            TX_DONE: self._on_tx_done,
            RX: self._on_rx,
            ACK_RX: self._on_ack_rx,
            SAMPLE: self._on_sample,
        }
        heap = self.heap
        while heap:
            t, kind, seq, payload = heapq.heappop(heap)
            key = (t, kind, seq)
            assert key > self.last_popped, "event queue out of order"
            self.last_popped = key
            self.now = t
            if kind == END:
                self._on_end()
                break
            handlers[kind](*payload)
        return self.report(), self.log

    # ---- energy -----------------------------------------------------

    def _kill_if_dead(self, node: nm.NodeState) -> None:
        if node.alive or node.id in self.dead:
            return
        self.dead.add(node.id)
        self.log.append(("DEATH", self.now, node.id, node.death_time))
        while node.queue:
            self._drop(node.queue.popleft(), node, "node_dead")

    def _settle(self, node: nm.NodeState, t: float) -> None:
        """Charge idle time up to ``t``."""
        if node.alive and node.charged_until < t:
            dur = nm.consume_energy(node, "idle", t - node.charged_until)
            self.log.append(("IDLE", self.now, node.id, dur))
            self._kill_if_dead(node)

    def _charge(self, node: nm.NodeState, start: float, state: str, dur: float) -> tuple[float, float]:
        gap = start - node.charged_until
        idle = nm.consume_energy(node, "idle", gap) if gap > 0 else 0.0
        active = nm.consume_energy(node, state, dur)
        self._kill_if_dead(node)
        return idle, active

    # ---- traffic accounting ----------------------------------------

    def traffic_index_of(self, node: nm.NodeState, t: float) -> float:
        """Load offered by children over the previous and current windows."""
        w = self.windows[node.id]
        span = self.prev_window_len + (t - self.window_start)
        if span <= 0:
            return 0.0
        contribs = []
        for child in sorted(set(w.offered_cur) | set(w.offered_prev)):
            via = w.offered_cur[child] + w.offered_prev[child]
            cw = self.windows[child]
            total = cw.sent_cur + cw.sent_prev
            contribs.append(m.ChildContribution(child, via / total, total / span))
        return m.traffic_index(contribs, self.cfg.data_rate)

    # ---- packet handling -------------------------------------------

    def _drop(self, pkt: Packet, node: nm.NodeState, reason: str) -> None:
        pkt.status = "dropped"
        pkt.reason = reason
        self.drops[reason] += 1
        self.log.append(("DROP", self.now, pkt.id, node.id, reason))

    def _on_gen(self, node: nm.NodeState, phase: float, k: int) -> None:
        t = self.now
        self._settle(node, t)
        if not node.alive:
            return
        nxt = phase + (k + 1) / self.cfg.lambda_
        if nxt < self.cfg.sim_time:
            self._push(nxt, GEN, node, phase, k + 1)
        pkt = Packet(next(self._pkt_ids), node.id, t, self.cfg.data_size * 8)
        self.packets[pkt.id] = pkt
        self.sent += 1
        self.log.append(("GEN", t, node.id, pkt.id))
        self._accept(node, pkt, t)

    def _accept(self, node: nm.NodeState, pkt: Packet, t: float) -> bool:
        if node.queue_len() >= node.capacity:
            self._drop(pkt, node, "buffer_full")
            return False
        pkt.arrived = t
        pkt.ready = t + self.cfg.proc_delay
        node.queue.append(pkt)
        if node.in_service is None:
            self._serve(node)
        return True

    def _choose(self, node: nm.NodeState) -> int | None:
        alive = lambda pid: self.nodes[pid].alive  # noqa: E731
        rng = self.streams["automaton"]
        if self.pcfg.learning:
            return proto.choose_parent(node, rng, alive)
        return proto.baseline_choose(self.pcfg.variant, node, rng, alive)

    def _serve(self, node: nm.NodeState) -> None:
        cfg = self.cfg
        while node.queue and node.in_service is None and node.alive:
            pkt = node.queue[0]
            parent_id = self._choose(node)
            if parent_id is None:
                node.queue.popleft()
                self._drop(pkt, node, "no_route")
                continue
            parent = self.nodes[parent_id]
            link = self.link_of[(node.id, parent_id)]
            trans = pkt.bits / cfg.data_rate
            start = max(self.now, pkt.ready, node.charged_until, parent.charged_until)
            if start + trans > cfg.sim_time:
                node.tx_batch_counters[parent_id] -= 1
                return
            node.queue.popleft()
            node.in_service = pkt
            src_idle, src_tx = self._charge(node, start, "tx", trans)
            dst_idle, dst_rx = (0.0, 0.0)
            if parent.alive:
                dst_idle, dst_rx = self._charge(parent, start, "rx", trans)
            loss_p = cfg.loss_scale * (1.0 - link.lqi)
            lost = self.streams["loss"].random() < loss_p
            self.log.append((
                "TX", self.now, node.id, parent_id, pkt.id, start, trans, lost,
                src_idle, src_tx, dst_idle, dst_rx,
            ))
            w = self.windows[node.id]
            w.sent_cur += pkt.bits
            self.windows[parent_id].offered_cur[node.id] += pkt.bits
            pkt.per_hop_delays.append(
                m.DelayBreakdown(pkt.ready - pkt.arrived, start - pkt.ready, trans, link.prop_delay)
            )
            if src_tx < trans:
                # sender's battery ran out mid-frame
                node.in_service = None
                self._drop(pkt, node, "node_dead")
                self._kill_if_dead(node)
                return
            self._push(start + trans + link.prop_delay, RX, pkt, node.id, parent_id, lost)
            self._push(start + trans, TX_DONE, node)

    def _on_tx_done(self, node: nm.NodeState) -> None:
        node.in_service = None
        self._serve(node)

    def _on_rx(self, pkt: Packet, src_id: int, dst_id: int, lost: bool) -> None:
        t = self.now
        node = self.nodes[dst_id]
        if lost:
            self._drop(pkt, node, "link_loss")
            return
        self._settle(node, t)
        if not node.alive:
            self._drop(pkt, node, "node_dead")
            return
        if not node.is_sink and node.queue_len() >= node.capacity:
            self._drop(pkt, node, "buffer_full")
            return
        lqi = self.link_of[(src_id, dst_id)].lqi
        self.windows[dst_id].rx_bits[src_id] += pkt.bits
        self.log.append(("RX", t, dst_id, src_id, pkt.id, pkt.bits, lqi))
        if self.pcfg.sends_acks:
            ack = proto.on_data_received(
                node, src_id, self.rx_counts[dst_id], self.pcfg, lambda: self.traffic_index_of(node, t)
            )
            if ack is not None:
                self._send_ack(node, self.nodes[src_id], ack)
        if node.is_sink:
            pkt.status = "delivered"
            self.delivered += 1
            self.latencies.append(t - pkt.created)
            self.delivered_packets.append(pkt)
            self.log.append(("DLV", t, pkt.id, pkt.created))
        else:
            self._accept(node, pkt, t)

    def _send_ack(self, parent: nm.NodeState, child: nm.NodeState, ack: proto.AckPacket) -> None:
        cfg = self.cfg
        self.acks_sent[(child.id, parent.id)] += 1
        dur = cfg.ack_size * 8 / cfg.data_rate
        start = max(self.now, parent.charged_until, child.charged_until if child.alive else 0.0)
        if start + dur > cfg.sim_time:
            return
        src_idle, src_tx = self._charge(parent, start, "tx", dur)
        dst_idle, dst_rx = (0.0, 0.0)
        if child.alive:
            dst_idle, dst_rx = self._charge(child, start, "rx", dur)
        self.log.append(("ACK", self.now, parent.id, child.id, start, dur, src_idle, src_tx, dst_idle, dst_rx))
        if src_tx < dur:
            return
        link = self.link_of[(parent.id, child.id)]
        self._push(start + dur + link.prop_delay, ACK_RX, child, ack)

    def _on_ack_rx(self, child: nm.NodeState, ack: proto.AckPacket) -> None:
        if not child.alive or not self.pcfg.learning:
            return
        fb = proto.on_ack_received(child, ack, self.dodag.max_hop, self.pcfg, self.diag)
        if fb is not None:
            self.log.append(("ACK_RX", self.now, child.id, ack.sender, fb.kind.value, fb.step))

    # ---- control plane ---------------------------------------------

    def _on_dio_round(self) -> None:
        cfg = self.cfg
        t = self.now
        for node in self.nodes:
            self._settle(node, t)
        self.dodag = nm.compute_hop_counts(self.nodes, self.links, at_time=t)
        hops = self.dodag.hop_counts
        for node in self.nodes:
            node.hop_count = hops.get(node.id) if node.alive else None

        inbox: dict[int, list[proto.DioIndicator]] = {n.id: [] for n in self.nodes}
        dur = cfg.dio_size * 8 / cfg.data_rate
        for node in self.nodes:
            if not node.alive or node.hop_count is None:
                continue
            dio = proto.DioIndicator(node.id, node.hop_count, self.traffic_index_of(node, t), cfg.dio_size)
            receivers = [self.nodes[v] for v, _ in self.neighbors[node.id] if self.nodes[v].alive]
            start = max([t, node.charged_until] + [r.charged_until for r in receivers])
            if start + dur > cfg.sim_time:
                continue
            src_idle, src_tx = self._charge(node, start, "tx", dur)
            got = []
            for r in receivers:
                r_idle, r_rx = self._charge(r, start, "rx", dur)
                got.append((r.id, r_idle, r_rx))
                if r_rx == dur:
                    inbox[r.id].append(dio)
            self.log.append(("DIO", t, node.id, start, dur, src_idle, src_tx, got))

        for node in self.nodes:
            if node.is_sink or not node.alive:
                continue
            table, pv = proto.form_parent_set(node, inbox[node.id], self.pcfg)
            old = [e.parent_id for e in node.routing_table]
            if table and [e.parent_id for e in table] == old:
                # same parent set: keep what the automaton has learned
                for entry, fresh in zip(node.routing_table, table):
                    entry.traffic_index = fresh.traffic_index
                    entry.hop_count = fresh.hop_count
            elif table or not any(self.nodes[p].alive for p in old):
                node.routing_table, node.automaton = table, pv
            if node.in_service is None:
                self._serve(node)

        nxt = t + self.pcfg.dio_period
        if nxt < cfg.sim_time:
            self._push(nxt, DIO_ROUND)

    def _on_sample(self) -> None:
        t = self.now
        wlen = t - self.window_start
        for node in self.nodes:
            self._settle(node, t)
        for node in self.nodes:
            w = self.windows[node.id]
            if wlen > 0 and node.death_time > t:
                basic = m.throughput_basic(list(w.rx_bits.values()), wlen)
                per_nbr = [(bits, self.link_of[(nbr, node.id)].lqi) for nbr, bits in sorted(w.rx_bits.items())]
                weighted = m.throughput_weighted(per_nbr, wlen, len(w.rx_bits))
                self.throughput_series[node.id].append(basic)
                self.weighted_series[node.id].append(weighted)
                self.samples.append((t, node.id, basic, weighted, m.energy_total(node.ledger), True))
            else:
                self.samples.append((t, node.id, 0.0, 0.0, m.energy_total(node.ledger), node.death_time > t))
            w.rx_bits = Counter()
            w.offered_prev, w.offered_cur = w.offered_cur, Counter()
            w.sent_prev, w.sent_cur = w.sent_cur, 0.0
        self.prev_window_len = wlen
        self.window_start = t
        self.log.append(("SAMPLE", t, wlen))

    def _on_end(self) -> None:
        t = self.cfg.sim_time
        for node in self.nodes:
            self._settle(node, t)
        self.log.append(("END", t, len(self.log) + 1))

    # ---- results ----------------------------------------------------

    def sample_metrics(self, t: float) -> list[dict]:
        """Per-node rows recorded at the sample instant ``t`` (empty before the first window)."""
        return [
            {"t": s[0], "node": s[1], "throughput": s[2], "weighted_throughput": s[3],
             "energy": s[4], "alive": s[5]}
            for s in self.samples
            if s[0] == t
        ]

    def in_flight(self) -> int:
        return self.sent - self.delivered - sum(self.drops.values())

    def report(self) -> m.MetricsReport:
        cfg = self.cfg
        sensors = [n for n in self.nodes if not n.is_sink]
        tp = [_mean(self.throughput_series[n.id]) for n in self.nodes]
        wtp = [_mean(self.weighted_series[n.id]) for n in self.nodes]
        fair_ids = self.relays or [n.id for n in sensors]
        energy = [m.energy_total(n.ledger) for n in self.nodes]
        cap = cfg.cap
        deaths = [n.death_time for n in sensors if n.death_time <= cap]
        aeed = m.avg_end_to_end_delay(self.latencies)
        dropped = sum(self.drops.values())
        return m.MetricsReport(
            pdr=m.pdr(self.sent, self.delivered),
            throughput_per_node=tp,
            weighted_throughput_per_node=wtp,
            jfi_throughput=m.jain_fairness([wtp[i] for i in fair_ids]),
            aeed=None if aeed is m.UNDEFINED else aeed,
            jfi_energy=m.jain_fairness([energy[n.id] for n in sensors]),
            energy_per_node=energy,
            altn=m.altn(deaths, len(sensors) - len(deaths), cap, len(sensors)),
            death_times=deaths,
            packets_sent=self.sent,
            packets_received=self.delivered,
            packets_dropped=dropped,
        )

    def topology(self) -> dict:
        return nm.topology_json(self.nodes, self.links, nm.compute_hop_counts(self.nodes, self.links))


def _mean(xs: list[float]) -> float:
    return math.fsum(xs) / len(xs) if xs else 0.0


def _jsonable_config(cfg: ScenarioConfig) -> dict:
    return {k: v for k, v in cfg.to_flat().items()}


def run_scenario(cfg: ScenarioConfig) -> tuple[m.MetricsReport, EventLog]:
    return Simulator(cfg).run()


def trans_delay(size_bytes: int, data_rate: float) -> float:
    return size_bytes * 8 / data_rate


def deliver_hop_delay(pkt_bytes: int, link: nm.Link, cfg: ScenarioConfig, queue_wait: float = 0.0) -> m.DelayBreakdown:
    """Delay components of one uncontended hop."""
    return m.DelayBreakdown(cfg.proc_delay, queue_wait, trans_delay(pkt_bytes, cfg.data_rate), link.prop_delay)
