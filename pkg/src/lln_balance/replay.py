"""Offline recomputation of a run's metrics from its event log.

Reads nothing but the log records and calls nothing but :mod:`metrics`,
so agreement with the simulator's online report is an end-to-end check
of the engine's bookkeeping.
"""

from __future__ import annotations

import math
from collections import defaultdict

from . import metrics as m


# where (src_idle, src_tx, dst_idle, dst_rx) start in TX and ACK records
_RADIO_OFFSET = {"TX": 8, "ACK": 6}


class LogIntegrityError(ValueError):
    pass


class OracleMismatch(AssertionError):
    def __init__(self, fields, online, replayed):
        self.fields = fields
        lines = [f"{len(fields)} field(s) diverge:"]
        for name in fields:
            lines.append(f"  {name}: online={_short(getattr(online, name))} replay={_short(getattr(replayed, name))}")
        super().__init__("\n".join(lines))


def _short(value):
    text = repr(value)
    return text if len(text) < 200 else text[:200] + "..."


def replay_oracle(log, cfg=None) -> m.MetricsReport:
    """Rebuild the :class:`MetricsReport` of a finished run from its log.

    ``cfg`` is accepted for symmetry with the simulator; everything needed
    (node count, lifetime cap, power draws) is read from the log header.
    """
    if not log or log[0][0] != "HDR":
        raise LogIntegrityError("log does not start with a header record")
    if log[-1][0] != "END":
        raise LogIntegrityError("log is truncated: no END record")
    if log[-1][2] != len(log):
        raise LogIntegrityError(f"END expects {log[-1][2]} records, log has {len(log)}")

    _, config, n, sink, relays, _initial, power = log[0]
    ledgers = [m.EnergyLedger(*power) for _ in range(n)]
    sent = 0
    latencies: list[float] = []
    dropped = 0
    deaths: dict[int, float] = {}
    window: dict[int, dict[int, list]] = defaultdict(dict)
    basic_series: dict[int, list[float]] = defaultdict(list)
    weighted_series: dict[int, list[float]] = defaultdict(list)

    for rec in log[1:-1]:
        kind = rec[0]
        if kind in _RADIO_OFFSET:
            src, dst = rec[2], rec[3]
            off = _RADIO_OFFSET[kind]
            si, sa, di, da = rec[off : off + 4]
            ledgers[src].add("idle", si)
            ledgers[src].add("tx", sa)
            ledgers[dst].add("idle", di)
            ledgers[dst].add("rx", da)
        elif kind == "RX":
            _, t, node, frm, _pkt, bits, lqi = rec
            slot = window[node].get(frm)
            if slot is None:
                window[node][frm] = [bits, lqi]
            else:
                slot[0] += bits
        elif kind == "GEN":
            sent += 1
        elif kind == "DLV":
            latencies.append(rec[1] - rec[3])
        elif kind == "DROP":
            dropped += 1
        elif kind == "IDLE":
            ledgers[rec[2]].add("idle", rec[3])
        elif kind == "DIO":
            _, t, src, _start, _dur, si, sa, receivers = rec
            ledgers[src].add("idle", si)
            ledgers[src].add("tx", sa)
            for rid, ri, ra in receivers:
                ledgers[rid].add("idle", ri)
                ledgers[rid].add("rx", ra)
        elif kind == "DEATH":
            deaths[rec[2]] = rec[3]
        elif kind == "SAMPLE":
            t, wlen = rec[1], rec[2]
            for node in range(n):
                if wlen > 0 and deaths.get(node, math.inf) > t:
                    per = window.get(node, {})
                    basic_series[node].append(m.throughput_basic([v[0] for v in per.values()], wlen))
                    weighted_series[node].append(
                        m.throughput_weighted([(v[0], v[1]) for _, v in sorted(per.items())], wlen, len(per))
                    )
            window.clear()
        elif kind == "ACK_RX":
            pass
        else:
            raise LogIntegrityError(f"unexpected record kind {kind!r}")

    cap = config["lifetime_cap"] if config.get("lifetime_cap") is not None else config["sim_time"]
    sensors = [i for i in range(n) if i != sink]
    energy = [m.energy_total(led) for led in ledgers]
    wtp = [_mean(weighted_series[i]) for i in range(n)]
    death_list = [deaths[i] for i in sensors if i in deaths and deaths[i] <= cap]
    fair_ids = relays or sensors
    aeed = m.avg_end_to_end_delay(latencies)
    return m.MetricsReport(
        pdr=m.pdr(sent, len(latencies)),
        throughput_per_node=[_mean(basic_series[i]) for i in range(n)],
        weighted_throughput_per_node=wtp,
        jfi_throughput=m.jain_fairness([wtp[i] for i in fair_ids]),
        aeed=None if aeed is m.UNDEFINED else aeed,
        jfi_energy=m.jain_fairness([energy[i] for i in sensors]),
        energy_per_node=energy,
        altn=m.altn(death_list, len(sensors) - len(death_list), cap, len(sensors)),
        death_times=death_list,
        packets_sent=sent,
        packets_received=len(latencies),
        packets_dropped=dropped,
    )


def check_equivalence(online: m.MetricsReport, log, rel: float = 1e-9) -> m.MetricsReport:
    """Replay ``log`` and raise :class:`OracleMismatch` on any divergence."""
    replayed = replay_oracle(log)
    bad = online.mismatches(replayed, rel)
    if bad:
        raise OracleMismatch(bad, online, replayed)
    return replayed


def _mean(xs):
    return math.fsum(xs) / len(xs) if xs else 0.0
