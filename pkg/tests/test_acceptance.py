"""Acceptance suite: one test, and one PASS/FAIL line, per criterion.

Verdict lines are repeated in the pytest terminal summary.  Simulation
runs are cached per (n_nodes, lambda, variant, seed) so the directional
criteria and the energy audit share work.
"""

import dataclasses
import functools
import math
import random
import statistics
import time

import numpy as np

from lln_balance import automaton as la
from lln_balance import cli
from lln_balance import metrics as m
from lln_balance import netmodel as nm
from lln_balance.config import ScenarioConfig
from lln_balance.metrics import ChildContribution, DelayBreakdown, EnergyLedger
from lln_balance.protocol import selection_probabilities
from lln_balance.replay import OracleMismatch, check_equivalence
from lln_balance.rng import derive_stream
from lln_balance.simcore import Simulator

import oracles

SEEDS = range(1, 11)
REL = 1e-9


@functools.cache
def simulate(n_nodes, lam, variant, seed):
    """Run one scenario; return (report, max energy residual, replay mismatches)."""
    cfg = ScenarioConfig(n_nodes=n_nodes, lambda_=lam, seed=seed).with_overrides(variant=variant)
    sim = Simulator(cfg)
    report, log = sim.run()
    residual = max(nm.energy_residual_error(n) for n in sim.nodes)
    try:
        check_equivalence(report, log, rel=REL)
        mismatch = []
    except OracleMismatch as exc:
        mismatch = exc.fields
    return report, residual, mismatch


def medians(n_nodes, lam, field, variants):
    return {v: statistics.median(getattr(simulate(n_nodes, lam, v, s)[0], field) for s in SEEDS) for v in variants}


# 1 ------------------------------------------------------------------------

def test_c01_simplex_suite(verdict):
    rng = random.Random(20240601)
    ops = [(rng.randint(2, 5), rng.random(), rng.random(), rng.random() < 0.5) for _ in range(1_000_000)]
    reward, penalize, fsum = la.reward, la.penalize, math.fsum
    bad = 0
    t0 = time.perf_counter()
    pv = la.init_uniform(2)
    for k, (r, u, step, is_reward) in enumerate(ops):
        if k % 1000 == 0:
            pv = la.init_uniform(r)
        i = int(u * len(pv.entries))
        pv = reward(pv, i, step) if is_reward else penalize(pv, i, step)
        e = pv.entries
        if abs(fsum(e) - 1.0) > 1e-9 or min(e) < 0.0:
            bad += 1
    elapsed = time.perf_counter() - t0
    verdict(1, "simplex preservation", bad == 0 and elapsed < 5.0,
            f"{bad} violations in 10^6 ops, {elapsed:.2f} s (limit 5 s)")


# 2 ------------------------------------------------------------------------

def test_c02_lrp_convergence(verdict):
    env = la.StationaryEnvironment((0.9, 0.2))
    t0 = time.perf_counter()
    finals = [
        la.run_stationary_trial(env, 0.05, 0.05, 10_000, derive_stream(s, "automaton"))[0].entries[0]
        for s in range(1, 101)
    ]
    elapsed = time.perf_counter() - t0
    passed = sum(p > 0.95 for p in finals)
    verdict(2, "L_R-P convergence", passed >= 95 and elapsed < 10.0,
            f"{passed}/100 seeds with P(best) > 0.95 (need >= 95), median {statistics.median(finals):.4f}, "
            f"{elapsed:.2f} s")


# 3 ------------------------------------------------------------------------

def _rel_err(a, b):
    if a == b:
        return 0.0
    return abs(a - b) / max(abs(a), abs(b))


def test_c03_closed_form_oracles(verdict):
    rng = random.Random(7)
    acfg = la.AutomatonConfig(alpha1=0.03, alpha2=0.04, delta=1.3, gamma=0.15, eta=2.0, xi=0.8, c1=0.01, c2=-0.02)
    params = dataclasses.asdict(acfg)
    worst: dict[str, float] = {}

    def track(name, got, ref):
        worst[name] = max(worst.get(name, 0.0), _rel_err(got, ref))

    for _ in range(1000):
        max_hop = rng.randint(1, 15)
        num_hop = rng.randint(1, max_hop)
        gamma, xi, eta = rng.uniform(0.01, 1), rng.uniform(0.1, 3), rng.uniform(0.1, 3)
        ti, other = rng.random(), rng.random()
        track("f", la.damping_f(max_hop, num_hop, gamma), oracles.damping_f(max_hop, num_hop, gamma))
        track("g", la.log_modulation_g(max_hop, xi), oracles.log_modulation_g(max_hop, xi))
        track("h", la.deviation_h(other, ti, eta), oracles.deviation_h(other, ti, eta))
        max_ti = max(ti, other)
        track("alpha", la.compute_alpha(ti, num_hop, max_hop, max_ti, acfg), oracles.alpha_step(ti, num_hop, max_hop, max_ti, params))
        track("beta", la.compute_beta(other, ti, num_hop, max_hop, acfg), oracles.beta_step(other, ti, num_hop, max_hop, params))

        pairs = [(rng.random(), rng.uniform(0, 2e5)) for _ in range(rng.randint(0, 6))]
        cb = rng.uniform(1e4, 5e5)
        track("TI", m.traffic_index([ChildContribution(j, a, b) for j, (a, b) in enumerate(pairs)], cb),
              oracles.traffic_index(pairs, cb))

        cands = [(rng.randint(1, 8), rng.random()) for _ in range(rng.randint(1, 6))]
        zeta = rng.random()
        for got, ref in zip(selection_probabilities(cands, zeta), oracles.selection_probabilities(cands, zeta)):
            track("selection", got, ref)

        sent = rng.randint(0, 10_000)
        recv = rng.randint(0, sent)
        track("pdr", m.pdr(sent, recv), oracles.pdr(sent, recv))

        bits = [rng.uniform(0, 1e5) for _ in range(rng.randint(0, 8))]
        dt = rng.uniform(0.5, 30)
        track("throughput", m.throughput_basic(bits, dt), oracles.throughput_basic(bits, dt))
        wpairs = [(b, rng.random()) for b in bits]
        kids = rng.randint(0, 8)
        track("weighted_throughput", m.throughput_weighted(wpairs, dt, kids), oracles.throughput_weighted(wpairs, dt, kids))

        vec = [rng.uniform(0, 1e4) for _ in range(rng.randint(1, 40))]
        track("jfi_throughput", m.jain_fairness(vec), oracles.jain(vec))
        comps = [rng.uniform(0, 1e-2) for _ in range(4)]
        track("node_delay", m.node_delay(DelayBreakdown(*comps)), oracles.node_delay(*comps))
        hops = [rng.uniform(0, 1e-2) for _ in range(rng.randint(0, 8))]
        track("link_delay_index", m.link_delay_index(hops), oracles.link_delay_index(hops))
        lat = [rng.uniform(1e-3, 1) for _ in range(rng.randint(1, 50))]
        track("aeed", m.avg_end_to_end_delay(lat), oracles.mean_delay(lat))
        powers = [rng.uniform(0, 0.1) for _ in range(4)]
        durs = [rng.uniform(0, 1000) for _ in range(4)]
        track("energy", m.energy_total(EnergyLedger(*powers, *durs)), oracles.energy_total(powers, durs))
        energies = [rng.uniform(0, 2) for _ in range(rng.randint(1, 40))]
        track("jfi_energy", m.jain_fairness(energies), oracles.jain(energies))
        n = rng.randint(1, 40)
        deaths = [rng.uniform(0, 1000) for _ in range(rng.randint(0, n))]
        track("altn", m.altn(deaths, n - len(deaths), 1000.0, n), oracles.altn(deaths, n - len(deaths), 1000.0, n))

    bad = {k: v for k, v in worst.items() if v > REL}
    top = max(worst.values())
    verdict(3, "closed-form oracles", not bad,
            f"{len(worst)} formulas x 1000 inputs, worst rel err {top:.2e}" + (f", over tolerance: {bad}" if bad else ""))


# 4 ------------------------------------------------------------------------

def test_c04_jain_bounds(verdict):
    gen = np.random.default_rng(4)
    out_of_bounds = 0
    for _ in range(10_000):
        n = int(gen.integers(1, 60))
        v = (gen.random(n) * 10.0 ** gen.integers(-3, 4)).tolist()
        j = m.jain_fairness(v)
        if not (1.0 / n - 1e-12 <= j <= 1.0):
            out_of_bounds += 1
    equal_err = max(abs(m.jain_fairness([c] * n) - 1.0) for n in range(1, 60) for c in (0.3, 1.0, 7e5))
    onehot_err = max(abs(m.jain_fairness([0.0] * (n - 1) + [c]) - 1.0 / n) for n in range(1, 60) for c in (0.3, 9.0))
    ok = out_of_bounds == 0 and equal_err <= 1e-12 and onehot_err <= 1e-12
    verdict(4, "Jain bounds", ok,
            f"{out_of_bounds}/10000 out of [1/n, 1]; equal-vector err {equal_err:.1e}; one-hot err {onehot_err:.1e}")


# 5 ------------------------------------------------------------------------

def test_c05_lossless_limit(verdict):
    cfg = ScenarioConfig(loss_scale=0.0, queue_capacity=10**6)
    sim = Simulator(cfg)
    report, log = sim.run()
    replayed = check_equivalence(report, log)
    aeed_ok = _rel_err(report.aeed, replayed.aeed) <= REL
    ok = report.pdr == 1.0 and aeed_ok
    verdict(5, "lossless limit", ok,
            f"PDR {report.pdr!r} (need 1.0 exactly; sent {report.packets_sent}, delivered {report.packets_received}, "
            f"dropped {report.packets_dropped}, in flight at end {sim.in_flight()}); "
            f"AEED {report.aeed:.6e} vs replay {replayed.aeed:.6e}")


# 6 ------------------------------------------------------------------------

def test_c06_oracle_equivalence(verdict):
    bad = {}
    for s in SEEDS:
        fields = simulate(50, 0.2, "lalarpl", s)[2]
        if fields:
            bad[s] = fields
    verdict(6, "oracle equivalence", not bad, f"10 runs replayed, divergences: {bad or 'none'}")


# 7 ------------------------------------------------------------------------

def _fmt(d):
    return ", ".join(f"{k} {v:.5f}" for k, v in d.items())


def test_c07_directional_fairness(verdict):
    tp = medians(50, 0.2, "jfi_throughput", ("lalarpl", "random", "minhop"))
    en = medians(100, 0.2, "jfi_energy", ("lalarpl", "random", "minhop"))
    ok_tp = tp["lalarpl"] > tp["random"] and tp["lalarpl"] > tp["minhop"]
    ok_en = en["lalarpl"] > en["random"] and en["lalarpl"] > en["minhop"]
    verdict(7, "directional load balancing", ok_tp and ok_en,
            f"median JFI throughput @50: {_fmt(tp)}; median JFI energy @100: {_fmt(en)}")


# 8 ------------------------------------------------------------------------

def test_c08_directional_lifetime(verdict):
    al = medians(150, 0.2, "altn", ("lalarpl", "minhop"))
    verdict(8, "directional lifetime", al["lalarpl"] >= al["minhop"], f"median ALTN @150: {_fmt(al)}")


# 9 ------------------------------------------------------------------------

def test_c09_energy_accounting(verdict):
    keys = [(50, 0.2, v, s) for v in ("lalarpl", "random", "minhop") for s in SEEDS]
    keys += [(100, 0.2, v, s) for v in ("lalarpl", "random", "minhop") for s in SEEDS]
    keys += [(150, 0.2, v, s) for v in ("lalarpl", "minhop") for s in SEEDS]
    residual = max(simulate(*k)[1] for k in keys)

    node = nm.NodeState(1, (0.0, 0.0), ledger=EnergyLedger(0.002, 0.002, 0.002, 0.002))
    nm.consume_energy(node, "idle", 1500.0)
    fixture = ScenarioConfig(n_nodes=10, sim_time=1500.0, p_tx=0.002, p_rx=0.002, p_idle=0.002, p_sleep=0.002)
    deaths = Simulator(fixture).run()[0].death_times
    sim_err = max(abs(t - 1000.0) for t in deaths)
    ok = residual <= 1e-9 and node.death_time == 1000.0 and len(deaths) == 9 and sim_err <= 1e-9
    verdict(9, "energy accounting", ok,
            f"max |E0 - E - ledger| over {len(keys)} runs {residual:.1e} J; idle fixture death at {node.death_time!r} s; "
            f"constant-power simulation: {len(deaths)}/9 deaths, max |t - 1000| {sim_err:.1e} s")


# 10 -----------------------------------------------------------------------

def test_c10_determinism(verdict, tmp_path):
    scen = tmp_path / "defaults.yaml"
    scen.write_text("")
    for d in ("a", "b"):
        assert cli.main(["run", str(scen), "--seed", "3", "--out", str(tmp_path / d), "--export-log"]) == 0
    same = {name: (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
            for name in ("results.csv", "events.ndjson")}
    size = (tmp_path / "a" / "events.ndjson").stat().st_size
    verdict(10, "determinism", all(same.values()), f"byte-identical: {same} (log {size} bytes)")


# 11 -----------------------------------------------------------------------

def test_c11_performance(verdict):
    times = {}
    for n in (50, 100, 150):
        for lam in (0.1, 0.2):
            t0 = time.perf_counter()
            Simulator(ScenarioConfig(n_nodes=n, lambda_=lam, seed=1)).run()
            times[(n, lam)] = time.perf_counter() - t0
    total = sum(times.values())
    single = max(times[(150, 0.1)], times[(150, 0.2)])
    verdict(11, "performance", total < 60.0 and single < 20.0,
            f"default grid {total:.1f} s (limit 60), slowest 150-node run {single:.1f} s (limit 20)")
