import math
import random
from fractions import Fraction

import hypothesis.strategies as st
import pytest
from hypothesis import given

from lln_balance import metrics as m
from lln_balance.metrics import ChildContribution as CC
from lln_balance.metrics import DelayBreakdown, EnergyLedger

import oracles


def test_traffic_index_examples():
    assert m.traffic_index([], 100.0) == 0.0
    assert m.traffic_index([CC(1, 1.0, 100)], 200) == 0.5
    assert m.traffic_index([CC(1, 0.5, 400), CC(2, 1.0, 100)], 250) == 1.0


def test_traffic_index_rejects_bad_capacity():
    with pytest.raises(m.MetricError):
        m.traffic_index([], 0)


contribs = st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1e6)), max_size=8)


@given(contribs, st.floats(1.0, 1e6))
def test_traffic_index_in_unit_interval(pairs, cb):
    ti = m.traffic_index([CC(i, t, x) for i, (t, x) in enumerate(pairs)], cb)
    assert 0.0 <= ti <= 1.0
    assert ti == pytest.approx(oracles.traffic_index(pairs, cb), rel=1e-9, abs=1e-300)


@given(contribs, st.floats(1.0, 1e6), st.floats(1.0, 4.0))
def test_traffic_index_monotone(pairs, cb, factor):
    base = m.traffic_index([CC(i, t, x) for i, (t, x) in enumerate(pairs)], cb)
    more = m.traffic_index([CC(i, t, x * factor) for i, (t, x) in enumerate(pairs)], cb)
    less_cap = m.traffic_index([CC(i, t, x) for i, (t, x) in enumerate(pairs)], cb * factor)
    assert more >= base - 1e-15
    assert less_cap <= base + 1e-15


def test_pdr_examples():
    assert m.pdr(100, 96) == 0.96
    assert m.pdr(0, 0) == 0.0
    assert m.pdr(7, 7) == 1.0
    with pytest.raises(m.MetricError):
        m.pdr(3, 4)


@given(st.integers(0, 10**6), st.data())
def test_pdr_times_sent_is_received(sent, data):
    received = data.draw(st.integers(0, sent))
    if sent:
        assert Fraction(m.pdr(sent, received)) * sent == pytest.approx(received, abs=1e-6)
        assert round(m.pdr(sent, received) * sent) == received


def test_throughput_basic_examples():
    assert m.throughput_basic([0, 0], 10) == 0.0
    assert m.throughput_basic([400, 600], 10) == 100.0
    assert m.throughput_basic([250_000], 1) == 250_000
    with pytest.raises(m.MetricError):
        m.throughput_basic([1], 0)


def test_throughput_weighted_examples():
    assert m.throughput_weighted([(1000, 1.0)], 1, 0) == 0.0
    assert m.throughput_weighted([(1000, 1.0)], 1, math.e - 1) == pytest.approx(1000.0, rel=1e-12)
    assert m.throughput_weighted([(1000, 0.5), (2000, 1.0)], 10, 1) == pytest.approx(250 * math.log(2))
    assert m.throughput_weighted([(1000, 0.5), (2000, 1.0)], 10, 1) == pytest.approx(173.29, abs=0.01)
    with pytest.raises(m.MetricError):
        m.throughput_weighted([(1, 1.5)], 1, 1)


def test_jain_examples():
    assert m.jain_fairness([5, 5, 5, 5]) == 1.0
    assert m.jain_fairness([1, 0, 0, 0]) == 0.25
    assert m.jain_fairness([1, 2, 3]) == pytest.approx(36 / 42)
    assert m.jain_fairness([0, 0, 0]) == 1.0


@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=30), st.floats(1e-3, 1e3))
def test_jain_bounds_and_scale_invariance(values, c):
    j = m.jain_fairness(values)
    n = len(values)
    assert 1 / n - 1e-12 <= j <= 1.0
    if any(v > 1e-100 for v in values):
        assert m.jain_fairness([c * v for v in values]) == pytest.approx(j, rel=1e-9)


def test_node_delay_examples():
    assert m.node_delay(DelayBreakdown()) == 0.0
    d = DelayBreakdown(1e-4, 3.2e-3, 1.6e-3, 3.3e-7)
    assert m.node_delay(d) == pytest.approx(4.90033e-3, rel=1e-12)
    assert m.node_delay(DelayBreakdown(trans=1.6e-3)) == 1.6e-3
    assert 50 * 8 / 250_000 == 1.6e-3


def test_link_delay_index_examples():
    assert m.link_delay_index([]) == 0.0
    assert m.link_delay_index([0.001, 0.002, 0.003]) == pytest.approx(0.006)
    assert m.link_delay_index([0.0042]) == 0.0042


def test_aeed_examples():
    assert m.avg_end_to_end_delay([0.010, 0.012, 0.011]) == pytest.approx(0.011)
    assert m.avg_end_to_end_delay([0.5]) == 0.5
    assert m.avg_end_to_end_delay([0.011064] * 37) == pytest.approx(0.011064, rel=1e-15)
    assert m.avg_end_to_end_delay([]) is m.UNDEFINED


@given(
    st.lists(st.floats(0, 10), min_size=1, max_size=20),
    st.lists(st.floats(0, 10), min_size=1, max_size=20),
)
def test_aeed_concatenation_is_weighted_mean(a, b):
    whole = m.avg_end_to_end_delay(a + b)
    parts = (m.avg_end_to_end_delay(a) * len(a) + m.avg_end_to_end_delay(b) * len(b)) / (len(a) + len(b))
    assert whole == pytest.approx(parts, rel=1e-9, abs=1e-12)


def test_energy_examples():
    assert m.energy_total(EnergyLedger()) == 0.0
    led = EnergyLedger(0.0522, 0.0591, 0.00128, 1e-6, 10, 20, 900, 70)
    assert m.energy_total(led) == pytest.approx(0.522 + 1.182 + 1.152 + 7e-5, rel=1e-12)
    assert m.energy_total(led) == pytest.approx(2.85607, abs=1e-5)
    assert m.energy_total(EnergyLedger(0, 0, 0.002, 0, 0, 0, 1000, 0)) == 2.0


def test_altn_examples():
    assert m.altn([], 5, 1000, 5) == 1.0
    assert m.altn([0, 0], 0, 1000, 2) == 0.0
    assert m.altn([400, 600], 2, 1000, 4) == 0.75
    with pytest.raises(m.MetricError):
        m.altn([1.0], 2, 1000, 4)


@given(st.lists(st.floats(0, 1000), max_size=10), st.integers(0, 10), st.data())
def test_altn_monotone_and_bounded(deaths, survivors, data):
    n = len(deaths) + survivors
    if n == 0:
        return
    base = m.altn(deaths, survivors, 1000, n)
    assert 0.0 <= base <= 1.0
    assert base == pytest.approx(oracles.altn(deaths, survivors, 1000, n), rel=1e-9, abs=1e-15)
    if deaths:
        i = data.draw(st.integers(0, len(deaths) - 1))
        later = list(deaths)
        later[i] = min(1000.0, later[i] + data.draw(st.floats(0, 1000)))
        assert m.altn(later, survivors, 1000, n) >= base - 1e-15
        # one more survivor in place of a death
        assert m.altn(deaths[:-1], survivors + 1, 1000, n) >= base - 1e-15


def test_report_mismatch_detection():
    a = m.MetricsReport(pdr=0.5, energy_per_node=[1.0, 2.0], aeed=0.01)
    b = m.MetricsReport(pdr=0.5, energy_per_node=[1.0, 2.0 + 1e-6], aeed=None)
    assert set(a.mismatches(b)) == {"energy_per_node", "aeed"}
    assert a.mismatches(a) == []


def test_random_agreement_with_oracles():
    rng = random.Random(11)
    for _ in range(200):
        vals = [rng.uniform(0, 100) for _ in range(rng.randint(1, 12))]
        assert oracles.rel_close(m.jain_fairness(vals), oracles.jain(vals))
        pairs = [(rng.uniform(0, 1e4), rng.random()) for _ in range(rng.randint(0, 6))]
        dt = rng.uniform(0.1, 30)
        c = rng.randint(0, 10)
        assert oracles.rel_close(m.throughput_weighted(pairs, dt, c), oracles.throughput_weighted(pairs, dt, c))
