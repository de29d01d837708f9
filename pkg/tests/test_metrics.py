from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from carpsim.metrics import (CostIndexError, EwmaEstimator, LinkMetrics, MetricsNotWarm,
                             NodeMetrics, NominalMetrics, WeightAccumulator,
                             effective_data_rate, mac_overhead, node_weight, recover_cost_index)

pos = st.floats(min_value=1e-9, max_value=1e9, allow_nan=False, allow_infinity=False)
unit = st.floats(min_value=0.01, max_value=1.0)


def lm(l_q=1.58314e-9, d_rate=2e6, oh_mac=2e-3, d_avg=5e-2):
    return LinkMetrics(l_q=l_q, oh_mac=oh_mac, d_rate=d_rate, d_avg=d_avg)


# -- EWMA ----------------------------------------------------------------------

def test_first_sample_seeds_estimator():
    e = EwmaEstimator(0.3)
    assert not e.warm
    assert e.update(5.0) == 5.0 and e.warm


def test_half_alpha_step():
    e = EwmaEstimator(0.5)
    e.update(2.0)
    assert e.update(4.0) == 3.0


@given(st.lists(pos, min_size=1, max_size=30))
def test_alpha_one_is_last_sample(samples):
    e = EwmaEstimator(1.0)
    for s in samples:
        e.update(s)
    assert e.value == samples[-1] and e.count == len(samples)


@given(unit, st.lists(pos, min_size=1, max_size=30))
def test_ewma_stays_within_sample_range(alpha, samples):
    e = EwmaEstimator(alpha)
    for s in samples:
        e.update(s)
    assert min(samples) * (1 - 1e-12) <= e.value <= max(samples) * (1 + 1e-12)


@pytest.mark.parametrize("alpha", [0.0, -0.1, 1.5])
def test_bad_alpha(alpha):
    with pytest.raises(ValueError):
        EwmaEstimator(alpha)


# -- formulas ------------------------------------------------------------------

def test_mac_overhead_examples():
    assert mac_overhead(686e-6, 1314e-6) == pytest.approx(2000e-6, rel=1e-12)
    assert mac_overhead(686e-6, 0.0) == 686e-6
    assert mac_overhead(686e-6, 10e-3) == pytest.approx(10.686e-3)


def test_effective_rate_examples():
    assert effective_data_rate(4096, 2.048e-3) == pytest.approx(2.0e6, rel=1e-12)
    assert effective_data_rate(4096, 4.096e-3) == pytest.approx(1.0e6, rel=1e-12)
    with pytest.raises(ZeroDivisionError):
        effective_data_rate(4096, 0.0)


def test_node_weight_example():
    assert node_weight(lm()) == pytest.approx(31.6628, abs=1e-4)


def test_node_weight_refuses_cold_metrics():
    with pytest.raises(MetricsNotWarm, match="d_avg"):
        node_weight(LinkMetrics(l_q=1.0, oh_mac=1.0, d_rate=1.0))


@given(pos, pos, pos, pos)
def test_node_weight_oracle(l_q, d_rate, oh_mac, d_avg):
    exact = Fraction(l_q) * Fraction(d_rate) / (Fraction(oh_mac) * Fraction(d_avg))
    got = node_weight(lm(l_q, d_rate, oh_mac, d_avg))
    assert abs(Fraction(got) - exact) <= exact * Fraction(1, 10**12)


@given(pos, pos, pos, pos, st.floats(min_value=1.001, max_value=100.0))
def test_node_weight_monotone(l_q, d_rate, oh_mac, d_avg, k):
    base = node_weight(lm(l_q, d_rate, oh_mac, d_avg))
    assert node_weight(lm(l_q * k, d_rate, oh_mac, d_avg)) > base
    assert node_weight(lm(l_q, d_rate * k, oh_mac, d_avg)) > base
    assert node_weight(lm(l_q, d_rate, oh_mac * k, d_avg)) < base
    assert node_weight(lm(l_q, d_rate, oh_mac, d_avg * k)) < base


def test_node_weight_doubling():
    base = node_weight(lm())
    assert node_weight(lm(l_q=2 * 1.58314e-9)) == pytest.approx(2 * base)
    assert node_weight(lm(oh_mac=4e-3)) == pytest.approx(base / 2)


# -- cost recovery -------------------------------------------------------------

def test_cost_index_examples():
    assert recover_cost_index(10.0, 4.0) == 6.0
    assert recover_cost_index(10.0, 0.0) == 10.0
    with pytest.raises(CostIndexError):
        recover_cost_index(4.0, 10.0)


@given(st.lists(st.floats(min_value=1e-3, max_value=1e3), min_size=1, max_size=9))
def test_telescoping(weights):
    prefixes, total = [], 0.0
    for w in weights:
        prefixes.append(total)
        total += w
    recovered = [recover_cost_index(total, p) for p in prefixes]
    for k in range(len(weights)):
        suffix = sum(weights[k:])
        assert recovered[k] == pytest.approx(suffix, rel=1e-9)
    assert recovered[-1] == pytest.approx(weights[-1], rel=1e-9)


def test_accumulator():
    acc = WeightAccumulator(5.0, 3.0)
    assert acc.forwarded_sum == 8.0
    assert acc.cost_index(13.0) == 8.0
    with pytest.raises(ValueError):
        WeightAccumulator(-1.0, 1.0)
    with pytest.raises(ValueError):
        WeightAccumulator(0.0, 0.0)


# -- per-node bank -------------------------------------------------------------

def bank(alpha_lq=1.0):
    nominal = NominalMetrics.for_scenario(1.58314e-9, 2e6, 686e-6, 2.048e-3)
    return NodeMetrics(686e-6, 4096, nominal, alpha_lq=alpha_lq, alpha_mac=0.3)


def test_link_quality_is_received_power():
    m = bank()
    assert m.update_link_quality(3, 1.58314e-9)
    assert m.measured(3).l_q == 1.58314e-9


def test_link_quality_rejects_non_positive_power():
    m = bank()
    assert not m.update_link_quality(3, 0.0)
    assert not m.update_link_quality(3, -1.0)
    assert m.measured(3).l_q is None


def test_link_quality_smoothing():
    m = bank(alpha_lq=0.5)
    m.update_link_quality(1, 2.0)
    m.update_link_quality(1, 4.0)
    assert m.measured(1).l_q == 3.0


def test_cold_node_contributes_nominal_weight():
    m = bank()
    assert m.weight(9) == pytest.approx(m.nominal.weight)
    assert m.measured(9).missing() == list(LinkMetrics.FIELDS)


def test_cold_fields_fall_back_field_by_field():
    m = bank()
    m.update_link_quality(1, 4e-9)
    m.record_access_time(1e-3)
    m.record_exchange(2, 4.096e-3, 8e-3, 1.0)
    got = m.link_metrics(1)
    assert got.l_q == 4e-9
    assert got.oh_mac == pytest.approx(686e-6 + 1e-3)
    # neighbor 1 has no exchanges of its own: node-wide channel figures stand in
    assert got.d_rate == pytest.approx(1e6)
    assert got.d_avg == pytest.approx(8e-3)


def test_contention_lowers_rate_below_nominal():
    m = bank()
    m.record_exchange(1, 2.048e-3 + 3e-3, 6e-3, 1.0)
    assert m.link_metrics(1).d_rate < 2e6


def test_negative_access_time_rejected():
    with pytest.raises(ValueError):
        bank().record_access_time(-1e-6)


@given(st.floats(min_value=0.01, max_value=1e4))
def test_weight_scales_with_link_quality(k):
    a, b = bank(), bank()
    a.update_link_quality(1, 2e-9)
    b.update_link_quality(1, 2e-9 * k)
    for m in (a, b):
        m.record_access_time(5e-4)
        m.record_exchange(1, 3e-3, 4e-3, 0.0)
    assert b.weight(1) == pytest.approx(k * a.weight(1), rel=1e-12)


def test_unseen_neighbor_uses_node_wide_contention():
    m = bank()
    m.record_access_time(2e-3)
    assert m.link_metrics(42).oh_mac == pytest.approx(686e-6 + 2e-3)
