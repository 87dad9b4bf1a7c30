"""Busy-poll utilization metrics."""

import pytest
from hypothesis import given, strategies as st

from lbsim.errors import UndefinedWindow
from lbsim.metrics import (
    HYBRID_BURST_SIZE,
    SOFTWARE_BURST_SIZE,
    UtilConfig,
    UtilCounters,
    compute_util,
    compute_util_plus,
    snapshot_and_reset,
)


def test_burst_constants():
    assert SOFTWARE_BURST_SIZE == 32
    assert HYBRID_BURST_SIZE == 16


def test_mode_defaults():
    slb = UtilConfig.for_mode("slb")
    assert (slb.burst_size, slb.clamp) == (32, False)
    hnlb = UtilConfig.for_mode("hnlb")
    assert (hnlb.burst_size, hnlb.clamp) == (16, True)
    with pytest.raises(ValueError):
        UtilConfig.for_mode("dpdk")
    with pytest.raises(ValueError):
        UtilConfig(burst_size=0)


def test_compute_util():
    counters = UtilCounters(ref_cycles=1000, ops_cycles=250)
    assert compute_util(counters) == 0.25


def test_compute_util_undefined_window():
    with pytest.raises(UndefinedWindow):
        compute_util(UtilCounters())


def test_util_plus_formula_unclamped():
    # util * (1 + fill/B) / 2 with B = 32
    counters = UtilCounters(ref_cycles=1000, ops_cycles=500,
                            n_packets=64, n_bursts=4)  # fill 16
    expected = 0.5 * (1 + 16 / 32) / 2
    assert compute_util_plus(counters, UtilConfig(32, clamp=False)) == \
        pytest.approx(expected, rel=1e-12)


def test_util_plus_full_bursts_leave_util_unchanged():
    counters = UtilCounters(ref_cycles=1000, ops_cycles=800,
                            n_packets=320, n_bursts=10)  # fill 32
    assert compute_util_plus(counters, UtilConfig(32, clamp=False)) == \
        pytest.approx(0.8, rel=1e-12)
    hybrid = UtilCounters(ref_cycles=1000, ops_cycles=800,
                          n_packets=160, n_bursts=10)  # fill 16
    assert compute_util_plus(hybrid, UtilConfig(16, clamp=True)) == \
        pytest.approx(0.8, rel=1e-12)


def test_util_plus_clamp():
    # fill beyond B would scale past 1x; the hybrid variant clamps it
    counters = UtilCounters(ref_cycles=1000, ops_cycles=500,
                            n_packets=320, n_bursts=10)  # fill 32 vs B 16
    clamped = compute_util_plus(counters, UtilConfig(16, clamp=True))
    assert clamped == pytest.approx(0.5, rel=1e-12)
    unclamped = compute_util_plus(counters, UtilConfig(16, clamp=False))
    assert unclamped == pytest.approx(0.5 * (1 + 2) / 2, rel=1e-12)


def test_util_plus_empty_window_is_zero():
    counters = UtilCounters(ref_cycles=1000)
    assert compute_util_plus(counters, UtilConfig(32, clamp=False)) == 0.0


def test_snapshot_and_reset():
    counters = UtilCounters(ref_cycles=10, ops_cycles=5, n_packets=3, n_bursts=2)
    taken = snapshot_and_reset(counters)
    assert (taken.ref_cycles, taken.ops_cycles, taken.n_packets, taken.n_bursts) \
        == (10, 5, 3, 2)
    assert (counters.ref_cycles, counters.ops_cycles,
            counters.n_packets, counters.n_bursts) == (0, 0, 0, 0)


@given(st.integers(1, 10**12), st.integers(0, 10**12),
       st.integers(1, 10**6), st.integers(0, 10**8),
       st.sampled_from([(32, False), (16, True)]))
def test_util_plus_matches_direct_formula(ref, ops, n_b, n_p, variant):
    burst, clamp = variant
    counters = UtilCounters(ref_cycles=ref, ops_cycles=ops,
                            n_packets=n_p, n_bursts=n_b)
    factor = (1 + (n_p / n_b) / burst) / 2
    if clamp:
        factor = min(1.0, factor)
    expected = (ops / ref) * factor
    got = compute_util_plus(counters, UtilConfig(burst, clamp))
    assert got == pytest.approx(expected, rel=1e-12, abs=0.0)
