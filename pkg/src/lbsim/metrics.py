"""Busy-poll CPU utilization metrics.

A busy-polling core is nominally 100% busy, so wall-clock load says
nothing.  The receiving loop instead splits elapsed cycles into polling
overhead and packet work: util is the fraction of the window spent on
non-empty polls, and util+ additionally corrects for how full the polled
bursts were, since average burst fill tracks how close the core is to
its saturation point.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import UndefinedWindow

SOFTWARE_BURST_SIZE = 32
HYBRID_BURST_SIZE = 16


@dataclass
class UtilCounters:
    """Raw counters accumulated by the receiving loop over one window.

    ref_cycles counts every elapsed cycle (busy and idle); ops_cycles
    counts the cycles of polls that returned packets, poll cost included.
    n_packets and n_bursts cover those non-empty polls only, so their
    ratio is the average burst fill.
    """

    ref_cycles: int = 0
    ops_cycles: int = 0
    n_packets: int = 0
    n_bursts: int = 0

    def snapshot_and_reset(self) -> UtilCounters:
        """Return the current window and start a fresh one."""
        taken = UtilCounters(self.ref_cycles, self.ops_cycles,
                             self.n_packets, self.n_bursts)
        self.ref_cycles = 0
        self.ops_cycles = 0
        self.n_packets = 0
        self.n_bursts = 0
        return taken


@dataclass(frozen=True)
class UtilConfig:
    """Burst-fill correction parameters.

    burst_size is the poll burst limit the correction normalizes
    against.  The software variant polls a single queue with bursts of
    32 and its correction may exceed 1 transiently; the hybrid variant
    polls many queues with bursts of 16 and clamps the correction at 1.
    """

    burst_size: int = SOFTWARE_BURST_SIZE
    clamp: bool = False

    def __post_init__(self):
        if self.burst_size < 1:
            raise ValueError(f"burst size {self.burst_size} < 1")

    @classmethod
    def for_mode(cls, mode: str) -> UtilConfig:
        if mode == "slb":
            return cls(burst_size=SOFTWARE_BURST_SIZE, clamp=False)
        if mode == "hnlb":
            return cls(burst_size=HYBRID_BURST_SIZE, clamp=True)
        raise ValueError(f"unknown mode {mode!r}")


def compute_util(counters: UtilCounters) -> float:
    """Fraction of the window spent processing packets."""
    if counters.ref_cycles <= 0:
        raise UndefinedWindow("no reference cycles accumulated in this window")
    return counters.ops_cycles / counters.ref_cycles


def compute_util_plus(counters: UtilCounters, config: UtilConfig) -> float:
    """Utilization corrected by average burst fill.

    The correction factor is (1 + fill/burst_size) / 2 where fill is
    packets per non-empty poll: near-empty bursts halve the raw value,
    full bursts leave it (clamped variant) or scale it up to at most 1x
    extra (unclamped variant).  A window with no non-empty polls carried
    no load and reports 0.
    """
    if counters.n_bursts == 0:
        return 0.0
    util = compute_util(counters)
    fill = counters.n_packets / counters.n_bursts
    factor = (1.0 + fill / config.burst_size) / 2.0
    if config.clamp:
        factor = min(1.0, factor)
    return util * factor


def snapshot_and_reset(counters: UtilCounters) -> UtilCounters:
    return counters.snapshot_and_reset()
