"""Emulated NIC: exact-match dispatch table, receive queues, buffer budget.

The NIC owns a bank of receive queues and, in the hybrid variant, an
exact-match table of five-tuple rules that steers packets of established
connections straight to the queue paired with their backend.  Rule
memory and packet-buffer memory come out of one shared budget, so every
installed rule shrinks the room available for queued packets.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum

from .core import FiveTuple, Packet
from .errors import ConfigError, InvalidQueue

MIN_MATCH_TABLE_CAPACITY = 2000
MAX_MATCH_TABLE_CAPACITY = 8000

# Rule install latency rises with table occupancy: 95 us near empty,
# 105 us with 8000 rules resident.
_BASE_INSTALL_LATENCY_US = 95.0
_FULL_SCALE_LATENCY_GAIN_US = 10.0
_FULL_SCALE_RULES = 8000


class InstallResult(Enum):
    INSTALLED = "installed"
    TABLE_FULL = "table_full"


def nic_latency_us(n_rules: int) -> float:
    """Install latency of one exact-match rule, given current occupancy."""
    if n_rules < 0:
        raise ValueError(f"negative rule count {n_rules}")
    return _BASE_INSTALL_LATENCY_US + _FULL_SCALE_LATENCY_GAIN_US * (
        n_rules / _FULL_SCALE_RULES)


class HardwareMatchTable:
    """Exact-match five-tuple rules dispatching to receive queues.

    A rule only takes effect once the NIC has finished installing it, so
    each entry carries the time it becomes active; packets that arrive at
    or before that instant still fall through to the default queue.
    """

    def __init__(self, capacity: int = MAX_MATCH_TABLE_CAPACITY):
        if not MIN_MATCH_TABLE_CAPACITY <= capacity <= MAX_MATCH_TABLE_CAPACITY:
            raise ConfigError(
                f"match table capacity {capacity} outside "
                f"[{MIN_MATCH_TABLE_CAPACITY}, {MAX_MATCH_TABLE_CAPACITY}]")
        self.capacity = capacity
        # flow -> (queue_id, active_from_ns)
        self.rules: dict[FiveTuple, tuple[int, int]] = {}
        self.installs = 0
        self.rejected = 0

    def __len__(self) -> int:
        return len(self.rules)

    @property
    def occupancy(self) -> int:
        return len(self.rules)

    def install(self, flow: FiveTuple, queue_id: int,
                active_from_ns: int = -1) -> InstallResult:
        """Add a rule, or report TABLE_FULL when no entry is free.

        active_from_ns of -1 means immediately active.  Re-installing an
        existing flow overwrites its entry without consuming a new slot.
        """
        if queue_id < 0:
            raise InvalidQueue(f"queue {queue_id} is negative")
        if flow not in self.rules and len(self.rules) >= self.capacity:
            self.rejected += 1
            return InstallResult.TABLE_FULL
        self.rules[flow] = (queue_id, active_from_ns)
        self.installs += 1
        return InstallResult.INSTALLED

    def remove(self, flow: FiveTuple) -> bool:
        return self.rules.pop(flow, None) is not None

    def classify(self, flow: FiveTuple, arrival_ns: int) -> int:
        """Queue the NIC steers this packet to: the rule's queue when an
        active rule matches, queue 0 otherwise."""
        entry = self.rules.get(flow)
        if entry is not None and arrival_ns > entry[1]:
            return entry[0]
        return 0


def fd_install_rule(table: HardwareMatchTable, flow: FiveTuple, queue_id: int,
                    active_from_ns: int = -1) -> InstallResult:
    return table.install(flow, queue_id, active_from_ns)


@dataclass(frozen=True)
class BufferBudget:
    """Shared NIC memory split between match rules and packet buffers.

    Rules are smaller than buffer slots; each one consumes a quarter
    slot, rounded up in aggregate.
    """

    total_slots: int = 4096
    slots_per_rule: float = 0.25

    def slots_for_rules(self, n_rules: int) -> int:
        if n_rules < 0:
            raise ValueError(f"negative rule count {n_rules}")
        return math.ceil(self.slots_per_rule * n_rules)

    def available_slots(self, n_rules: int) -> int:
        return self.total_slots - self.slots_for_rules(n_rules)

    def queue_capacities(self, n_queues: int, n_rules: int) -> list[int]:
        """Split the remaining buffer evenly over the default queue plus
        n_queues backend queues; the remainder goes to the default queue,
        which absorbs every new connection."""
        if n_queues < 0:
            raise ValueError(f"negative queue count {n_queues}")
        total_queues = n_queues + 1
        available = self.available_slots(n_rules)
        if available < total_queues:
            raise ConfigError(
                f"{available} buffer slots cannot give all {total_queues} "
                f"queues at least one slot")
        share, remainder = divmod(available, total_queues)
        capacities = [share] * total_queues
        capacities[0] += remainder
        return capacities


class NicQueues:
    """Receive queues with fixed capacities and tail-drop on overflow.

    Queue 0 is the default queue (unmatched traffic); queues 1..n are
    paired one-to-one with backends in the hybrid variant.
    """

    def __init__(self, capacities: list[int]):
        if not capacities:
            raise ConfigError("at least one queue is required")
        for queue_id, cap in enumerate(capacities):
            if cap < 1:
                raise ConfigError(f"queue {queue_id} capacity {cap} < 1")
        self.capacities = list(capacities)
        self.queues: list[deque[Packet]] = [deque() for _ in capacities]
        self.drops = [0] * len(capacities)
        self.enqueued = [0] * len(capacities)

    def __len__(self) -> int:
        return len(self.queues)

    def depth(self, queue_id: int) -> int:
        self._check(queue_id)
        return len(self.queues[queue_id])

    def total_buffered(self) -> int:
        return sum(len(q) for q in self.queues)

    def total_drops(self) -> int:
        return sum(self.drops)

    def _check(self, queue_id: int) -> None:
        if not 0 <= queue_id < len(self.queues):
            raise InvalidQueue(
                f"queue {queue_id} outside [0, {len(self.queues) - 1}]")

    def enqueue(self, queue_id: int, packet: Packet) -> bool:
        """Append to the queue; a full queue tail-drops and returns False."""
        self._check(queue_id)
        queue = self.queues[queue_id]
        if len(queue) >= self.capacities[queue_id]:
            self.drops[queue_id] += 1
            return False
        queue.append(packet)
        self.enqueued[queue_id] += 1
        return True

    def poll_queue(self, queue_id: int, burst: int) -> list[Packet]:
        """Dequeue up to burst packets in arrival order."""
        self._check(queue_id)
        if burst < 1:
            raise ValueError(f"burst {burst} < 1")
        queue = self.queues[queue_id]
        if not queue:
            return []
        take = min(burst, len(queue))
        pop = queue.popleft
        return [pop() for _ in range(take)]
