"""The receiving loop: a cycle-accurate model of the forwarding core.

Both variants run the same busy-poll loop on one core.  The software
variant (SLB) polls a single receive queue and runs the full software
path (hash, connection-table lookup, rewrite, forward) on every packet.
The hybrid variant (HNLB) additionally installs an exact-match NIC rule
per connection, so once a rule is active the connection's packets arrive
on the queue paired with its backend and skip the hash and lookup
entirely; only connection setup still travels the default queue.

Packets are injected into the NIC queues the moment the simulated clock
passes their arrival time, then consumed by polls.  Stretches where
every queue is empty and the next arrival is in the future are fast
forwarded in one step by charging the exact number of empty polls that
would have run, which is behavior-preserving because an empty poll has
no effect besides its cycle cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .core import ConnectionTable, Dip, FiveTuple, Packet, Vip, VipTable, rewrite_packet
from .costs import DEFAULT_FREQUENCY_HZ, CostModel, CycleClock
from .errors import ConfigError, ConsistencyViolation, InvalidQueue, UnknownVip
from .metrics import (
    HYBRID_BURST_SIZE,
    SOFTWARE_BURST_SIZE,
    UtilConfig,
    UtilCounters,
    compute_util,
    compute_util_plus,
)
from .nic import (
    MAX_MATCH_TABLE_CAPACITY,
    MIN_MATCH_TABLE_CAPACITY,
    BufferBudget,
    HardwareMatchTable,
    NicQueues,
    nic_latency_us,
)


class Mode(Enum):
    SLB = "slb"
    HNLB = "hnlb"


@dataclass
class PipelineConfig:
    """Static configuration of one simulated balancer instance.

    n_queues counts the backend queues of the hybrid variant; the
    default queue exists on top of them.  The software variant always
    uses exactly one queue regardless of n_queues.  Buffer space is
    provisioned up front for a full match table (fd_capacity rules), the
    way a driver reserves rule memory at bring-up.
    """

    mode: Mode
    vip_table: VipTable
    n_queues: int = 10
    fd_capacity: int = 8000
    cost_model: CostModel = field(default_factory=CostModel.calibrated)
    frequency_hz: int = DEFAULT_FREQUENCY_HZ
    buffer: BufferBudget = field(default_factory=BufferBudget)
    burst_size: int | None = None

    def __post_init__(self):
        if isinstance(self.mode, str):
            self.mode = Mode(self.mode.lower())
        if not self.vip_table.vips():
            raise ConfigError("no VIPs configured")
        if self.cost_model.c_poll < 1:
            raise ConfigError("poll cost below 1 cycle would let the loop "
                              "spin without advancing time")
        if self.burst_size is not None and self.burst_size < 1:
            raise ConfigError(f"burst size {self.burst_size} < 1")
        if self.mode is Mode.HNLB:
            if self.n_queues < 1:
                raise ConfigError(
                    f"hybrid variant needs n_queues >= 1, got {self.n_queues}")
            n_dips = len(self.vip_table.all_dips())
            if n_dips > self.n_queues:
                raise ConfigError(
                    f"{n_dips} DIPs need at least as many backend queues, "
                    f"got {self.n_queues}")
            if not MIN_MATCH_TABLE_CAPACITY <= self.fd_capacity <= MAX_MATCH_TABLE_CAPACITY:
                raise ConfigError(
                    f"match table capacity {self.fd_capacity} outside "
                    f"[{MIN_MATCH_TABLE_CAPACITY}, {MAX_MATCH_TABLE_CAPACITY}]")
        elif self.n_queues < 0:
            raise ConfigError(f"n_queues {self.n_queues} < 0")

    @property
    def effective_burst(self) -> int:
        if self.burst_size is not None:
            return self.burst_size
        return HYBRID_BURST_SIZE if self.mode is Mode.HNLB else SOFTWARE_BURST_SIZE

    @property
    def polled_queues(self) -> int:
        return self.n_queues + 1 if self.mode is Mode.HNLB else 1


class LoopState:
    """Everything that survives across calls of the receiving loop:
    clock, tables, queues, and the poll cursor.  One state object can
    run several packet streams back to back (e.g. a warmup stream and a
    measured stream)."""

    __slots__ = ("config", "mode", "model", "clock", "vip_table", "conn_table",
                 "hw_table", "queues", "buffered", "cursor", "rewrite_cache",
                 "dip_queue", "queue_dip", "sw_hit_cost")

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.mode = config.mode
        self.model = config.cost_model
        self.clock = CycleClock(config.frequency_hz)
        self.vip_table = config.vip_table
        self.conn_table = ConnectionTable()
        dips = config.vip_table.all_dips()
        if config.mode is Mode.HNLB:
            self.hw_table = HardwareMatchTable(config.fd_capacity)
            capacities = config.buffer.queue_capacities(
                config.n_queues, config.fd_capacity)
            self.dip_queue = {dip: i + 1 for i, dip in enumerate(dips)}
            self.queue_dip: list[Dip | None] = [None] + [
                dips[i] if i < len(dips) else None
                for i in range(config.n_queues)]
        else:
            self.hw_table = None
            capacities = config.buffer.queue_capacities(0, 0)
            self.dip_queue = {}
            self.queue_dip = [None]
        self.queues = NicQueues(capacities)
        self.buffered = 0
        self.cursor = 0
        self.rewrite_cache: dict[FiveTuple, FiveTuple] = {}
        self.sw_hit_cost = self._hit_cost()

    def _hit_cost(self) -> int:
        model = self.model
        return (model.c_hash + model.cost_of("lookup", len(self.conn_table))
                + model.c_rewrite + model.c_forward)

    @classmethod
    def create(cls, config: PipelineConfig) -> LoopState:
        return cls(config)


def process_first_packet(state: LoopState, packet: Packet) -> int:
    """Full software path for the first packet of a connection: hash,
    missing lookup, backend selection, connection-table install, rule
    install on the hybrid variant, then rewrite and forward.  Returns
    the cycles charged.

    The NIC rule only becomes active once its install latency has
    passed, so packets of this flow that arrive before that instant
    still land on the default queue.
    """
    flow = packet.flow
    model = state.model
    conn = state.conn_table
    n_before = len(conn)

    vip = Vip(flow.dst_ip, flow.dst_port)
    if vip not in state.vip_table:
        raise UnknownVip(f"packet for unconfigured service {vip}")
    dip = state.vip_table.select_dip(vip)
    conn.install(flow, dip)

    cycles = (model.c_hash + model.cost_of("lookup", n_before)
              + model.c_dip_select + model.c_sw_install)
    clock = state.clock
    hw = state.hw_table
    if hw is not None:
        cycles += model.c_fd_install
        install_done_ns = clock.cycles_to_ns(clock.cycles + cycles)
        latency_ns = round(nic_latency_us(len(hw)) * 1000.0)
        hw.install(flow, state.dip_queue[dip], install_done_ns + latency_ns)

    rewrite_packet(packet, dip)
    state.rewrite_cache[flow] = packet.flow
    cycles += model.c_rewrite + model.c_forward
    clock.advance(cycles)
    state.sw_hit_cost = state._hit_cost()
    return cycles


def process_default_queue_packet(state: LoopState, packet: Packet) -> int:
    """Software path for a default-queue packet: first packets take the
    full setup path, established connections pay hash, lookup, rewrite
    and forward.  Returns the cycles charged."""
    flow = packet.flow
    if flow not in state.conn_table:
        return process_first_packet(state, packet)
    packet.flow = state.rewrite_cache[flow]
    cycles = state.sw_hit_cost
    state.clock.advance(cycles)
    return cycles


def process_dip_queue_burst(state: LoopState, queue_id: int,
                            packets: list[Packet]) -> int:
    """Fast path for pre-classified packets: the queue identifies the
    backend, so each packet pays only rewrite and forward.  Returns the
    cycles charged."""
    if not 1 <= queue_id < len(state.queue_dip) or state.queue_dip[queue_id] is None:
        raise InvalidQueue(f"queue {queue_id} is not paired with a backend")
    cache = state.rewrite_cache
    for pkt in packets:
        rewritten = cache.get(pkt.flow)
        if rewritten is None:
            raise ConsistencyViolation(
                f"pre-classified packet {pkt.seq} has no connection state")
        pkt.flow = rewritten
    model = state.model
    cycles = (model.c_rewrite + model.c_forward) * len(packets)
    state.clock.advance(cycles)
    return cycles


@dataclass
class RunStats:
    """Outcome of one receiving-loop run over one packet stream."""

    mode: str
    generated: int
    forwarded: int
    dropped: int
    drops_per_queue: list[int]
    residual: int
    new_connections: int
    hw_rules: int
    hw_rejected: int
    counters: UtilCounters
    util: float
    util_plus: float
    start_cycles: int
    end_cycles: int
    frequency_hz: int
    paths: list[tuple[int, int]] | None = None

    @property
    def duration_s(self) -> float:
        return (self.end_cycles - self.start_cycles) / self.frequency_hz

    @property
    def achieved_pps(self) -> float:
        duration = self.duration_s
        return self.forwarded / duration if duration > 0 else 0.0

    @property
    def loss_fraction(self) -> float:
        return self.dropped / self.generated if self.generated else 0.0


def run_receiving_loop(config: PipelineConfig, packets, state: LoopState | None = None,
                       run_until_cycles: int | None = None,
                       record_paths: bool = False) -> RunStats:
    """Run the busy-poll loop over a packet stream until the stream is
    exhausted and every queue has drained.

    Each iteration polls one queue (round-robin over the polled set) for
    up to one burst.  Reference cycles count all elapsed time of the
    run; operation cycles count polls that returned packets, poll cost
    included, matching how the loop samples its own timestamp counter.

    state carries tables and clock across calls; passing the state of a
    previous run continues from where it stopped with a fresh metrics
    window.  run_until_cycles keeps the loop idling (accumulating
    reference cycles) at least until that clock value even when no
    packets remain.
    """
    if state is None:
        state = LoopState(config)
    clock = state.clock
    queues = state.queues
    model = state.model
    hnlb = state.mode is Mode.HNLB
    burst = config.effective_burst
    polled = config.polled_queues
    c_poll = model.c_poll

    deques = queues.queues
    caps = queues.capacities
    drops = queues.drops
    enq = queues.enqueued
    rules = state.hw_table.rules if hnlb else None
    rules_get = rules.get if hnlb else None
    ns2cyc = clock.ns_to_cycles

    drops_before = list(drops)
    conn_before = len(state.conn_table)
    start = clock.cycles

    it = iter(packets)
    pkt = next(it, None)
    pkt_cyc = ns2cyc(pkt.arrival_ns) if pkt is not None else 0

    generated = 0
    forwarded = 0
    ops = 0
    n_packets = 0
    n_bursts = 0
    buffered = state.buffered
    cursor = state.cursor
    paths: list[tuple[int, int]] | None = [] if record_paths else None

    while True:
        now = clock.cycles

        while pkt is not None and pkt_cyc <= now:
            if hnlb:
                entry = rules_get(pkt.flow)
                if entry is not None and pkt.arrival_ns > entry[1]:
                    q = entry[0]
                else:
                    q = 0
            else:
                q = 0
            dq = deques[q]
            if len(dq) < caps[q]:
                dq.append(pkt)
                enq[q] += 1
                buffered += 1
            else:
                drops[q] += 1
            generated += 1
            pkt = next(it, None)
            if pkt is not None:
                pkt_cyc = ns2cyc(pkt.arrival_ns)

        if buffered == 0:
            if pkt is None:
                if run_until_cycles is not None and clock.cycles < run_until_cycles:
                    gap = run_until_cycles - clock.cycles
                    k = -(-gap // c_poll)
                    clock.cycles += k * c_poll
                    cursor = (cursor + k) % polled
                break
            if pkt_cyc > now:
                # every poll until the next arrival would come up empty;
                # charge them all in one step
                k = -(-(pkt_cyc - now) // c_poll)
                clock.cycles = now + k * c_poll
                cursor = (cursor + k) % polled
                continue

        t0 = clock.cycles
        clock.cycles = t0 + c_poll
        q = cursor
        cursor += 1
        if cursor == polled:
            cursor = 0
        dq = deques[q]
        if dq:
            qlen = len(dq)
            take = burst if qlen >= burst else qlen
            pop = dq.popleft
            batch = [pop() for _ in range(take)]
            buffered -= take
            if q == 0:
                for p in batch:
                    process_default_queue_packet(state, p)
            else:
                process_dip_queue_burst(state, q, batch)
            ops += clock.cycles - t0
            n_packets += take
            n_bursts += 1
            forwarded += take
            if paths is not None:
                for p in batch:
                    paths.append((p.seq, q))

    state.buffered = buffered
    state.cursor = cursor

    counters = UtilCounters(ref_cycles=clock.cycles - start, ops_cycles=ops,
                            n_packets=n_packets, n_bursts=n_bursts)
    util_cfg = UtilConfig.for_mode(state.mode.value)
    util = compute_util(counters) if counters.ref_cycles > 0 else 0.0
    util_plus = compute_util_plus(counters, util_cfg) if counters.ref_cycles > 0 else 0.0

    hw = state.hw_table
    return RunStats(
        mode=state.mode.value,
        generated=generated,
        forwarded=forwarded,
        dropped=sum(drops) - sum(drops_before),
        drops_per_queue=[after - before for after, before in zip(drops, drops_before)],
        residual=buffered,
        new_connections=len(state.conn_table) - conn_before,
        hw_rules=len(hw) if hw is not None else 0,
        hw_rejected=hw.rejected if hw is not None else 0,
        counters=counters,
        util=util,
        util_plus=util_plus,
        start_cycles=start,
        end_cycles=clock.cycles,
        frequency_hz=clock.frequency_hz,
        paths=paths,
    )
