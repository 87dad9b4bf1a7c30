"""Receiving loop, processing paths, and loop accounting."""

import pytest

from lbsim.core import Dip, FiveTuple, Packet, Protocol, Vip, VipTable, ip_to_int
from lbsim.costs import CostModel
from lbsim.errors import ConfigError, ConsistencyViolation, InvalidQueue, UnknownVip
from lbsim.nic import BufferBudget
from lbsim.pipeline import (
    LoopState,
    Mode,
    PipelineConfig,
    process_default_queue_packet,
    process_dip_queue_burst,
    process_first_packet,
    run_receiving_loop,
)
from lbsim.traffic import WorkloadSpec, generate

VIP = Vip.parse("42.3.4.5:443")


def vip_table(n_dips: int = 1) -> VipTable:
    table = VipTable()
    base = ip_to_int("10.0.0.1")
    table.add_vip(VIP, [Dip(base + k, 335) for k in range(n_dips)])
    return table


def config(mode="slb", n_dips=1, n_queues=None, **kwargs) -> PipelineConfig:
    if n_queues is None:
        n_queues = max(1, n_dips)
    kwargs.setdefault("cost_model", CostModel())  # raw constants for exact oracles
    return PipelineConfig(mode=mode, vip_table=vip_table(n_dips),
                          n_queues=n_queues, **kwargs)


def packet(k: int = 0, arrival_ns: int = 0, seq: int = 0) -> Packet:
    flow = FiveTuple(Protocol.TCP, ip_to_int("10.1.0.0") + k, 1024 + k,
                     VIP.ip, VIP.port)
    return Packet(flow, 64, arrival_ns, seq)


def test_config_validation():
    with pytest.raises(ConfigError):
        PipelineConfig(mode="slb", vip_table=VipTable())  # no VIPs
    with pytest.raises(ConfigError):
        config(cost_model=CostModel(c_poll=0))
    with pytest.raises(ConfigError):
        config(mode="hnlb", n_dips=3, n_queues=2)  # more DIPs than queues
    with pytest.raises(ConfigError):
        config(mode="hnlb", fd_capacity=1000)
    with pytest.raises(ConfigError):
        config(burst_size=0)
    with pytest.raises(ValueError):
        config(mode="xlb")


def test_config_mode_coercion_and_bursts():
    slb = config(mode="slb")
    assert slb.mode is Mode.SLB
    assert slb.effective_burst == 32
    assert slb.polled_queues == 1
    hnlb = config(mode="hnlb", n_dips=4, n_queues=10)
    assert hnlb.mode is Mode.HNLB
    assert hnlb.effective_burst == 16
    assert hnlb.polled_queues == 11
    assert config(burst_size=8).effective_burst == 8


def test_state_buffer_provisioning():
    # software variant: one queue owning the whole buffer
    slb = LoopState(config(mode="slb"))
    assert slb.queues.capacities == [4096]
    assert slb.hw_table is None
    # hybrid variant: buffer shared with a full match table's rules
    hnlb = LoopState(config(mode="hnlb", n_dips=10, n_queues=10))
    assert len(hnlb.queues.capacities) == 11
    assert sum(hnlb.queues.capacities) == 4096 - 2000
    assert hnlb.hw_table is not None and hnlb.hw_table.capacity == 8000


def test_first_packet_slb_charges_and_installs():
    state = LoopState(config(mode="slb"))
    pkt = packet()
    cycles = process_first_packet(state, pkt)
    # hash 30 + lookup 20 + dip_select 15 + sw_install 40 + rewrite 25 + forward 40
    assert cycles == 170
    assert state.clock.cycles == 170
    assert len(state.conn_table) == 1
    assert pkt.flow.dst_port == 335  # rewritten to the backend


def test_first_packet_hnlb_installs_hw_rule_with_delay():
    state = LoopState(config(mode="hnlb"))
    pkt = packet()
    cycles = process_first_packet(state, pkt)
    assert cycles == 170 + 500  # fd_install on top of the software path
    assert len(state.hw_table) == 1
    (queue_id, active_from), = state.hw_table.rules.values()
    assert queue_id == 1
    # rule issued at cycle 605 of 2.2 GHz -> 275 ns, plus 95 us install
    # latency at zero occupancy
    assert active_from == 275 + 95_000


def test_first_packet_unknown_vip():
    state = LoopState(config(mode="slb"))
    stray = Packet(FiveTuple(Protocol.TCP, 1, 1, ip_to_int("9.9.9.9"), 80), 64, 0)
    with pytest.raises(UnknownVip):
        process_first_packet(state, stray)


def test_default_queue_packet_dispatch():
    state = LoopState(config(mode="slb"))
    first = process_default_queue_packet(state, packet(seq=0))
    assert first == 170
    follow = process_default_queue_packet(state, packet(seq=1))
    assert follow == 115  # hash 30 + lookup 20 + rewrite 25 + forward 40
    assert state.clock.cycles == 285
    assert len(state.conn_table) == 1


def test_round_robin_across_connections():
    state = LoopState(config(mode="slb", n_dips=3))
    dips = []
    for k in range(6):
        pkt = packet(k)
        process_default_queue_packet(state, pkt)
        dips.append(pkt.flow.dst_ip - ip_to_int("10.0.0.1"))
    assert dips == [0, 1, 2, 0, 1, 2]


def test_dip_queue_burst():
    state = LoopState(config(mode="hnlb", n_dips=2, n_queues=2))
    p0, p1 = packet(0, seq=0), packet(1, seq=1)
    process_first_packet(state, p0)
    process_first_packet(state, p1)
    before = state.clock.cycles
    later0, later1 = packet(0, seq=2), packet(1, seq=3)
    cycles = process_dip_queue_burst(state, 1, [later0])
    assert cycles == 65  # rewrite 25 + forward 40, no hash, no lookup
    assert later0.flow.dst_ip == ip_to_int("10.0.0.1")
    process_dip_queue_burst(state, 2, [later1])
    assert later1.flow.dst_ip == ip_to_int("10.0.0.2")
    assert state.clock.cycles == before + 130


def test_dip_queue_burst_rejects_bad_queue():
    state = LoopState(config(mode="hnlb", n_dips=1, n_queues=3))
    process_first_packet(state, packet(0))
    with pytest.raises(InvalidQueue):
        process_dip_queue_burst(state, 0, [packet(0)])
    with pytest.raises(InvalidQueue):
        process_dip_queue_burst(state, 2, [packet(0)])  # queue with no DIP


def test_dip_queue_burst_requires_connection_state():
    state = LoopState(config(mode="hnlb"))
    with pytest.raises(ConsistencyViolation):
        process_dip_queue_burst(state, 1, [packet(7)])


def test_loop_single_packet_accounting():
    pc = config(mode="slb")
    stats = run_receiving_loop(pc, [packet()])
    assert stats.generated == 1
    assert stats.forwarded == 1
    assert stats.dropped == 0
    assert stats.residual == 0
    # one poll (15) + first-packet path (170)
    assert stats.counters.ops_cycles == 185
    assert stats.counters.ref_cycles == 185
    assert stats.counters.n_bursts == 1
    assert stats.counters.n_packets == 1
    assert stats.util == 1.0


def test_loop_idle_gap_fast_forward_is_exact():
    pc = config(mode="slb")
    pkts = [packet(0, arrival_ns=0, seq=0), packet(0, arrival_ns=1_000_000, seq=1)]
    stats = run_receiving_loop(pc, pkts)
    # arrival at 1 ms = cycle 2.2e6; idle polls bring the clock to the
    # first poll boundary past it: 185 + 146655 * 15 = 2200010; the
    # second packet is an established-connection hit (poll 15 + 115)
    assert stats.end_cycles == 2_200_010 + 15 + 115
    assert stats.counters.ref_cycles == stats.end_cycles - stats.start_cycles
    assert stats.counters.ops_cycles == 185 + 130
    assert stats.counters.n_bursts == 2
    assert stats.forwarded == 2
    assert stats.util == pytest.approx(315 / 2_200_140)


def test_loop_idle_run_until():
    pc = config(mode="slb")
    stats = run_receiving_loop(pc, [], run_until_cycles=10_000)
    assert stats.generated == 0
    assert stats.counters.ref_cycles >= 10_000
    assert stats.counters.ops_cycles == 0
    assert stats.counters.n_bursts == 0
    assert stats.util == 0.0
    assert stats.util_plus == 0.0


def test_loop_tail_drop_overflow():
    pc = config(mode="slb", buffer=BufferBudget(total_slots=8))
    pkts = [packet(0, arrival_ns=0, seq=k) for k in range(20)]
    stats = run_receiving_loop(pc, pkts)
    assert stats.generated == 20
    assert stats.forwarded == 8
    assert stats.dropped == 12
    assert stats.drops_per_queue == [12]
    assert stats.forwarded + stats.dropped == stats.generated


def test_hnlb_rule_activation_steers_later_packets():
    pc = config(mode="hnlb")
    # rule goes active at 95282 ns (install completes at cycle 620 -> 282 ns,
    # plus 95 us latency); the 50 us packet still takes the default queue,
    # the 96 us packet rides the backend queue
    pkts = [packet(0, arrival_ns=0, seq=0),
            packet(0, arrival_ns=50_000, seq=1),
            packet(0, arrival_ns=96_000, seq=2)]
    stats = run_receiving_loop(pc, pkts, record_paths=True)
    assert stats.paths == [(0, 0), (1, 0), (2, 1)]
    assert stats.forwarded == 3
    assert stats.hw_rules == 1


def test_hnlb_established_flow_skips_software_path():
    pc = config(mode="hnlb")
    spaced = [packet(0, arrival_ns=0, seq=0)] + [
        packet(0, arrival_ns=200_000 + 400 * k, seq=1 + k) for k in range(32)]
    stats = run_receiving_loop(pc, spaced, record_paths=True)
    assert stats.paths[0] == (0, 0)
    assert all(queue == 1 for _, queue in stats.paths[1:])
    assert stats.forwarded == 33


def test_state_persists_across_runs():
    pc = config(mode="hnlb")
    state = LoopState(pc)
    first = run_receiving_loop(pc, [packet(0, seq=0)], state)
    assert first.new_connections == 1
    second = run_receiving_loop(
        pc, [packet(0, arrival_ns=200_000, seq=1)], state)
    # same connection: no new install, fresh metrics window
    assert second.new_connections == 0
    assert second.start_cycles == first.end_cycles
    assert second.counters.ref_cycles == second.end_cycles - second.start_cycles
    assert second.paths is None


def test_loop_is_deterministic():
    spec = WorkloadSpec(nb_connections=32, rate_pps=4_000_000, n_packets=5000,
                        seed=11)
    results = []
    for _ in range(2):
        pc = PipelineConfig(mode="hnlb", vip_table=vip_table(8), n_queues=8)
        stats = run_receiving_loop(pc, generate(spec))
        results.append((stats.end_cycles, stats.forwarded, stats.dropped,
                        stats.counters.ops_cycles, stats.counters.n_bursts))
    assert results[0] == results[1]


def test_modes_assign_identical_backends():
    spec = WorkloadSpec(nb_connections=40, rate_pps=2_000_000, n_packets=4000,
                        seed=3)
    tables = {}
    for mode in ("slb", "hnlb"):
        pc = PipelineConfig(mode=mode, vip_table=vip_table(10), n_queues=10,
                            cost_model=CostModel())
        state = LoopState(pc)
        run_receiving_loop(pc, generate(spec), state)
        tables[mode] = state.conn_table.entries()
    assert tables["slb"] == tables["hnlb"]
    assert len(tables["slb"]) == 40
