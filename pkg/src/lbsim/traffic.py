"""Deterministic traffic generation and trace file I/O.

Workloads are synthetic: a fixed population of TCP connections to one
VIP, sending fixed-size packets at a constant aggregate rate.  Arrival
times and connection choices are fully determined by the workload spec
(rate, counts, seed), so two runs of the same spec produce identical
packet streams.  Streams can also be saved to and replayed from a plain-text
trace format.
"""

from __future__ import annotations

from collections.abc import Iterable, Iterator
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    MAX_PACKET_SIZE,
    MIN_PACKET_SIZE,
    FiveTuple,
    Packet,
    Protocol,
    Vip,
    int_to_ip,
    ip_to_int,
)
from .errors import InvalidSpec, ParseError, TraceOrderError

DEFAULT_VIP = Vip(ip_to_int("42.3.4.5"), 443)

TRACE_HEADER = "arrival_ns,proto,src_ip,src_port,dst_ip,dst_port,size"

_NS_PER_S = 1_000_000_000
_RNG_CHUNK = 65536

SCHEDULERS = ("random", "round_robin")

_PROTO_NAMES = {"tcp": Protocol.TCP, "udp": Protocol.UDP,
                str(int(Protocol.TCP)): Protocol.TCP,
                str(int(Protocol.UDP)): Protocol.UDP}


@dataclass(frozen=True)
class WorkloadSpec:
    """Recipe for one deterministic packet stream.

    scheduler picks how packets are spread over the connection
    population: "random" draws each packet's connection from a seeded
    uniform generator, "round_robin" cycles through connections in
    order.
    """

    nb_connections: int
    rate_pps: int
    n_packets: int
    pkt_size: int = MIN_PACKET_SIZE
    seed: int = 0
    vip: Vip = DEFAULT_VIP
    scheduler: str = "random"

    def __post_init__(self):
        if self.nb_connections < 1:
            raise InvalidSpec(f"nb_connections {self.nb_connections} < 1")
        if not isinstance(self.rate_pps, int):
            raise InvalidSpec(f"rate_pps must be an integer, got {self.rate_pps!r}")
        if self.rate_pps < 1:
            raise InvalidSpec(f"rate_pps {self.rate_pps} < 1")
        if self.n_packets < 0:
            raise InvalidSpec(f"n_packets {self.n_packets} < 0")
        if not MIN_PACKET_SIZE <= self.pkt_size <= MAX_PACKET_SIZE:
            raise InvalidSpec(
                f"pkt_size {self.pkt_size} outside "
                f"[{MIN_PACKET_SIZE}, {MAX_PACKET_SIZE}]")
        if self.scheduler not in SCHEDULERS:
            raise InvalidSpec(f"scheduler {self.scheduler!r} not in {SCHEDULERS}")


def connection_flows(nb_connections: int, vip: Vip) -> list[FiveTuple]:
    """The fixed connection population: distinct client addresses in
    10.1.0.0/16, source ports from 1024 up, all TCP to the VIP.

    One FiveTuple object is built per connection and reused for every
    packet of that connection, so its cached hash pays off.
    """
    if nb_connections > 65536:
        raise InvalidSpec(f"connection population {nb_connections} > 65536")
    base = ip_to_int("10.1.0.0")
    return [
        FiveTuple(Protocol.TCP, base + k, 1024 + (k % 64000), vip.ip, vip.port)
        for k in range(nb_connections)
    ]


def generate(spec: WorkloadSpec, start_ns: int = 0) -> Iterator[Packet]:
    """Yield the packet stream for a spec, lazily.

    Packet i arrives at start_ns + i * 1e9 // rate_pps, so the long-run
    rate is exact and all timestamps are integers.  Connection draws
    come from a seeded generator in chunks; the same spec always yields
    the same stream regardless of start_ns.
    """
    flows = connection_flows(spec.nb_connections, spec.vip)
    size = spec.pkt_size
    rate = spec.rate_pps
    n = spec.n_packets

    if spec.scheduler == "round_robin":
        nb = spec.nb_connections
        for i in range(n):
            yield Packet(flows[i % nb], size, start_ns + i * _NS_PER_S // rate, i)
        return

    rng = np.random.Generator(np.random.PCG64(spec.seed))
    produced = 0
    while produced < n:
        chunk = min(_RNG_CHUNK, n - produced)
        draws = rng.integers(0, spec.nb_connections, size=chunk)
        for offset in range(chunk):
            i = produced + offset
            yield Packet(flows[draws[offset]], size,
                         start_ns + i * _NS_PER_S // rate, i)
        produced += chunk


def save_trace(packets: Iterable[Packet], path: str | Path,
               comment: str | None = None) -> int:
    """Write packets to a trace file; returns the number written."""
    count = 0
    with open(path, "w") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        fh.write(f"# {TRACE_HEADER}\n")
        for pkt in packets:
            flow = pkt.flow
            fh.write(f"{pkt.arrival_ns},{int(flow.protocol)},"
                     f"{int_to_ip(flow.src_ip)},{flow.src_port},"
                     f"{int_to_ip(flow.dst_ip)},{flow.dst_port},{pkt.size}\n")
            count += 1
    return count


def load_trace(path: str | Path) -> Iterator[Packet]:
    """Yield packets from a trace file, lazily.

    Lines starting with '#' and blank lines are skipped.  The protocol
    field accepts a number (6, 17) or a name (tcp, udp).  Records must
    not go backwards in time.
    """
    flows: dict[tuple, FiveTuple] = {}
    last_ns = -1
    seq = 0
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split(",")
            if len(fields) != 7:
                raise ParseError(f"expected 7 fields, got {len(fields)}", line_no)
            try:
                arrival_ns = int(fields[0])
                proto = _PROTO_NAMES[fields[1].strip().lower()]
                src_ip = ip_to_int(fields[2].strip())
                src_port = int(fields[3])
                dst_ip = ip_to_int(fields[4].strip())
                dst_port = int(fields[5])
                size = int(fields[6])
            except KeyError:
                raise ParseError(f"unknown protocol {fields[1]!r}", line_no) from None
            except ValueError as exc:
                raise ParseError(str(exc), line_no) from None
            if arrival_ns < last_ns:
                raise TraceOrderError(
                    f"line {line_no}: arrival {arrival_ns} ns is before "
                    f"{last_ns} ns")
            last_ns = arrival_ns
            key = (proto, src_ip, src_port, dst_ip, dst_port)
            flow = flows.get(key)
            if flow is None:
                flow = FiveTuple(*key)
                flows[key] = flow
            try:
                yield Packet(flow, size, arrival_ns, seq)
            except ValueError as exc:
                raise ParseError(str(exc), line_no) from None
            seq += 1
