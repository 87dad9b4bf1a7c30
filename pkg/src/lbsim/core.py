"""Connection-level building blocks of the load balancer.

Flows are identified by the classic transport five-tuple.  The balancer
maps each flow to a backend (DIP) behind a virtual service address (VIP)
and keeps that mapping in a connection table so every later packet of the
flow reaches the same backend.
"""

from __future__ import annotations

import ipaddress
import struct
from dataclasses import dataclass
from enum import IntEnum

from .errors import ConsistencyViolation, UnknownVip

MIN_PACKET_SIZE = 64
MAX_PACKET_SIZE = 1518

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

_TUPLE_STRUCT = struct.Struct("!BIHIH")


class Protocol(IntEnum):
    TCP = 6
    UDP = 17


def ip_to_int(text: str) -> int:
    """Parse a dotted-quad IPv4 address into its 32-bit integer value."""
    return int(ipaddress.IPv4Address(text))


def int_to_ip(value: int) -> str:
    """Format a 32-bit integer as a dotted-quad IPv4 address."""
    return str(ipaddress.IPv4Address(value))


class FiveTuple:
    """Transport five-tuple identifying one connection.

    Addresses are stored as 32-bit integers and ports as 16-bit integers.
    The canonical wire encoding is 13 bytes: protocol byte, source
    address, source port, destination address, destination port, all in
    network byte order.  The FNV-1a hash of that encoding is cached after
    first use because the tuple is immutable.
    """

    __slots__ = ("protocol", "src_ip", "src_port", "dst_ip", "dst_port", "_fnv")

    def __init__(self, protocol: int, src_ip: int, src_port: int,
                 dst_ip: int, dst_port: int):
        self.protocol = protocol
        self.src_ip = src_ip
        self.src_port = src_port
        self.dst_ip = dst_ip
        self.dst_port = dst_port
        self._fnv: int | None = None

    def encode(self) -> bytes:
        return _TUPLE_STRUCT.pack(self.protocol, self.src_ip, self.src_port,
                                  self.dst_ip, self.dst_port)

    @property
    def fnv64(self) -> int:
        value = self._fnv
        if value is None:
            value = _FNV_OFFSET
            for byte in self.encode():
                value = ((value ^ byte) * _FNV_PRIME) & _MASK64
            self._fnv = value
        return value

    def __hash__(self) -> int:
        return self.fnv64

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FiveTuple):
            return NotImplemented
        return (self.protocol == other.protocol
                and self.src_ip == other.src_ip
                and self.src_port == other.src_port
                and self.dst_ip == other.dst_ip
                and self.dst_port == other.dst_port)

    def __repr__(self) -> str:
        proto = Protocol(self.protocol).name if self.protocol in (6, 17) else str(self.protocol)
        return (f"FiveTuple({proto}, {int_to_ip(self.src_ip)}:{self.src_port} -> "
                f"{int_to_ip(self.dst_ip)}:{self.dst_port})")


def hash_five_tuple(flow: FiveTuple) -> int:
    """FNV-1a 64-bit hash of the canonical 13-byte tuple encoding."""
    return flow.fnv64


class Packet:
    """One packet of a flow.

    Mutable on purpose: destination rewrite happens in place, the way a
    real forwarding engine would edit the header of a received frame.
    """

    __slots__ = ("flow", "size", "arrival_ns", "seq")

    def __init__(self, flow: FiveTuple, size: int, arrival_ns: int, seq: int = 0):
        if not MIN_PACKET_SIZE <= size <= MAX_PACKET_SIZE:
            raise ValueError(
                f"packet size {size} outside [{MIN_PACKET_SIZE}, {MAX_PACKET_SIZE}]")
        if arrival_ns < 0:
            raise ValueError(f"negative arrival time {arrival_ns}")
        self.flow = flow
        self.size = size
        self.arrival_ns = arrival_ns
        self.seq = seq

    def __repr__(self) -> str:
        return f"Packet(seq={self.seq}, t={self.arrival_ns}ns, size={self.size}, {self.flow!r})"


@dataclass(frozen=True)
class Vip:
    """Virtual service address clients connect to."""
    ip: int
    port: int

    @classmethod
    def parse(cls, text: str) -> Vip:
        host, _, port = text.rpartition(":")
        return cls(ip_to_int(host), int(port))

    def __str__(self) -> str:
        return f"{int_to_ip(self.ip)}:{self.port}"


@dataclass(frozen=True)
class Dip:
    """Direct (backend) address a connection is forwarded to."""
    ip: int
    port: int

    @classmethod
    def parse(cls, text: str) -> Dip:
        host, _, port = text.rpartition(":")
        return cls(ip_to_int(host), int(port))

    def __str__(self) -> str:
        return f"{int_to_ip(self.ip)}:{self.port}"


class VipTable:
    """Configured services and their backend pools.

    Each VIP owns an ordered list of DIPs and a rotating cursor, so new
    connections are spread round-robin across the pool.
    """

    def __init__(self):
        self._pools: dict[Vip, list[Dip]] = {}
        self._cursors: dict[Vip, int] = {}

    def add_vip(self, vip: Vip, dips: list[Dip]) -> None:
        if not dips:
            raise ValueError(f"VIP {vip} needs at least one DIP")
        self._pools[vip] = list(dips)
        self._cursors[vip] = 0

    def __contains__(self, vip: Vip) -> bool:
        return vip in self._pools

    def dips(self, vip: Vip) -> list[Dip]:
        try:
            return list(self._pools[vip])
        except KeyError:
            raise UnknownVip(f"no such VIP: {vip}") from None

    def vips(self) -> list[Vip]:
        return list(self._pools)

    def all_dips(self) -> list[Dip]:
        """Every configured DIP once, in pool order.  The position in this
        list pairs a DIP with its receive queue in the hybrid variant."""
        seen: list[Dip] = []
        for pool in self._pools.values():
            for dip in pool:
                if dip not in seen:
                    seen.append(dip)
        return seen

    def dip_index(self, vip: Vip, dip: Dip) -> int:
        """Position of a DIP in its pool; defines the DIP <-> queue pairing."""
        return self._pools[vip].index(dip)

    def select_dip(self, vip: Vip) -> Dip:
        """Pick the next backend for a new connection, rotating the cursor."""
        try:
            pool = self._pools[vip]
        except KeyError:
            raise UnknownVip(f"no such VIP: {vip}") from None
        cursor = self._cursors[vip]
        self._cursors[vip] = (cursor + 1) % len(pool)
        return pool[cursor]


def select_dip(table: VipTable, vip: Vip) -> Dip:
    return table.select_dip(vip)


class ConnectionTable:
    """Established flow-to-backend mappings."""

    def __init__(self):
        self._entries: dict[FiveTuple, Dip] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, flow: FiveTuple) -> bool:
        return flow in self._entries

    def lookup(self, flow: FiveTuple) -> Dip | None:
        return self._entries.get(flow)

    def entries(self) -> dict[FiveTuple, Dip]:
        return dict(self._entries)

    def install(self, flow: FiveTuple, dip: Dip) -> None:
        """Record a mapping.  Re-installing the same mapping is a no-op;
        changing an established mapping would break the connection and is
        rejected."""
        existing = self._entries.get(flow)
        if existing is None:
            self._entries[flow] = dip
        elif existing != dip:
            raise ConsistencyViolation(
                f"{flow!r} already mapped to {existing}, refusing {dip}")


def conn_lookup(table: ConnectionTable, flow: FiveTuple) -> Dip | None:
    return table.lookup(flow)


def conn_install(table: ConnectionTable, flow: FiveTuple, dip: Dip) -> None:
    table.install(flow, dip)


def rewrite_packet(packet: Packet, dip: Dip) -> Packet:
    """Point the packet at its backend: destination address and port are
    replaced with the DIP's, source fields are left alone."""
    flow = packet.flow
    packet.flow = FiveTuple(flow.protocol, flow.src_ip, flow.src_port,
                            dip.ip, dip.port)
    return packet
