"""Neighbor Discovery subset: RS, RA with one Prefix Information option, NS/NA for DAD."""

from __future__ import annotations

import ipaddress
import struct
from dataclasses import dataclass

from ..wire.ip import PROTO_ICMPV6, IpPacket, decode_ip, icmpv6_packet
from ..wire.l2tp import CodecError, Truncated
from .pools import NoPrefixAvailable, PrefixPool

ROUTER_SOLICITATION = 133
ROUTER_ADVERTISEMENT = 134
NEIGHBOR_SOLICITATION = 135
NEIGHBOR_ADVERTISEMENT = 136

OPT_PREFIX_INFO = 3
FLAG_M = 0x80
FLAG_O = 0x40
PI_FLAG_L = 0x80
PI_FLAG_A = 0x40

ALL_ROUTERS = ipaddress.IPv6Address("ff02::2")
ALL_NODES = ipaddress.IPv6Address("ff02::1")
UNSPECIFIED = ipaddress.IPv6Address("::")
LINK_LOCAL = ipaddress.IPv6Network("fe80::/64")

DAD_WAIT_US = 1_000_000


class DadFailed(Exception):
    pass


@dataclass(frozen=True)
class RouterAdvertisement:
    prefix: ipaddress.IPv6Network
    managed: bool = False
    other: bool = False
    router_lifetime: int = 1800
    valid_lifetime: int = 86400
    preferred_lifetime: int = 14400


@dataclass(frozen=True)
class NeighborMessage:
    kind: int
    target: ipaddress.IPv6Address


def link_local(iid: int) -> ipaddress.IPv6Address:
    return ipaddress.IPv6Address(int(LINK_LOCAL.network_address) | iid)


def solicited_node(addr: ipaddress.IPv6Address) -> ipaddress.IPv6Address:
    return ipaddress.IPv6Address(int(ipaddress.IPv6Address("ff02::1:ff00:0")) | (int(addr) & 0xFFFFFF))


def router_solicitation(src: ipaddress.IPv6Address) -> bytes:
    return icmpv6_packet(src, ALL_ROUTERS, ROUTER_SOLICITATION, 0, bytes(4))


def encode_ra(src: ipaddress.IPv6Address, ra: RouterAdvertisement) -> bytes:
    flags = (FLAG_M if ra.managed else 0) | (FLAG_O if ra.other else 0)
    body = struct.pack("!BBHII", 64, flags, ra.router_lifetime, 0, 0)
    pi = struct.pack(
        "!BBBBIII16s",
        OPT_PREFIX_INFO,
        4,
        ra.prefix.prefixlen,
        PI_FLAG_L | PI_FLAG_A,
        ra.valid_lifetime,
        ra.preferred_lifetime,
        0,
        ra.prefix.network_address.packed,
    )
    return icmpv6_packet(src, ALL_NODES, ROUTER_ADVERTISEMENT, 0, body + pi)


def neighbor_message(kind: int, src: ipaddress.IPv6Address, target: ipaddress.IPv6Address) -> bytes:
    if kind == NEIGHBOR_SOLICITATION:
        dst = solicited_node(target)
        flags = 0
    else:
        dst = ALL_NODES
        # override flag
        flags = 0x20000000
    return icmpv6_packet(src, dst, kind, 0, struct.pack("!I", flags) + target.packed)


def parse_icmpv6(buf: bytes) -> tuple[IpPacket, int, bytes] | None:
    """(packet, ICMPv6 type, body) or None when not ICMPv6."""
    pkt = decode_ip(buf)
    if pkt.src.version != 6 or pkt.proto != PROTO_ICMPV6:
        return None
    if len(pkt.payload) < 4:
        raise Truncated("ICMPv6 header truncated")
    return pkt, pkt.payload[0], pkt.payload[4:]


def decode_ra(body: bytes) -> RouterAdvertisement:
    if len(body) < 12:
        raise Truncated("RA body truncated")
    _, flags, lifetime, _, _ = struct.unpack_from("!BBHII", body)
    pos = 12
    while pos + 2 <= len(body):
        typ, units = body[pos], body[pos + 1]
        if units == 0:
            raise CodecError("zero-length ND option")
        if typ == OPT_PREFIX_INFO and units == 4:
            _, _, plen, _, valid, preferred, _, raw = struct.unpack_from("!BBBBIII16s", body, pos)
            prefix = ipaddress.IPv6Network((ipaddress.IPv6Address(raw), plen))
            return RouterAdvertisement(prefix, bool(flags & FLAG_M), bool(flags & FLAG_O), lifetime, valid, preferred)
        pos += units * 8
    raise CodecError("RA without Prefix Information")


def decode_neighbor(kind: int, body: bytes) -> NeighborMessage:
    if len(body) < 20:
        raise Truncated("NS/NA body truncated")
    return NeighborMessage(kind, ipaddress.IPv6Address(body[4:20]))


def choose_ra_prefix(
    framed_prefix: ipaddress.IPv6Network | None,
    framed_pool: str | None,
    pools: dict[str, PrefixPool],
    local_pool: PrefixPool | None,
) -> ipaddress.IPv6Network:
    """The /64 advertised on the softwire link.

    Precedence: AAA Framed-IPv6-Prefix, then a prefix from the AAA-named
    Framed-IPv6-Pool, then the concentrator's local pool.
    """
    if framed_prefix is not None:
        return framed_prefix
    if framed_pool is not None:
        pool = pools.get(framed_pool)
        if pool is None:
            raise NoPrefixAvailable(f"unknown Framed-IPv6-Pool {framed_pool!r}")
        return pool.allocate()
    if local_pool is None:
        raise NoPrefixAvailable("no prefix source for router advertisements")
    return local_pool.allocate()


def slaac_address(prefix: ipaddress.IPv6Network, iid: int) -> ipaddress.IPv6Address:
    if prefix.prefixlen != 64:
        raise ValueError(f"SLAAC needs a /64, got {prefix}")
    return ipaddress.IPv6Address(int(prefix.network_address) | (iid & ((1 << 64) - 1)))


def sc_handle_rs(prefix: ipaddress.IPv6Network, *, dhcpv6_addresses: bool, dhcpv6_info: bool) -> RouterAdvertisement:
    return RouterAdvertisement(prefix, managed=dhcpv6_addresses, other=dhcpv6_info)
