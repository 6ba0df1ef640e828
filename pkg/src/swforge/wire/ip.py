"""Just enough IPv4/IPv6/UDP/ICMPv6 to carry payload and provisioning traffic."""

from __future__ import annotations

import enum
import ipaddress
import struct
from dataclasses import dataclass

from .l2tp import CodecError, Truncated

IPV4_HEADER_LEN = 20
IPV6_HEADER_LEN = 40
UDP_HEADER_LEN = 8

PROTO_UDP = 17
PROTO_ICMPV6 = 58
# RFC 3692 experimentation value, used for synthetic payload traffic
PROTO_EXPERIMENT = 253

IpAddress = ipaddress.IPv4Address | ipaddress.IPv6Address


class Af(enum.IntEnum):
    IPV4 = 4
    IPV6 = 6

    @property
    def label(self) -> str:
        return "v4" if self is Af.IPV4 else "v6"

    @classmethod
    def parse(cls, text: str | int | Af) -> Af:
        if isinstance(text, Af):
            return text
        key = str(text).lower().lstrip("ip").lstrip("v")
        return cls(int(key))

    @property
    def header_len(self) -> int:
        return IPV4_HEADER_LEN if self is Af.IPV4 else IPV6_HEADER_LEN

    @property
    def unspecified(self) -> IpAddress:
        return ipaddress.ip_address("0.0.0.0" if self is Af.IPV4 else "::")


def checksum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\x00"
    total = sum(struct.unpack(f"!{len(data) // 2}H", data))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


@dataclass(frozen=True)
class IpPacket:
    src: IpAddress
    dst: IpAddress
    proto: int
    payload: bytes = b""

    @property
    def af(self) -> Af:
        return Af(self.src.version)

    def __len__(self) -> int:
        return self.af.header_len + len(self.payload)


def _pseudo_header(src: IpAddress, dst: IpAddress, proto: int, length: int) -> bytes:
    if src.version == 4:
        return src.packed + dst.packed + struct.pack("!BBH", 0, proto, length)
    return src.packed + dst.packed + struct.pack("!IxxxB", length, proto)


def encode_ip(p: IpPacket) -> bytes:
    if p.src.version != p.dst.version:
        raise CodecError("mixed address families")
    if p.src.version == 6:
        return (
            struct.pack("!IHBB", 6 << 28, len(p.payload), p.proto, 64)
            + p.src.packed
            + p.dst.packed
            + p.payload
        )
    total = IPV4_HEADER_LEN + len(p.payload)
    hdr = struct.pack("!BBHHHBBH4s4s", 0x45, 0, total, 0, 0, 64, p.proto, 0, p.src.packed, p.dst.packed)
    csum = checksum(hdr)
    return hdr[:10] + struct.pack("!H", csum) + hdr[12:] + p.payload


def ip_version(buf: bytes) -> int:
    if not buf:
        raise Truncated("empty IP packet")
    return buf[0] >> 4


def decode_ip(buf: bytes) -> IpPacket:
    version = ip_version(buf)
    if version == 6:
        if len(buf) < IPV6_HEADER_LEN:
            raise Truncated("IPv6 header truncated")
        _, plen, nh, _ = struct.unpack_from("!IHBB", buf)
        if IPV6_HEADER_LEN + plen > len(buf):
            raise Truncated("IPv6 payload truncated")
        src = ipaddress.IPv6Address(bytes(buf[8:24]))
        dst = ipaddress.IPv6Address(bytes(buf[24:40]))
        return IpPacket(src, dst, nh, bytes(buf[40 : 40 + plen]))
    if version == 4:
        if len(buf) < IPV4_HEADER_LEN:
            raise Truncated("IPv4 header truncated")
        ihl = (buf[0] & 0x0F) * 4
        (total,) = struct.unpack_from("!H", buf, 2)
        if total > len(buf) or ihl < IPV4_HEADER_LEN:
            raise Truncated("IPv4 packet truncated")
        proto = buf[9]
        src = ipaddress.IPv4Address(bytes(buf[12:16]))
        dst = ipaddress.IPv4Address(bytes(buf[16:20]))
        return IpPacket(src, dst, proto, bytes(buf[ihl:total]))
    raise CodecError(f"IP version {version}")


def encode_udp(src: IpAddress, dst: IpAddress, sport: int, dport: int, data: bytes) -> bytes:
    length = UDP_HEADER_LEN + len(data)
    seg = struct.pack("!HHHH", sport, dport, length, 0) + data
    csum = checksum(_pseudo_header(src, dst, PROTO_UDP, length) + seg) or 0xFFFF
    return seg[:6] + struct.pack("!H", csum) + seg[8:]


def decode_udp(seg: bytes) -> tuple[int, int, bytes]:
    if len(seg) < UDP_HEADER_LEN:
        raise Truncated("UDP header truncated")
    sport, dport, length, _ = struct.unpack_from("!HHHH", seg)
    if length < UDP_HEADER_LEN or length > len(seg):
        raise Truncated("UDP length field")
    return sport, dport, bytes(seg[UDP_HEADER_LEN:length])


def udp_packet(src: IpAddress, dst: IpAddress, sport: int, dport: int, data: bytes) -> bytes:
    return encode_ip(IpPacket(src, dst, PROTO_UDP, encode_udp(src, dst, sport, dport, data)))


def icmpv6_packet(src: IpAddress, dst: IpAddress, typ: int, code: int, body: bytes) -> bytes:
    msg = struct.pack("!BBH", typ, code, 0) + body
    csum = checksum(_pseudo_header(src, dst, PROTO_ICMPV6, len(msg)) + msg)
    msg = msg[:2] + struct.pack("!H", csum) + msg[4:]
    return encode_ip(IpPacket(src, dst, PROTO_ICMPV6, msg))


def synthetic_packet(src: IpAddress | str, dst: IpAddress | str, size: int) -> bytes:
    """An IP packet of exactly ``size`` bytes with a zero-filled body."""
    src, dst = ipaddress.ip_address(src), ipaddress.ip_address(dst)
    hdr = IPV4_HEADER_LEN if src.version == 4 else IPV6_HEADER_LEN
    if size < hdr:
        raise ValueError(f"size {size} smaller than the {hdr}-byte IP header")
    return encode_ip(IpPacket(src, dst, PROTO_EXPERIMENT, bytes(size - hdr)))
