"""DHCPv4 with the Subnet Allocation option, in a compact binary encoding.

Message: op(1) xid(4) then TLV options code(1) len(1) value. Option 220
(Subnet Allocation) nests suboptions with the same TLV shape:

* Subnet-Request (1): flags(1) [h=0x80, i=0x40], prefix_len(1)
* Subnet-Information (2): flags(1) [c=0x80, s=0x40], prefix_len(1), prefix(4)
"""

from __future__ import annotations

import enum
import ipaddress
import struct
from dataclasses import dataclass

from ..wire.ip import Af
from ..wire.l2tp import CodecError, Truncated
from .pools import InvalidPrefixLength, NoPrefixAvailable, check_delegated_length

CLIENT_PORT = 68
SERVER_PORT = 67

OPT_SUBNET_ALLOCATION = 220
SUB_REQUEST = 1
SUB_INFORMATION = 2

H_BIT = 0x80
I_BIT = 0x40
C_BIT = 0x80
S_BIT = 0x40


class Op(enum.IntEnum):
    DISCOVER = 1
    OFFER = 2
    REQUEST = 3
    ACK = 5
    NAK = 6


class UnsupportedLength(InvalidPrefixLength):
    pass


@dataclass(frozen=True)
class SubnetInformation:
    prefix: ipaddress.IPv4Network
    c: bool = False
    s: bool = False


@dataclass(frozen=True)
class SubnetRequest:
    h: bool = True
    i: bool = False
    prefix_len: int = 0
    info: SubnetInformation | None = None


@dataclass(frozen=True)
class Dhcpv4Message:
    op: Op
    xid: int
    subnet_request: SubnetRequest | None = None
    subnet_info: SubnetInformation | None = None


def _tlv(code: int, value: bytes) -> bytes:
    if len(value) > 255:
        raise CodecError("DHCPv4 option too long")
    return bytes([code, len(value)]) + value


def _parse_tlvs(buf: bytes) -> list[tuple[int, bytes]]:
    out = []
    pos = 0
    while pos < len(buf):
        if pos + 2 > len(buf):
            raise Truncated("DHCPv4 option header truncated")
        code, length = buf[pos], buf[pos + 1]
        if pos + 2 + length > len(buf):
            raise Truncated(f"DHCPv4 option {code} truncated")
        out.append((code, bytes(buf[pos + 2 : pos + 2 + length])))
        pos += 2 + length
    return out


def _encode_info(info: SubnetInformation) -> bytes:
    flags = (C_BIT if info.c else 0) | (S_BIT if info.s else 0)
    return _tlv(SUB_INFORMATION, struct.pack("!BB4s", flags, info.prefix.prefixlen, info.prefix.network_address.packed))


def _decode_info(value: bytes) -> SubnetInformation:
    if len(value) != 6:
        raise CodecError("Subnet-Information must be 6 bytes")
    flags, plen, raw = struct.unpack("!BB4s", value)
    return SubnetInformation(ipaddress.IPv4Network((ipaddress.IPv4Address(raw), plen)), bool(flags & C_BIT), bool(flags & S_BIT))


def encode_dhcpv4(m: Dhcpv4Message) -> bytes:
    sub = b""
    if m.subnet_request is not None:
        r = m.subnet_request
        flags = (H_BIT if r.h else 0) | (I_BIT if r.i else 0)
        sub += _tlv(SUB_REQUEST, struct.pack("!BB", flags, r.prefix_len))
        if r.info is not None:
            sub += _encode_info(r.info)
    if m.subnet_info is not None:
        sub += _encode_info(m.subnet_info)
    body = _tlv(OPT_SUBNET_ALLOCATION, sub) if sub else b""
    return struct.pack("!BI", int(m.op), m.xid) + body


def decode_dhcpv4(buf: bytes) -> Dhcpv4Message:
    if len(buf) < 5:
        raise Truncated("DHCPv4 header truncated")
    op, xid = struct.unpack_from("!BI", buf)
    req = None
    info = None
    for code, value in _parse_tlvs(buf[5:]):
        if code != OPT_SUBNET_ALLOCATION:
            continue
        flags = plen = None
        req_info = None
        for sc, sv in _parse_tlvs(value):
            if sc == SUB_REQUEST and len(sv) == 2:
                flags, plen = sv[0], sv[1]
            elif sc == SUB_INFORMATION:
                req_info = _decode_info(sv)
        if flags is not None:
            req = SubnetRequest(bool(flags & H_BIT), bool(flags & I_BIT), plen, req_info)
        else:
            info = req_info
    return Dhcpv4Message(Op(op), xid, req, info)


def dhcpv4_subnet_request(prior: ipaddress.IPv4Network | str | None = None, supported_min_len: int | None = None) -> SubnetRequest:
    """Subnet-Request the SI sends: h=1 always, i=1 and Subnet-Information on renewal."""
    plen = 0
    if supported_min_len is not None:
        check_delegated_length_v4(supported_min_len)
        plen = supported_min_len
    if prior is None:
        return SubnetRequest(h=True, i=False, prefix_len=plen)
    net = ipaddress.IPv4Network(prior)
    return SubnetRequest(h=True, i=True, prefix_len=plen, info=SubnetInformation(net, c=False, s=False))


def check_delegated_length_v4(length: int) -> None:
    try:
        check_delegated_length(Af.IPV4, length)
    except InvalidPrefixLength as exc:
        raise UnsupportedLength(str(exc)) from None


def sc_handle_subnet_request(
    req: SubnetRequest,
    allocate,
    default_len: int,
) -> SubnetInformation:
    """Pick the prefix to delegate.

    ``allocate(prefix_len, prior)`` returns a prefix or raises NoPrefixAvailable.
    """
    if not req.h:
        raise CodecError("Subnet-Request without the h bit")
    plen = req.prefix_len or default_len
    check_delegated_length_v4(plen)
    prior = req.info.prefix if (req.i and req.info is not None) else None
    prefix = allocate(plen, prior)
    if prefix is None:
        raise NoPrefixAvailable("no IPv4 prefix to delegate")
    return SubnetInformation(prefix, c=False, s=False)
