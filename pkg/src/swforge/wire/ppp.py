"""PPP frames as carried inside L2TP data messages.

No HDLC flag or FCS. The 0xFF 0x03 address/control bytes lead every frame
unless Address-and-Control-Field-Compression was negotiated; LCP frames
always carry them (RFC 1661 6.6).
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

from .l2tp import CodecError, Truncated


class UnknownProtocol(CodecError):
    def __init__(self, protocol: int):
        self.protocol = protocol
        super().__init__(f"unknown PPP protocol 0x{protocol:04x}")


class PppProtocol(enum.IntEnum):
    IPV4 = 0x0021
    IPV6 = 0x0057
    IPCP = 0x8021
    IPV6CP = 0x8057
    LCP = 0xC021
    CHAP = 0xC223


@dataclass(frozen=True)
class PppFrame:
    protocol: PppProtocol
    payload: bytes = b""


ADDRESS_CONTROL = b"\xff\x03"


def encode_ppp(f: PppFrame, acfc: bool = False) -> bytes:
    head = b"" if acfc and f.protocol is not PppProtocol.LCP else ADDRESS_CONTROL
    return head + struct.pack("!H", int(f.protocol)) + f.payload


def decode_ppp(buf: bytes) -> PppFrame:
    """Accepts frames with or without the address/control bytes."""
    # a protocol field never starts with 0xff, so the prefix is unambiguous
    if buf[:2] == ADDRESS_CONTROL:
        buf = buf[2:]
    if len(buf) < 2:
        raise Truncated("PPP frame shorter than protocol field")
    (proto,) = struct.unpack_from("!H", buf)
    try:
        protocol = PppProtocol(proto)
    except ValueError:
        raise UnknownProtocol(proto) from None
    return PppFrame(protocol, bytes(buf[2:]))


class Code(enum.IntEnum):
    """LCP packet codes; the NCPs use 1-7."""

    CONFIGURE_REQUEST = 1
    CONFIGURE_ACK = 2
    CONFIGURE_NAK = 3
    CONFIGURE_REJECT = 4
    TERMINATE_REQUEST = 5
    TERMINATE_ACK = 6
    CODE_REJECT = 7
    PROTOCOL_REJECT = 8
    ECHO_REQUEST = 9
    ECHO_REPLY = 10
    DISCARD_REQUEST = 11


@dataclass(frozen=True)
class ControlPacket:
    code: int
    identifier: int
    data: bytes = b""


def encode_cp(p: ControlPacket) -> bytes:
    return struct.pack("!BBH", p.code, p.identifier, 4 + len(p.data)) + p.data


def decode_cp(buf: bytes) -> ControlPacket:
    if len(buf) < 4:
        raise Truncated("control packet header truncated")
    code, ident, length = struct.unpack_from("!BBH", buf)
    if length < 4 or length > len(buf):
        raise Truncated(f"control packet length {length}, buffer {len(buf)}")
    return ControlPacket(code, ident, bytes(buf[4:length]))


# Configuration options are an ordered list of (type, value) pairs.
Options = list[tuple[int, bytes]]


def encode_options(opts: Options) -> bytes:
    out = bytearray()
    for typ, value in opts:
        if len(value) > 253:
            raise CodecError(f"option {typ} value too long")
        out += struct.pack("!BB", typ, 2 + len(value)) + value
    return bytes(out)


def decode_options(buf: bytes) -> Options:
    opts: Options = []
    pos = 0
    while pos < len(buf):
        if len(buf) - pos < 2:
            raise Truncated("option header truncated")
        typ, length = buf[pos], buf[pos + 1]
        if length < 2 or pos + length > len(buf):
            raise Truncated(f"option {typ} length {length}")
        opts.append((typ, bytes(buf[pos + 2 : pos + length])))
        pos += length
    return opts


# LCP options
LCP_MRU = 1
LCP_AUTH_PROTOCOL = 3
LCP_MAGIC = 5
LCP_PFC = 7
LCP_ACFC = 8
CHAP_MD5 = 5

# IPCP options (RFC 1332, RFC 1877)
IPCP_ADDRESS = 3
IPCP_PRIMARY_DNS = 129
IPCP_SECONDARY_DNS = 131

# IPV6CP options (RFC 5072)
IPV6CP_INTERFACE_ID = 1

# CHAP codes (RFC 1994)
CHAP_CHALLENGE = 1
CHAP_RESPONSE = 2
CHAP_SUCCESS = 3
CHAP_FAILURE = 4


def chap_value_packet(code: int, identifier: int, value: bytes, name: str) -> ControlPacket:
    """Challenge or Response: value-size, value, name."""
    return ControlPacket(code, identifier, bytes([len(value)]) + value + name.encode("utf-8"))


def parse_chap_value(p: ControlPacket) -> tuple[bytes, str]:
    if not p.data:
        raise Truncated("CHAP packet without value-size")
    size = p.data[0]
    if 1 + size > len(p.data):
        raise Truncated("CHAP value runs past packet")
    return p.data[1 : 1 + size], p.data[1 + size :].decode("utf-8", "replace")


def frame(protocol: PppProtocol, p: ControlPacket) -> PppFrame:
    return PppFrame(protocol, encode_cp(p))
