"""L2TPv2 header, AVP and control-message codec.

Layouts follow RFC 2661 sections 3.1 and 4.1, network byte order::

     0                   1                   2                   3
     0 1 2 3 4 5 6 7 8 9 0 1 2 3 4 5 6 7 8 9 0 1 2 3 4 5 6 7 8 9 0 1
    |T|L|x|x|S|x|O|P|x|x|x|x|  Ver  |          Length (opt)         |
    |           Tunnel ID           |           Session ID          |
    |             Ns (opt)          |             Nr (opt)          |
    |      Offset Size (opt)        |    Offset pad... (opt)

    |M|H| rsvd  |      Length       |           Vendor ID           |
    |         Attribute Type        |        Attribute Value...
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field, replace

L2TP_VERSION = 2
L2TP_PORT = 1701

FLAG_T = 0x8000
FLAG_L = 0x4000
FLAG_S = 0x0800
FLAG_O = 0x0200
FLAG_P = 0x0100
VERSION_MASK = 0x000F

AVP_FLAG_M = 0x8000
AVP_FLAG_H = 0x4000
AVP_LENGTH_MASK = 0x03FF
AVP_HEADER_LEN = 6
AVP_MAX_LEN = AVP_LENGTH_MASK
AVP_MAX_VALUE_LEN = AVP_MAX_LEN - AVP_HEADER_LEN

CONTROL_HEADER_LEN = 12


class CodecError(Exception):
    """Base class for wire-format errors."""


class InvalidHeader(CodecError):
    pass


class BadVersion(CodecError):
    pass


class Truncated(CodecError):
    pass


class ValueTooLong(CodecError):
    pass


class HiddenAvpRejected(CodecError):
    pass


class MandatoryUnknownAvp(CodecError):
    """An unrecognised AVP carried the M bit; the receiver must tear down."""

    def __init__(self, vendor_id: int, attribute_type: int):
        self.vendor_id = vendor_id
        self.attribute_type = attribute_type
        super().__init__(f"unknown mandatory AVP vendor={vendor_id} type={attribute_type}")


class UnknownMessageType(CodecError):
    pass


class MessageType(enum.IntEnum):
    # 0 is reserved on the wire; used here only for the AVP-less acknowledgment
    ZLB = 0
    SCCRQ = 1
    SCCRP = 2
    SCCCN = 3
    StopCCN = 4
    HELLO = 6
    OCRQ = 7
    OCRP = 8
    OCCN = 9
    ICRQ = 10
    ICRP = 11
    ICCN = 12
    CDN = 14
    WEN = 15
    SLI = 16


class AvpType(enum.IntEnum):
    MESSAGE_TYPE = 0
    RESULT_CODE = 1
    PROTOCOL_VERSION = 2
    FRAMING_CAPABILITIES = 3
    BEARER_CAPABILITIES = 4
    TIE_BREAKER = 5
    FIRMWARE_REVISION = 6
    HOST_NAME = 7
    VENDOR_NAME = 8
    ASSIGNED_TUNNEL_ID = 9
    RECEIVE_WINDOW_SIZE = 10
    CHALLENGE = 11
    Q931_CAUSE_CODE = 12
    CHALLENGE_RESPONSE = 13
    ASSIGNED_SESSION_ID = 14
    CALL_SERIAL_NUMBER = 15
    MINIMUM_BPS = 16
    MAXIMUM_BPS = 17
    BEARER_TYPE = 18
    FRAMING_TYPE = 19
    CALLED_NUMBER = 21
    CALLING_NUMBER = 22
    SUB_ADDRESS = 23
    TX_CONNECT_SPEED = 24
    PHYSICAL_CHANNEL_ID = 25
    INITIAL_RECEIVED_LCP_CONFREQ = 26
    LAST_SENT_LCP_CONFREQ = 27
    LAST_RECEIVED_LCP_CONFREQ = 28
    PROXY_AUTHEN_TYPE = 29
    PROXY_AUTHEN_NAME = 30
    PROXY_AUTHEN_CHALLENGE = 31
    PROXY_AUTHEN_ID = 32
    PROXY_AUTHEN_RESPONSE = 33
    CALL_ERRORS = 34
    ACCM = 35
    RANDOM_VECTOR = 36
    PRIVATE_GROUP_ID = 37
    RX_CONNECT_SPEED = 38
    SEQUENCING_REQUIRED = 39


KNOWN_AVP_TYPES = frozenset(int(t) for t in AvpType)

# M-bit settings mandated by RFC 2661 for the AVPs this package emits
MANDATORY_BIT = {
    AvpType.MESSAGE_TYPE: True,
    AvpType.RESULT_CODE: True,
    AvpType.PROTOCOL_VERSION: True,
    AvpType.FRAMING_CAPABILITIES: True,
    AvpType.FIRMWARE_REVISION: False,
    AvpType.HOST_NAME: True,
    AvpType.VENDOR_NAME: False,
    AvpType.ASSIGNED_TUNNEL_ID: True,
    AvpType.RECEIVE_WINDOW_SIZE: True,
    AvpType.CHALLENGE: True,
    AvpType.CHALLENGE_RESPONSE: True,
    AvpType.Q931_CAUSE_CODE: True,
    AvpType.ASSIGNED_SESSION_ID: True,
    AvpType.CALL_SERIAL_NUMBER: True,
    AvpType.FRAMING_TYPE: True,
    AvpType.TX_CONNECT_SPEED: True,
}

FRAMING_SYNC = 0x1
FRAMING_ASYNC = 0x2


@dataclass(frozen=True)
class L2tpHeader:
    is_control: bool
    has_length: bool
    has_sequence: bool
    has_offset: bool = False
    priority: bool = False
    version: int = L2TP_VERSION
    length: int | None = None
    tunnel_id: int = 0
    session_id: int = 0
    ns: int | None = None
    nr: int | None = None
    offset_size: int = 0

    @classmethod
    def control(cls, tunnel_id: int, session_id: int, ns: int, nr: int, length: int) -> L2tpHeader:
        return cls(
            is_control=True,
            has_length=True,
            has_sequence=True,
            length=length,
            tunnel_id=tunnel_id,
            session_id=session_id,
            ns=ns,
            nr=nr,
        )

    @property
    def encoded_len(self) -> int:
        n = 6
        if self.has_length:
            n += 2
        if self.has_sequence:
            n += 4
        if self.has_offset:
            n += 2 + self.offset_size
        return n


def _check_header(h: L2tpHeader) -> None:
    if h.version != L2TP_VERSION:
        raise InvalidHeader(f"version must be {L2TP_VERSION}, got {h.version}")
    if h.is_control and not (h.has_length and h.has_sequence and not h.has_offset and not h.priority):
        raise InvalidHeader("control header requires L=1, S=1, O=0, P=0")
    if h.has_length != (h.length is not None):
        raise InvalidHeader("length field presence does not match L bit")
    if h.has_sequence != (h.ns is not None and h.nr is not None):
        raise InvalidHeader("ns/nr presence does not match S bit")
    if not h.has_offset and h.offset_size:
        raise InvalidHeader("offset size without O bit")
    for name in ("tunnel_id", "session_id", "ns", "nr", "length", "offset_size"):
        v = getattr(h, name)
        if v is not None and not 0 <= v <= 0xFFFF:
            raise InvalidHeader(f"{name} out of 16-bit range: {v}")


def encode_header(h: L2tpHeader) -> bytes:
    _check_header(h)
    flags = h.version
    if h.is_control:
        flags |= FLAG_T
    if h.has_length:
        flags |= FLAG_L
    if h.has_sequence:
        flags |= FLAG_S
    if h.has_offset:
        flags |= FLAG_O
    if h.priority:
        flags |= FLAG_P
    out = bytearray(struct.pack("!H", flags))
    if h.has_length:
        out += struct.pack("!H", h.length)
    out += struct.pack("!HH", h.tunnel_id, h.session_id)
    if h.has_sequence:
        out += struct.pack("!HH", h.ns, h.nr)
    if h.has_offset:
        out += struct.pack("!H", h.offset_size) + bytes(h.offset_size)
    return bytes(out)


def decode_header(buf: bytes) -> L2tpHeader:
    """Parse the header at the start of ``buf``; trailing bytes are ignored."""
    if len(buf) < 2:
        raise Truncated("buffer shorter than L2TP flags word")
    (flags,) = struct.unpack_from("!H", buf, 0)
    version = flags & VERSION_MASK
    if version != L2TP_VERSION:
        raise BadVersion(f"L2TP version {version}")
    is_control = bool(flags & FLAG_T)
    has_length = bool(flags & FLAG_L)
    has_sequence = bool(flags & FLAG_S)
    has_offset = bool(flags & FLAG_O)
    priority = bool(flags & FLAG_P)
    pos = 2
    need = 6 + 2 * has_length + 4 * has_sequence + 2 * has_offset
    if len(buf) < need:
        raise Truncated(f"header needs {need} bytes, have {len(buf)}")
    length = None
    if has_length:
        (length,) = struct.unpack_from("!H", buf, pos)
        pos += 2
    tunnel_id, session_id = struct.unpack_from("!HH", buf, pos)
    pos += 4
    ns = nr = None
    if has_sequence:
        ns, nr = struct.unpack_from("!HH", buf, pos)
        pos += 4
    offset_size = 0
    if has_offset:
        (offset_size,) = struct.unpack_from("!H", buf, pos)
        if len(buf) < pos + 2 + offset_size:
            raise Truncated("offset padding runs past end of buffer")
    h = L2tpHeader(
        is_control=is_control,
        has_length=has_length,
        has_sequence=has_sequence,
        has_offset=has_offset,
        priority=priority,
        version=version,
        length=length,
        tunnel_id=tunnel_id,
        session_id=session_id,
        ns=ns,
        nr=nr,
        offset_size=offset_size,
    )
    if is_control:
        try:
            _check_header(h)
        except InvalidHeader as exc:
            raise CodecError(str(exc)) from exc
    return h


@dataclass(frozen=True)
class Avp:
    attribute_type: int
    value: bytes = b""
    mandatory: bool = False
    hidden: bool = False
    vendor_id: int = 0

    @property
    def known(self) -> bool:
        return self.vendor_id == 0 and self.attribute_type in KNOWN_AVP_TYPES

    @property
    def name(self) -> str:
        if self.known:
            return AvpType(self.attribute_type).name
        return f"VENDOR{self.vendor_id}_{self.attribute_type}"


def encode_avp(a: Avp) -> bytes:
    if len(a.value) > AVP_MAX_VALUE_LEN:
        raise ValueTooLong(f"AVP value of {len(a.value)} bytes exceeds {AVP_MAX_VALUE_LEN}")
    word = (AVP_HEADER_LEN + len(a.value)) | (AVP_FLAG_M if a.mandatory else 0) | (AVP_FLAG_H if a.hidden else 0)
    return struct.pack("!HHH", word, a.vendor_id, a.attribute_type) + a.value


def decode_avp(buf: bytes, pos: int = 0) -> tuple[Avp, int]:
    """Decode one AVP at ``pos``; returns the AVP and the position after it."""
    if len(buf) - pos < AVP_HEADER_LEN:
        raise Truncated("AVP header truncated")
    word, vendor_id, attr = struct.unpack_from("!HHH", buf, pos)
    length = word & AVP_LENGTH_MASK
    if length < AVP_HEADER_LEN:
        raise CodecError(f"AVP length {length} below header size")
    if pos + length > len(buf):
        raise Truncated(f"AVP declares {length} bytes, {len(buf) - pos} available")
    avp = Avp(
        attribute_type=attr,
        value=bytes(buf[pos + AVP_HEADER_LEN : pos + length]),
        mandatory=bool(word & AVP_FLAG_M),
        hidden=bool(word & AVP_FLAG_H),
        vendor_id=vendor_id,
    )
    return avp, pos + length


# --- typed AVP value helpers -------------------------------------------------


def avp_u16(attr: AvpType, value: int) -> Avp:
    return Avp(int(attr), struct.pack("!H", value), MANDATORY_BIT.get(attr, False))


def avp_u32(attr: AvpType, value: int) -> Avp:
    return Avp(int(attr), struct.pack("!I", value), MANDATORY_BIT.get(attr, False))


def avp_bytes(attr: AvpType, value: bytes) -> Avp:
    return Avp(int(attr), bytes(value), MANDATORY_BIT.get(attr, False))


def avp_str(attr: AvpType, value: str) -> Avp:
    return avp_bytes(attr, value.encode("utf-8"))


def message_type_avp(mt: MessageType) -> Avp:
    return avp_u16(AvpType.MESSAGE_TYPE, int(mt))


def protocol_version_avp() -> Avp:
    # version 1, revision 0 identifies L2TPv2 control messages
    return avp_bytes(AvpType.PROTOCOL_VERSION, b"\x01\x00")


def result_code_avp(result: int, error: int | None = None, message: str = "") -> Avp:
    value = struct.pack("!H", result)
    if error is not None or message:
        value += struct.pack("!H", error or 0) + message.encode("utf-8")
    return avp_bytes(AvpType.RESULT_CODE, value)


def parse_result_code(value: bytes) -> tuple[int, int | None, str]:
    if len(value) < 2:
        raise Truncated("Result Code AVP too short")
    (result,) = struct.unpack_from("!H", value)
    if len(value) < 4:
        return result, None, ""
    (error,) = struct.unpack_from("!H", value, 2)
    return result, error, value[4:].decode("utf-8", "replace")


def u16_value(value: bytes) -> int:
    if len(value) != 2:
        raise CodecError(f"expected 2-byte value, got {len(value)}")
    return struct.unpack("!H", value)[0]


def u32_value(value: bytes) -> int:
    if len(value) != 4:
        raise CodecError(f"expected 4-byte value, got {len(value)}")
    return struct.unpack("!I", value)[0]


# --- control messages ----------------------------------------------------------


@dataclass(frozen=True)
class ControlMessage:
    header: L2tpHeader
    message_type: MessageType
    avps: tuple[Avp, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.message_type is MessageType.ZLB:
            if self.avps:
                raise CodecError("ZLB carries no AVPs")
            return
        if not self.avps:
            raise CodecError("non-ZLB message needs a Message Type AVP")
        first = self.avps[0]
        if first.vendor_id != 0 or first.attribute_type != AvpType.MESSAGE_TYPE:
            raise CodecError("first AVP must be Message Type")
        if not first.mandatory or first.hidden:
            raise CodecError("Message Type AVP must be mandatory and unhidden")
        if u16_value(first.value) != int(self.message_type):
            raise CodecError("Message Type AVP disagrees with message_type")

    @classmethod
    def build(
        cls,
        message_type: MessageType,
        avps: list[Avp] | tuple[Avp, ...] = (),
        *,
        tunnel_id: int = 0,
        session_id: int = 0,
        ns: int = 0,
        nr: int = 0,
    ) -> ControlMessage:
        """Assemble a message, prepending the Message Type AVP and sizing the header."""
        body: tuple[Avp, ...] = ()
        if message_type is not MessageType.ZLB:
            body = (message_type_avp(message_type), *avps)
        length = CONTROL_HEADER_LEN + sum(AVP_HEADER_LEN + len(a.value) for a in body)
        header = L2tpHeader.control(tunnel_id, session_id, ns, nr, length)
        return cls(header, message_type, body)

    def with_sequence(self, ns: int, nr: int) -> ControlMessage:
        return replace(self, header=replace(self.header, ns=ns, nr=nr))

    def find(self, attr: AvpType) -> Avp | None:
        for a in self.avps:
            if a.vendor_id == 0 and a.attribute_type == attr:
                return a
        return None

    def value(self, attr: AvpType) -> bytes | None:
        a = self.find(attr)
        return None if a is None else a.value

    @property
    def ns(self) -> int:
        return self.header.ns

    @property
    def nr(self) -> int:
        return self.header.nr

    @property
    def name(self) -> str:
        return self.message_type.name


def encode_message(msg: ControlMessage) -> bytes:
    body = b"".join(encode_avp(a) for a in msg.avps)
    header = msg.header
    if header.length != CONTROL_HEADER_LEN + len(body):
        header = replace(header, length=CONTROL_HEADER_LEN + len(body))
    if not header.is_control:
        raise InvalidHeader("control message needs T=1")
    return encode_header(header) + body


def decode_message(buf: bytes) -> ControlMessage:
    """Decode a complete L2TPv2 control message.

    Unknown AVPs without the M bit are kept in ``avps``; callers treat them as
    ignorable. Hidden AVPs are rejected outright.
    """
    header = decode_header(buf)
    if not header.is_control:
        raise CodecError("not a control message (T=0)")
    if header.length > len(buf):
        raise Truncated(f"header length {header.length} exceeds buffer of {len(buf)}")
    if header.length < CONTROL_HEADER_LEN:
        raise CodecError(f"control length {header.length} below header size")
    pos = CONTROL_HEADER_LEN
    avps: list[Avp] = []
    while pos < header.length:
        avp, pos = decode_avp(buf[: header.length], pos)
        if avp.hidden:
            raise HiddenAvpRejected(f"hidden AVP type {avp.attribute_type}")
        if avp.mandatory and not avp.known:
            raise MandatoryUnknownAvp(avp.vendor_id, avp.attribute_type)
        avps.append(avp)
    if not avps:
        return ControlMessage(header, MessageType.ZLB, ())
    first = avps[0]
    if first.vendor_id != 0 or first.attribute_type != AvpType.MESSAGE_TYPE:
        raise CodecError("first AVP is not Message Type")
    code = u16_value(first.value)
    try:
        mt = MessageType(code)
    except ValueError:
        raise UnknownMessageType(f"message type {code}") from None
    if mt is MessageType.ZLB:
        raise UnknownMessageType("message type 0 is reserved")
    return ControlMessage(header, mt, tuple(avps))


def is_control_packet(buf: bytes) -> bool:
    return len(buf) >= 2 and bool(buf[0] & 0x80)


def data_header(tunnel_id: int, session_id: int, payload_len: int) -> bytes:
    """Data-message header with the length field set (8 bytes)."""
    return encode_header(
        L2tpHeader(
            is_control=False,
            has_length=True,
            has_sequence=False,
            length=8 + payload_len,
            tunnel_id=tunnel_id,
            session_id=session_id,
        )
    )
