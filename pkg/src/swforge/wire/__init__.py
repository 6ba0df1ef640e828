"""Bit-exact codecs for L2TPv2 control/data messages, PPP frames and IP payloads."""

from .ip import Af, IpPacket, decode_ip, encode_ip
from .l2tp import (
    Avp,
    AvpType,
    BadVersion,
    CodecError,
    ControlMessage,
    HiddenAvpRejected,
    InvalidHeader,
    L2tpHeader,
    MandatoryUnknownAvp,
    MessageType,
    Truncated,
    ValueTooLong,
    decode_avp,
    decode_header,
    decode_message,
    encode_avp,
    encode_header,
    encode_message,
)
from .ppp import PppFrame, PppProtocol, UnknownProtocol, decode_ppp, encode_ppp
from .relevance import AvpRelevance, classify_avp

__all__ = [
    "Af",
    "Avp",
    "AvpRelevance",
    "AvpType",
    "BadVersion",
    "CodecError",
    "ControlMessage",
    "HiddenAvpRejected",
    "InvalidHeader",
    "IpPacket",
    "L2tpHeader",
    "MandatoryUnknownAvp",
    "MessageType",
    "PppFrame",
    "PppProtocol",
    "Truncated",
    "UnknownProtocol",
    "ValueTooLong",
    "classify_avp",
    "decode_avp",
    "decode_header",
    "decode_ip",
    "decode_message",
    "decode_ppp",
    "encode_avp",
    "encode_header",
    "encode_ip",
    "encode_message",
    "encode_ppp",
]
