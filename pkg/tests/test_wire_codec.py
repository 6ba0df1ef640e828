from __future__ import annotations

import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swforge.wire import l2tp
from swforge.wire.l2tp import (
    Avp,
    AvpType,
    BadVersion,
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
from swforge.wire.ppp import PppFrame, PppProtocol, UnknownProtocol, decode_ppp, encode_ppp
from swforge.wire.relevance import AvpRelevance, check_emitted, classify_avp, ignorable_avps


def bits(pattern: str) -> int:
    """Independent oracle: assemble a word from a '0'/'1' string, spaces ignored."""
    value = 0
    for ch in pattern.replace(" ", ""):
        value = value * 2 + (ch == "1")
    return value


# bit positions per RFC 2661 3.1:  T L x x S x O P x x x x Ver(4)
CONTROL_FLAGS = bits("1 1 0 0 1 0 0 0 0 0 0 0 0010")
DATA_FLAGS = bits("0 0 0 0 0 0 0 0 0 0 0 0 0010")


class TestHeader:
    def test_control_header_first_word(self):
        h = L2tpHeader.control(tunnel_id=0, session_id=0, ns=0, nr=0, length=20)
        raw = encode_header(h)
        assert CONTROL_FLAGS == 0xC802
        assert raw[:2] == CONTROL_FLAGS.to_bytes(2, "big")
        assert raw == bytes.fromhex("c802 0014 0000 0000 0000 0000")

    def test_data_header_no_optional_fields(self):
        h = L2tpHeader(is_control=False, has_length=False, has_sequence=False, tunnel_id=5, session_id=9)
        raw = encode_header(h)
        assert len(raw) == 6
        assert raw[:2] == DATA_FLAGS.to_bytes(2, "big") == b"\x00\x02"
        assert raw[2:] == b"\x00\x05\x00\x09"

    def test_version_3_rejected(self):
        with pytest.raises(InvalidHeader):
            encode_header(L2tpHeader(is_control=False, has_length=False, has_sequence=False, version=3))

    def test_decode_rejects_other_versions(self):
        with pytest.raises(BadVersion):
            decode_header(b"\xc8\x03\x00\x0c" + bytes(8))

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(has_length=False, has_sequence=True, ns=0, nr=0),
            dict(has_length=True, has_sequence=False, length=6),
            dict(has_length=True, has_sequence=True, length=12, ns=0, nr=0, priority=True),
            dict(has_length=True, has_sequence=True, length=14, ns=0, nr=0, has_offset=True),
        ],
    )
    def test_control_discipline(self, kwargs):
        with pytest.raises(InvalidHeader):
            encode_header(L2tpHeader(is_control=True, **kwargs))

    @given(
        is_control=st.booleans(),
        has_length=st.booleans(),
        has_sequence=st.booleans(),
        has_offset=st.booleans(),
        priority=st.booleans(),
        tid=st.integers(0, 0xFFFF),
        sid=st.integers(0, 0xFFFF),
        ns=st.integers(0, 0xFFFF),
        nr=st.integers(0, 0xFFFF),
        length=st.integers(0, 0xFFFF),
        offset=st.integers(0, 8),
    )
    def test_roundtrip(self, is_control, has_length, has_sequence, has_offset, priority, tid, sid, ns, nr, length, offset):
        if is_control:
            has_length, has_sequence, has_offset, priority = True, True, False, False
        h = L2tpHeader(
            is_control=is_control,
            has_length=has_length,
            has_sequence=has_sequence,
            has_offset=has_offset,
            priority=priority,
            length=length if has_length else None,
            tunnel_id=tid,
            session_id=sid,
            ns=ns if has_sequence else None,
            nr=nr if has_sequence else None,
            offset_size=offset if has_offset else 0,
        )
        raw = encode_header(h)
        assert len(raw) == h.encoded_len
        assert decode_header(raw) == h


class TestAvp:
    def test_message_type_sccrq(self):
        raw = encode_avp(l2tp.message_type_avp(MessageType.SCCRQ))
        # M=1 H=0 len=8 | vendor 0 | type 0 | value 1
        oracle = struct.pack("!HHHH", bits("1 0 0000 0000001000"), 0, 0, 1)
        assert raw == oracle == bytes.fromhex("8008 0000 0000 0001")

    def test_empty_vendor_avp_roundtrip(self):
        a = Avp(attribute_type=77, value=b"", vendor_id=311)
        raw = encode_avp(a)
        assert len(raw) == 6
        assert decode_avp(raw) == (a, 6)

    def test_value_too_long(self):
        with pytest.raises(ValueTooLong):
            encode_avp(Avp(AvpType.HOST_NAME, bytes(1018)))

    def test_max_value_fits(self):
        raw = encode_avp(Avp(AvpType.HOST_NAME, bytes(1017)))
        assert len(raw) == 1023
        assert decode_avp(raw)[0].value == bytes(1017)

    @given(
        attr=st.integers(0, 0xFFFF),
        vendor=st.integers(0, 0xFFFF),
        mandatory=st.booleans(),
        hidden=st.booleans(),
        value=st.binary(max_size=64),
    )
    def test_roundtrip(self, attr, vendor, mandatory, hidden, value):
        a = Avp(attr, value, mandatory, hidden, vendor)
        raw = encode_avp(a)
        assert len(raw) == 6 + len(value)
        assert decode_avp(raw) == (a, len(raw))


def minimal_sccrq(tunnel: int = 0x1234, host: str = "si") -> ControlMessage:
    return ControlMessage.build(
        MessageType.SCCRQ,
        [
            l2tp.protocol_version_avp(),
            l2tp.avp_str(AvpType.HOST_NAME, host),
            l2tp.avp_u32(AvpType.FRAMING_CAPABILITIES, l2tp.FRAMING_SYNC | l2tp.FRAMING_ASYNC),
            l2tp.avp_u16(AvpType.ASSIGNED_TUNNEL_ID, tunnel),
        ],
    )


class TestMessage:
    def test_minimal_sccrq_matches_golden(self, golden):
        msg = minimal_sccrq()
        assert encode_message(msg) == golden("sccrq_minimal.hex")
        decoded = decode_message(golden("sccrq_minimal.hex"))
        assert decoded.message_type is MessageType.SCCRQ
        assert len(decoded.avps) == 5
        assert decoded == msg

    def test_zlb(self, golden):
        msg = decode_message(golden("zlb.hex"))
        assert msg.message_type is MessageType.ZLB
        assert msg.avps == ()
        assert (msg.header.tunnel_id, msg.ns, msg.nr) == (0x1234, 1, 2)
        assert encode_message(ControlMessage.build(MessageType.ZLB, tunnel_id=0x1234, ns=1, nr=2)) == golden("zlb.hex")

    def test_hello(self, golden):
        msg = decode_message(golden("hello.hex"))
        assert msg.message_type is MessageType.HELLO
        assert (msg.ns, msg.nr) == (5, 3)

    def test_hidden_avp_rejected(self, golden):
        with pytest.raises(HiddenAvpRejected):
            decode_message(golden("sccrq_hidden.hex"))

    def test_unknown_optional_avp_retained(self, golden):
        msg = decode_message(golden("sccrq_vendor_ignorable.hex"))
        assert len(msg.avps) == 6
        assert [a.vendor_id for a in ignorable_avps(msg)] == [9]

    def test_unknown_mandatory_avp(self):
        msg = ControlMessage.build(MessageType.HELLO, [Avp(200, b"x", mandatory=True)])
        with pytest.raises(MandatoryUnknownAvp) as exc:
            decode_message(encode_message(msg))
        assert exc.value.attribute_type == 200

    def test_truncated(self, golden):
        raw = golden("sccrq_minimal.hex")
        with pytest.raises(Truncated):
            decode_message(raw[:-3])
        with pytest.raises(Truncated):
            decode_message(raw[:8])

    def test_first_avp_must_be_message_type(self):
        with pytest.raises(l2tp.CodecError):
            ControlMessage(L2tpHeader.control(0, 0, 0, 0, 20), MessageType.HELLO, (Avp(AvpType.HOST_NAME, b"x"),))


EMITTABLE_TYPES = [t for t in MessageType if t is not MessageType.ZLB]
known_avp = st.builds(
    Avp,
    attribute_type=st.sampled_from([int(t) for t in AvpType]),
    value=st.binary(max_size=40),
    mandatory=st.booleans(),
    hidden=st.just(False),
    vendor_id=st.just(0),
)
vendor_avp = st.builds(
    Avp,
    attribute_type=st.integers(0, 0xFFFF),
    value=st.binary(max_size=40),
    mandatory=st.just(False),
    hidden=st.just(False),
    vendor_id=st.integers(1, 0xFFFF),
)
control_messages = st.builds(
    ControlMessage.build,
    st.sampled_from(EMITTABLE_TYPES),
    st.lists(st.one_of(known_avp, vendor_avp), max_size=12),
    tunnel_id=st.integers(0, 0xFFFF),
    session_id=st.integers(0, 0xFFFF),
    ns=st.integers(0, 0xFFFF),
    nr=st.integers(0, 0xFFFF),
)


@settings(max_examples=300)
@given(control_messages)
def test_message_roundtrip(msg):
    assert decode_message(encode_message(msg)) == msg


class TestRelevance:
    def test_sccrq_host_name_required(self):
        assert classify_avp(MessageType.SCCRQ, AvpType.HOST_NAME) is AvpRelevance.Required

    def test_sccrq_rws_optional(self):
        assert classify_avp(MessageType.SCCRQ, AvpType.RECEIVE_WINDOW_SIZE) is AvpRelevance.Optional

    def test_sccrq_bearer_capabilities_not_relevant(self):
        assert classify_avp(MessageType.SCCRQ, AvpType.BEARER_CAPABILITIES) is AvpRelevance.NotRelevant

    @given(st.integers(0, 0xFFFF), st.integers(0, 0xFFFF), st.integers(0, 0xFFFF))
    def test_total(self, mt, attr, vendor):
        assert isinstance(classify_avp(mt, attr, vendor), AvpRelevance)

    def test_required_sets_exactly(self):
        # hand copy of the establishment tables plus the per-message additions
        expected = {
            MessageType.SCCRQ: {"MESSAGE_TYPE", "PROTOCOL_VERSION", "HOST_NAME", "FRAMING_CAPABILITIES", "ASSIGNED_TUNNEL_ID"},
            MessageType.SCCRP: {"MESSAGE_TYPE", "PROTOCOL_VERSION", "HOST_NAME", "FRAMING_CAPABILITIES", "ASSIGNED_TUNNEL_ID"},
            MessageType.SCCCN: {"MESSAGE_TYPE"},
            MessageType.ICRQ: {"MESSAGE_TYPE", "ASSIGNED_SESSION_ID", "CALL_SERIAL_NUMBER"},
            MessageType.ICRP: {"MESSAGE_TYPE", "ASSIGNED_SESSION_ID"},
            MessageType.ICCN: {"MESSAGE_TYPE", "FRAMING_TYPE", "TX_CONNECT_SPEED"},
        }
        for mt, names in expected.items():
            got = {a.name for a in AvpType if classify_avp(mt, a) is AvpRelevance.Required}
            assert got == names, mt

    def test_outgoing_call_messages_irrelevant(self):
        for mt in (MessageType.OCRQ, MessageType.OCRP, MessageType.OCCN):
            assert all(classify_avp(mt, a) is AvpRelevance.NotRelevant for a in AvpType)

    def test_check_emitted(self):
        check_emitted(minimal_sccrq())
        bad = ControlMessage.build(MessageType.HELLO, [l2tp.avp_u32(AvpType.BEARER_CAPABILITIES, 0)])
        with pytest.raises(ValueError):
            check_emitted(bad)


# IANA PPP DLL protocol numbers, typed in from the registry
PPP_REGISTRY = {
    PppProtocol.LCP: 0xC021,
    PppProtocol.CHAP: 0xC223,
    PppProtocol.IPCP: 0x8021,
    PppProtocol.IPV6CP: 0x8057,
    PppProtocol.IPV4: 0x0021,
    PppProtocol.IPV6: 0x0057,
}


class TestPpp:
    def test_lcp_prefix(self):
        raw = encode_ppp(PppFrame(PppProtocol.LCP, b"\x01\x01\x00\x04"))
        assert raw[:2] == b"\xff\x03"
        assert raw[2:4] == PPP_REGISTRY[PppProtocol.LCP].to_bytes(2, "big") == b"\xc0\x21"

    def test_lcp_keeps_address_control_under_acfc(self):
        raw = encode_ppp(PppFrame(PppProtocol.LCP, b"\x01\x01\x00\x04"), acfc=True)
        assert raw[:4] == b"\xff\x03\xc0\x21"

    def test_ipv6_prefix(self):
        raw = encode_ppp(PppFrame(PppProtocol.IPV6, b"\x60" + bytes(39)))
        assert raw[:4] == b"\xff\x03\x00\x57"

    def test_acfc_drops_two_bytes(self):
        f = PppFrame(PppProtocol.IPV6, b"\x60" + bytes(39))
        assert len(encode_ppp(f)) - len(encode_ppp(f, acfc=True)) == 2
        assert encode_ppp(f, acfc=True)[:2] == b"\x00\x57"

    def test_truncated(self):
        with pytest.raises(Truncated):
            decode_ppp(b"\xc0")
        with pytest.raises(Truncated):
            decode_ppp(b"\xff\x03\xc0")

    def test_unknown_protocol(self):
        with pytest.raises(UnknownProtocol):
            decode_ppp(b"\x80\xfd\x01")

    @given(st.sampled_from(list(PppProtocol)), st.binary(max_size=100), st.booleans())
    def test_roundtrip(self, proto, payload, acfc):
        f = PppFrame(proto, payload)
        assert decode_ppp(encode_ppp(f, acfc)) == f

    def test_golden_data_frame(self, golden):
        raw = golden("data_lcp_echo.hex")
        h = decode_header(raw)
        assert (h.is_control, h.has_length, h.length, h.tunnel_id, h.session_id) == (False, True, 22, 5, 9)
        f = decode_ppp(raw[h.encoded_len :])
        assert f.protocol is PppProtocol.LCP
        assert f.payload[0] == 9


def test_golden_fixtures_stable(golden):
    names = ["sccrq_minimal.hex", "zlb.hex", "hello.hex", "sccrq_vendor_ignorable.hex"]
    first = [decode_message(golden(n)) for n in names]
    second = [decode_message(golden(n)) for n in names]
    assert first == second
    for msg, name in zip(first, names):
        assert encode_message(msg) == golden(name)
