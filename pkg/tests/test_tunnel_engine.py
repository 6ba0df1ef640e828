from __future__ import annotations

import hashlib
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swforge.trace import seconds
from swforge.tunnel import (
    CcState,
    DeliverPayload,
    DownReason,
    KeepaliveConfig,
    PacketTooBig,
    Send,
    SendData,
    SessionNotUp,
    SessionState,
    SessionUp,
    TunnelConfig,
    TunnelDown,
    TunnelEndpointState,
    WrongAddressFamily,
    compute_response,
    sc_accept,
    si_start,
)
from swforge.tunnel.config import ConfigError
from swforge.wire import l2tp, relevance
from swforge.wire.ip import Af, synthetic_packet
from swforge.wire.l2tp import AvpType, ControlMessage, MessageType

SI_ADDR = "2001:db8::1"
HOST_ADDR = "2001:db8:1::5"


def sends(actions) -> list[ControlMessage]:
    return [a.message for a in actions if isinstance(a, Send)]


def wire(msg: ControlMessage) -> bytes:
    return l2tp.encode_message(msg)


def exchange(a: TunnelEndpointState, b: TunnelEndpointState, actions, now=0, log=None):
    """Ping-pong messages between two engines until both go quiet."""
    queue = [(b, m) for m in sends(actions)]
    events = list(actions)
    while queue:
        dst, msg = queue.pop(0)
        if log is not None:
            log.append(msg.message_type)
        out = dst.receive(wire(msg), now)
        events += out
        other = a if dst is b else b
        queue += [(other, m) for m in sends(out)]
    return events


def established(si_cfg=None, sc_cfg=None, seed=7):
    rng = random.Random(seed)
    si, acts = si_start(si_cfg or TunnelConfig(), rng)
    sc = sc_accept(sc_cfg or TunnelConfig(host_name="sc"), rng)
    events = exchange(si, sc, acts)
    return si, sc, events


class TestSiStart:
    def test_default_sccrq(self):
        st_, acts = si_start(TunnelConfig(), random.Random(1))
        (msg,) = sends(acts)
        assert msg.message_type is MessageType.SCCRQ
        assert {a.attribute_type for a in msg.avps} == relevance.required_avps(MessageType.SCCRQ)
        assert len(msg.avps) == 5
        assert l2tp.u32_value(msg.value(AvpType.FRAMING_CAPABILITIES)) == 0b11
        assert st_.cc_state is CcState.WaitCtlReply

    def test_secret_adds_challenge(self):
        _, acts = si_start(TunnelConfig(secret=b"s3cret"), random.Random(1))
        challenge = sends(acts)[0].value(AvpType.CHALLENGE)
        assert challenge is not None and len(challenge) == 16

    def test_receive_window(self):
        _, acts = si_start(TunnelConfig(receive_window=4), random.Random(1))
        assert l2tp.u16_value(sends(acts)[0].value(AvpType.RECEIVE_WINDOW_SIZE)) == 4

    def test_sc_cannot_start(self):
        sc = sc_accept(TunnelConfig(), random.Random(1))
        with pytest.raises(Exception):
            sc.start(0)


class TestEstablishment:
    def test_six_message_order(self):
        rng = random.Random(3)
        si, acts = si_start(TunnelConfig(), rng)
        sc = sc_accept(TunnelConfig(host_name="sc"), rng)
        log: list[MessageType] = []
        events = exchange(si, sc, acts, log=log)
        order = [m for m in log if m is not MessageType.ZLB]
        assert order == [
            MessageType.SCCRQ,
            MessageType.SCCRP,
            MessageType.SCCCN,
            MessageType.ICRQ,
            MessageType.ICRP,
            MessageType.ICCN,
        ]
        assert sum(isinstance(e, SessionUp) for e in events) == 2
        assert si.session_up and sc.session_up
        assert si.remote_session_id == sc.local_session_id
        assert sc.remote_session_id == si.local_session_id

    def test_sccrp_required_avps(self):
        rng = random.Random(3)
        si, acts = si_start(TunnelConfig(), rng)
        sc = sc_accept(TunnelConfig(host_name="sc"), rng)
        (reply,) = sends(sc.receive(wire(sends(acts)[0]), 0))
        assert reply.message_type is MessageType.SCCRP
        assert {a.attribute_type for a in reply.avps} == relevance.required_avps(MessageType.SCCRP)

    def test_iccn_values(self):
        si, sc, events = established()
        iccn = [m for m in sends(events) if m.message_type is MessageType.ICCN][0]
        assert l2tp.u32_value(iccn.value(AvpType.FRAMING_TYPE)) == 1
        assert l2tp.u32_value(iccn.value(AvpType.TX_CONNECT_SPEED)) == 0

    def test_iccn_connect_speed_ignored(self):
        rng = random.Random(4)
        si, acts = si_start(TunnelConfig(), rng)
        sc = sc_accept(TunnelConfig(), rng)
        queue = sends(acts)
        # drive by hand until SC has answered the ICRQ
        for_sc = queue
        for_si = []
        for _ in range(3):
            for_si = [m for x in for_sc for m in sends(sc.receive(wire(x), 0))]
            for_sc = [m for x in for_si for m in sends(si.receive(wire(x), 0))]
            if sc.session_state is SessionState.WaitConnect:
                break
        assert sc.session_state is SessionState.WaitConnect
        icrp = [m for m in for_si if m.message_type is MessageType.ICRP]
        if icrp:
            si.receive(wire(icrp[0]), 0)
        iccn = ControlMessage.build(
            MessageType.ICCN,
            [l2tp.avp_u32(AvpType.FRAMING_TYPE, 1), l2tp.avp_u32(AvpType.TX_CONNECT_SPEED, 12345)],
            tunnel_id=sc.local_tunnel_id,
            session_id=sc.local_session_id,
            ns=sc.nr,
            nr=sc.ns,
        )
        out = sc.receive(wire(iccn), 0)
        assert any(isinstance(a, SessionUp) for a in out)
        assert sc.session_up

    def test_tunnel_auth_success(self):
        si, sc, _ = established(TunnelConfig(secret=b"k"), TunnelConfig(host_name="sc", secret=b"k"))
        assert si.session_up and sc.session_up

    def test_tunnel_auth_wrong_secret(self):
        si, sc, events = established(TunnelConfig(secret=b"k"), TunnelConfig(host_name="sc", secret=b"other"))
        downs = [e for e in events if isinstance(e, TunnelDown)]
        assert downs and downs[0].reason is DownReason.AUTH_FAILURE
        stop = [m for m in sends(events) if m.message_type is MessageType.StopCCN][0]
        assert l2tp.parse_result_code(stop.value(AvpType.RESULT_CODE))[0] == 4
        assert not si.session_up

    def test_every_emitted_message_is_clean(self):
        _, _, events = established(TunnelConfig(secret=b"k", receive_window=8), TunnelConfig(secret=b"k"))
        for m in sends(events):
            assert not relevance.missing_required(m)
            for a in m.avps:
                assert relevance.classify_avp(m.message_type, a.attribute_type) is not relevance.AvpRelevance.NotRelevant


def inject(engine: TunnelEndpointState, mt: MessageType, avps=(), now=0):
    msg = ControlMessage.build(mt, list(avps), tunnel_id=engine.local_tunnel_id, ns=engine.nr, nr=engine.ns)
    return engine.receive(wire(msg), now)


class TestViolations:
    @pytest.mark.parametrize("mt", [MessageType.OCRQ, MessageType.OCRP, MessageType.OCCN])
    def test_outgoing_call_rejected(self, mt):
        si, sc, _ = established()
        out = inject(si, mt)
        stop = [m for m in sends(out) if m.message_type is MessageType.StopCCN]
        assert stop and l2tp.parse_result_code(stop[0].value(AvpType.RESULT_CODE))[0] == 7
        assert si.cc_state is CcState.Stopping
        assert any(isinstance(a, TunnelDown) and a.reason is DownReason.PROTOCOL_VIOLATION for a in out)

    def test_icrq_before_scccn(self):
        rng = random.Random(2)
        si, acts = si_start(TunnelConfig(), rng)
        sc = sc_accept(TunnelConfig(), rng)
        sc.receive(wire(sends(acts)[0]), 0)
        out = inject(
            sc,
            MessageType.ICRQ,
            [l2tp.avp_u16(AvpType.ASSIGNED_SESSION_ID, 9), l2tp.avp_u32(AvpType.CALL_SERIAL_NUMBER, 1)],
        )
        assert MessageType.StopCCN in [m.message_type for m in sends(out)]

    def test_second_session_refused(self):
        si, sc, _ = established()
        out = inject(
            sc,
            MessageType.ICRQ,
            [l2tp.avp_u16(AvpType.ASSIGNED_SESSION_ID, 9), l2tp.avp_u32(AvpType.CALL_SERIAL_NUMBER, 2)],
        )
        assert MessageType.StopCCN in [m.message_type for m in sends(out)]
        assert sc.local_session_id != 0 and sc.session_state is SessionState.NoSession

    def test_peer_stopccn(self):
        si, sc, _ = established()
        out = inject(
            si,
            MessageType.StopCCN,
            [l2tp.avp_u16(AvpType.ASSIGNED_TUNNEL_ID, sc.local_tunnel_id), l2tp.result_code_avp(1)],
        )
        assert si.cc_state is CcState.Dead
        assert [m.message_type for m in sends(out)] == [MessageType.ZLB]
        assert any(isinstance(a, TunnelDown) and a.reason is DownReason.PEER_STOPCCN for a in out)

    def test_hidden_avp_tears_down(self):
        si, sc, _ = established()
        msg = ControlMessage.build(MessageType.HELLO, tunnel_id=si.local_tunnel_id, ns=si.nr, nr=si.ns)
        raw = bytearray(wire(msg))
        raw += l2tp.encode_avp(l2tp.Avp(AvpType.HOST_NAME, b"x", mandatory=True, hidden=True))
        raw[2:4] = len(raw).to_bytes(2, "big")
        out = si.receive(bytes(raw), 0)
        assert any(isinstance(a, TunnelDown) and a.reason is DownReason.HIDDEN_AVP for a in out)


class TestTimers:
    def test_dead_end_schedule(self):
        si, sc, _ = established()
        assert si.next_deadline() == seconds(60)
        sent_at = []
        down_at = None
        now = si.next_deadline()
        while now is not None and down_at is None:
            for a in si.on_timer(now):
                if isinstance(a, Send):
                    sent_at.append((now, a.message.message_type, a.retransmit))
                if isinstance(a, TunnelDown):
                    down_at = (now, a.reason)
            now = si.next_deadline()
        assert sent_at == [
            (seconds(60), MessageType.HELLO, False),
            (seconds(61), MessageType.HELLO, True),
            (seconds(63), MessageType.HELLO, True),
            (seconds(67), MessageType.HELLO, True),
            (seconds(75), MessageType.HELLO, True),
        ]
        assert down_at == (seconds(83), DownReason.DEAD_PEER)
        assert si.cc_state is CcState.Dead

    def test_dead_end_arithmetic(self):
        assert KeepaliveConfig().dead_end_time == 60 + 1 + 2 + 4 + 8 + 8 == 83

    def test_data_pushes_hello(self):
        si, sc, _ = established()
        si.mtu = sc.mtu = 1460
        pkt = synthetic_packet(HOST_ADDR, SI_ADDR, 100)
        si.receive(sc.encapsulate(pkt).datagram, seconds(59))
        assert si.next_deadline() == seconds(119)

    def test_control_rx_pushes_hello(self):
        si, sc, _ = established()
        out = sc.on_timer(seconds(60))
        (hello,) = sends(out)
        si.receive(wire(hello), seconds(60))
        assert si.next_deadline() == seconds(120)

    def test_sccrq_retransmitted_after_one_second(self):
        si, acts = si_start(TunnelConfig(), random.Random(1))
        assert si.next_deadline() == seconds(1)
        out = si.on_timer(seconds(1))
        (again,) = [a for a in out if isinstance(a, Send)]
        assert again.retransmit and again.message.message_type is MessageType.SCCRQ
        assert si.next_deadline() == seconds(3)

    def test_hello_disabled(self):
        si, sc, _ = established(TunnelConfig(keepalive=KeepaliveConfig(hello_interval=None)))
        assert si.next_deadline() is None

    def test_echo_interval_bounds(self):
        KeepaliveConfig(lcp_echo_enabled=True, lcp_echo_interval=10)
        KeepaliveConfig(lcp_echo_enabled=True, lcp_echo_interval=60)
        with pytest.raises(ConfigError):
            KeepaliveConfig(lcp_echo_enabled=True, lcp_echo_interval=9)
        with pytest.raises(ConfigError):
            KeepaliveConfig(hello_interval=30, lcp_echo_enabled=True, lcp_echo_interval=45)


class TestReliability:
    def test_duplicate_is_reacked(self):
        rng = random.Random(5)
        si, acts = si_start(TunnelConfig(), rng)
        sc = sc_accept(TunnelConfig(), rng)
        sccrq = sends(acts)[0]
        sc.receive(wire(sccrq), 0)
        out = sc.receive(wire(sccrq), seconds(1))
        assert [m.message_type for m in sends(out)] == [MessageType.ZLB]
        assert sc.nr == 1

    def test_out_of_order_dropped(self):
        si, sc, _ = established()
        nr = si.nr
        msg = ControlMessage.build(MessageType.HELLO, tunnel_id=si.local_tunnel_id, ns=(nr + 3) % 65536, nr=si.ns)
        assert sends(si.receive(wire(msg), 0)) == []
        assert si.nr == nr

    def test_ns_increments_per_message(self):
        si, sc, events = established()
        from_si = [m for m in sends(events) if m.header.tunnel_id in (0, sc.local_tunnel_id) and m.message_type is not MessageType.ZLB]
        assert [m.ns for m in from_si] == list(range(len(from_si)))

    def test_window_limits_outstanding(self):
        si, sc, _ = established()
        si.peer_window = 1
        si.on_timer(seconds(60))
        si.teardown(DownReason.ADMIN, seconds(60))
        assert len(si.outstanding) <= 1

    def test_sequence_wrap(self):
        from swforge.tunnel.engine import seq_lt

        assert seq_lt(65535, 0)
        assert not seq_lt(0, 65535)
        assert seq_lt(3, 4)


class TestAuthDigest:
    def test_md5_oracle(self):
        secret, challenge = b"topsecret", bytes(range(16))
        oracle = hashlib.new("md5")
        oracle.update(b"\x02")
        oracle.update(secret)
        oracle.update(challenge)
        got = compute_response(secret, challenge, MessageType.SCCRP)
        assert got == oracle.digest() and len(got) == 16

    def test_deterministic(self):
        assert compute_response(b"a", b"b", 3) == compute_response(b"a", b"b", 3)

    def test_wrong_secret_differs(self):
        assert compute_response(b"a", b"c", 2) != compute_response(b"b", b"c", 2)

    def test_empty_secret(self):
        with pytest.raises(ValueError):
            compute_response(b"", b"c", 2)


class TestTeardown:
    def test_admin_stop(self):
        si, sc, _ = established()
        out = si.teardown(DownReason.ADMIN, seconds(5))
        (stop,) = sends(out)
        assert stop.message_type is MessageType.StopCCN
        assert l2tp.u16_value(stop.value(AvpType.ASSIGNED_TUNNEL_ID)) == si.local_tunnel_id
        assert si.cc_state is CcState.Stopping and si.session_state is SessionState.NoSession
        peer_out = sc.receive(wire(stop), seconds(5))
        assert sc.cc_state is CcState.Dead and sc.session_state is SessionState.NoSession
        (zlb,) = sends(peer_out)
        si.receive(wire(zlb), seconds(5))
        assert si.cc_state is CcState.Dead

    def test_stopping_dies_on_exhaustion(self):
        si, sc, _ = established()
        si.teardown(DownReason.ADMIN, 0)
        now = si.next_deadline()
        while now is not None:
            si.on_timer(now)
            now = si.next_deadline()
        assert si.cc_state is CcState.Dead

    def test_idempotent(self):
        si, sc, _ = established()
        si.teardown(DownReason.ADMIN, 0)
        assert si.teardown(DownReason.ADMIN, 0) == []
        si.cc_state = CcState.Dead
        assert si.teardown(DownReason.ADMIN, 0) == []

    def test_dead_peer_local_only(self):
        si, _, _ = established()
        out = si.teardown(DownReason.DEAD_PEER, 0)
        assert sends(out) == []
        assert si.cc_state is CcState.Dead


class TestDataPath:
    def setup_method(self):
        self.si, self.sc, _ = established()
        self.si.mtu = self.sc.mtu = 1460

    def test_mtu_boundary(self):
        ok = self.si.encapsulate(synthetic_packet(SI_ADDR, HOST_ADDR, 1460))
        assert isinstance(ok, SendData)
        with pytest.raises(PacketTooBig):
            self.si.encapsulate(synthetic_packet(SI_ADDR, HOST_ADDR, 1461))

    def test_wrong_family(self):
        with pytest.raises(WrongAddressFamily):
            self.si.encapsulate(synthetic_packet("192.0.2.1", "198.51.100.1", 100))
        assert self.si.stats.wrong_af_drops == 1

    def test_session_not_up(self):
        si, _ = si_start(TunnelConfig(), random.Random(1))
        with pytest.raises(SessionNotUp):
            si.encapsulate(synthetic_packet(SI_ADDR, HOST_ADDR, 100))

    def test_counters(self):
        p = synthetic_packet(SI_ADDR, HOST_ADDR, 300)
        out = self.si.encapsulate(p)
        self.sc.receive(out.datagram, 0)
        assert self.si.stats.per_af[Af.IPV6].tx_octets == 300
        assert self.sc.stats.per_af[Af.IPV6].rx_octets == 300
        assert self.sc.stats.per_af[Af.IPV4].rx_octets == 0

    @settings(max_examples=50)
    @given(size=st.integers(min_value=40, max_value=1460))
    def test_round_trip(self, size):
        p = synthetic_packet(SI_ADDR, HOST_ADDR, size)
        out = self.si.encapsulate(p)
        assert out.datagram[:2] == b"\x40\x02"
        (d,) = self.sc.receive(out.datagram, 0)
        assert d == DeliverPayload(Af.IPV6, p)
        assert self.sc.decapsulate(out.datagram).payload == p

    def test_foreign_session_ignored(self):
        raw = l2tp.data_header(self.sc.local_tunnel_id, (self.sc.local_session_id + 1) % 65536 or 1, 2) + b"\x00\x57"
        assert self.sc.receive(raw, 0) == []


def test_role_invariant_only_si_sends_sccrq_icrq():
    _, sc, events = established()
    for m in sends(events):
        if m.message_type in (MessageType.SCCRQ, MessageType.ICRQ):
            # addressed to the SC (SCCRQ precedes any assigned id), so the SI sent it
            assert m.header.tunnel_id in (0, sc.local_tunnel_id)
