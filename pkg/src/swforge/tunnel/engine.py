"""L2TPv2 control-connection endpoint (LCCE) for the Softwire initiator and concentrator.

An endpoint owns one control connection and at most one session. Every entry
point takes the current virtual time and returns a list of inert actions;
the caller performs the I/O.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import random
from dataclasses import dataclass, field

from ..trace import seconds
from ..wire import l2tp, relevance
from ..wire.ip import Af, ip_version
from ..wire.l2tp import AvpType, ControlMessage, MessageType
from ..wire.ppp import PppFrame, PppProtocol, decode_ppp, encode_ppp
from .config import TunnelConfig

SEQ_MOD = 0x10000
DEFAULT_PEER_WINDOW = 4


class Role(enum.Enum):
    SI = "SI"
    SC = "SC"


class CcState(enum.Enum):
    Idle = "Idle"
    WaitCtlReply = "WaitCtlReply"
    WaitCtlConn = "WaitCtlConn"
    Established = "Established"
    Stopping = "Stopping"
    Dead = "Dead"


class SessionState(enum.Enum):
    NoSession = "None"
    WaitReply = "WaitReply"
    WaitConnect = "WaitConnect"
    Established = "Established"


class DownReason(enum.Enum):
    ADMIN = "admin"
    DEAD_PEER = "dead-peer"
    PEER_STOPCCN = "peer-stopccn"
    PROTOCOL_VIOLATION = "protocol-violation"
    AUTH_FAILURE = "auth-failure"
    BAD_VERSION = "bad-version"
    UNKNOWN_MANDATORY_AVP = "unknown-mandatory-avp"
    HIDDEN_AVP = "hidden-avp"
    SESSION_CLOSED = "session-closed"
    PPP_FAILURE = "ppp-failure"


# StopCCN Result Code / Error Code per reason (RFC 2661 section 4.4.2):
#   1 general request to clear, 2 general error (see error code),
#   4 requester not authorized, 5 protocol version unsupported, 7 FSM error.
#   Error codes: 3 field value out of range, 8 unknown AVP with M bit.
RESULT_CODES: dict[DownReason, tuple[int, int | None]] = {
    DownReason.ADMIN: (1, None),
    DownReason.SESSION_CLOSED: (1, None),
    DownReason.PPP_FAILURE: (1, None),
    DownReason.PROTOCOL_VIOLATION: (7, None),
    DownReason.AUTH_FAILURE: (4, None),
    DownReason.BAD_VERSION: (5, None),
    DownReason.UNKNOWN_MANDATORY_AVP: (2, 8),
    DownReason.HIDDEN_AVP: (2, 3),
}


class TunnelError(Exception):
    pass


class SessionNotUp(TunnelError):
    pass


class PacketTooBig(TunnelError):
    def __init__(self, size: int, mtu: int):
        self.size = size
        self.mtu = mtu
        super().__init__(f"{size}-byte packet exceeds PPP MTU {mtu}")


class WrongAddressFamily(TunnelError):
    def __init__(self, got: Af, want: Af):
        self.got = got
        self.want = want
        super().__init__(f"IP{got.label} payload on an IP{want.label} softwire")


class ProtocolViolation(TunnelError):
    pass


class AuthFailure(TunnelError):
    pass


# --- actions -------------------------------------------------------------------


@dataclass(frozen=True)
class Send:
    message: ControlMessage
    retransmit: bool = False


@dataclass(frozen=True)
class SendData:
    datagram: bytes
    protocol: PppProtocol
    size: int


@dataclass(frozen=True)
class StartTimer:
    kind: str
    deadline: int


@dataclass(frozen=True)
class SessionUp:
    local_session_id: int
    remote_session_id: int


@dataclass(frozen=True)
class TunnelDown:
    reason: DownReason
    detail: str = ""


@dataclass(frozen=True)
class DeliverPayload:
    af: Af
    packet: bytes


@dataclass(frozen=True)
class DeliverFrame:
    frame: PppFrame


Action = Send | SendData | StartTimer | SessionUp | TunnelDown | DeliverPayload | DeliverFrame


def compute_response(secret: bytes, challenge: bytes, message_type: int) -> bytes:
    """CHAP-style tunnel authentication digest: MD5(type octet | secret | challenge)."""
    if not secret:
        raise ValueError("secret must be non-empty")
    return hashlib.md5(bytes([int(message_type)]) + secret + challenge).digest()


def seq_lt(a: int, b: int) -> bool:
    """a precedes b in 16-bit serial order."""
    return 0 < (b - a) % SEQ_MOD < SEQ_MOD // 2


@dataclass
class Pending:
    message: ControlMessage
    deadline: int
    attempts: int = 0


@dataclass
class AfCounters:
    tx_packets: int = 0
    tx_octets: int = 0
    rx_packets: int = 0
    rx_octets: int = 0


@dataclass
class TunnelStats:
    per_af: dict[Af, AfCounters] = field(default_factory=lambda: {Af.IPV4: AfCounters(), Af.IPV6: AfCounters()})
    control_tx: int = 0
    control_rx: int = 0
    retransmits: int = 0
    wrong_af_drops: int = 0
    too_big_drops: int = 0

    def snapshot(self) -> dict:
        out = {}
        for af, c in self.per_af.items():
            lbl = af.label
            out[f"{lbl}_packets_out"] = c.tx_packets
            out[f"{lbl}_octets_out"] = c.tx_octets
            out[f"{lbl}_packets_in"] = c.rx_packets
            out[f"{lbl}_octets_in"] = c.rx_octets
        out["wrong_af_drops"] = self.wrong_af_drops
        return out


def alloc_id(rng: random.Random, taken: set[int] | frozenset[int] = frozenset()) -> int:
    while True:
        v = rng.randint(1, 0xFFFF)
        if v not in taken:
            return v


class TunnelEndpointState:
    """One LCCE: control channel, reliable delivery, single session, timers."""

    def __init__(self, role: Role, config: TunnelConfig, rng: random.Random, local_tunnel_id: int | None = None):
        self.role = role
        self.config = config
        self.rng = rng
        self.cc_state = CcState.Idle
        self.session_state = SessionState.NoSession
        self.local_tunnel_id = local_tunnel_id or alloc_id(rng)
        self.remote_tunnel_id = 0
        self.local_session_id = 0
        self.remote_session_id = 0
        self.peer_host_name = ""
        self.ns = 0
        self.nr = 0
        self.peer_window = DEFAULT_PEER_WINDOW
        self.outstanding: list[Pending] = []
        self.backlog: list[ControlMessage] = []
        self.last_rx = 0
        self.hello_deadline: int | None = None
        self.challenge_sent: bytes | None = None
        self.call_serial = 0
        self.mtu: int | None = None
        # set from the PPP link once LCP agreed on ACFC both ways
        self.acfc = False
        self.stats = TunnelStats()
        self.down_reason: DownReason | None = None
        self._announced: int | None = None

    # --- introspection ------------------------------------------------------

    @property
    def keepalive(self):
        return self.config.keepalive

    @property
    def session_up(self) -> bool:
        return self.session_state is SessionState.Established and self.cc_state is CcState.Established

    @property
    def alive(self) -> bool:
        return self.cc_state not in (CcState.Dead, CcState.Stopping)

    def next_deadline(self) -> int | None:
        times = [p.deadline for p in self.outstanding]
        if self.hello_deadline is not None and self.cc_state is CcState.Established:
            times.append(self.hello_deadline)
        return min(times) if times else None

    # --- message construction -----------------------------------------------

    def _avps_connection(self, challenge_response: bytes | None) -> list[l2tp.Avp]:
        c = self.config
        avps = [
            l2tp.protocol_version_avp(),
            l2tp.avp_str(AvpType.HOST_NAME, c.host_name),
            l2tp.avp_u32(AvpType.FRAMING_CAPABILITIES, l2tp.FRAMING_SYNC | l2tp.FRAMING_ASYNC),
            l2tp.avp_u16(AvpType.ASSIGNED_TUNNEL_ID, self.local_tunnel_id),
        ]
        if c.receive_window is not None:
            avps.append(l2tp.avp_u16(AvpType.RECEIVE_WINDOW_SIZE, c.receive_window))
        if c.firmware_revision is not None:
            avps.append(l2tp.avp_u16(AvpType.FIRMWARE_REVISION, c.firmware_revision))
        if c.vendor_name is not None:
            avps.append(l2tp.avp_str(AvpType.VENDOR_NAME, c.vendor_name))
        if c.secret is not None:
            self.challenge_sent = self.rng.randbytes(c.challenge_len)
            avps.append(l2tp.avp_bytes(AvpType.CHALLENGE, self.challenge_sent))
        if challenge_response is not None:
            avps.append(l2tp.avp_bytes(AvpType.CHALLENGE_RESPONSE, challenge_response))
        return avps

    def _queue(self, mt: MessageType, avps: list[l2tp.Avp], now: int, session_id: int = 0) -> list[Action]:
        msg = ControlMessage.build(mt, avps, tunnel_id=self.remote_tunnel_id, session_id=session_id, ns=self.ns, nr=self.nr)
        relevance.check_emitted(msg)
        self.ns = (self.ns + 1) % SEQ_MOD
        self.backlog.append(msg)
        return self._pump(now)

    def _pump(self, now: int) -> list[Action]:
        actions: list[Action] = []
        while self.backlog and len(self.outstanding) < self.peer_window:
            msg = self.backlog.pop(0)
            msg = msg.with_sequence(msg.ns, self.nr)
            self.outstanding.append(Pending(msg, now + self.keepalive.backoff(0)))
            self.stats.control_tx += 1
            actions.append(Send(msg))
        return actions

    def _zlb(self) -> Send:
        msg = ControlMessage.build(MessageType.ZLB, tunnel_id=self.remote_tunnel_id, ns=self.ns, nr=self.nr)
        return Send(msg)

    def _timer_actions(self) -> list[Action]:
        d = self.next_deadline()
        if d is None or d == self._announced:
            return []
        self._announced = d
        return [StartTimer("control", d)]

    def _finish(self, actions: list[Action]) -> list[Action]:
        return actions + self._timer_actions()

    # --- SI entry point ---------------------------------------------------------

    def start(self, now: int) -> list[Action]:
        if self.role is not Role.SI:
            raise ProtocolViolation("only the initiator sends SCCRQ")
        if self.cc_state is not CcState.Idle:
            return []
        self.cc_state = CcState.WaitCtlReply
        self.last_rx = now
        return self._finish(self._queue(MessageType.SCCRQ, self._avps_connection(None), now))

    # --- receive path -----------------------------------------------------------

    def receive(self, buf: bytes, now: int) -> list[Action]:
        """Entry point for a raw L2TP datagram addressed to this endpoint."""
        if l2tp.is_control_packet(buf):
            try:
                msg = l2tp.decode_message(buf)
            except l2tp.HiddenAvpRejected as exc:
                return self._finish(self._violation(DownReason.HIDDEN_AVP, str(exc), now))
            except l2tp.MandatoryUnknownAvp as exc:
                return self._finish(self._violation(DownReason.UNKNOWN_MANDATORY_AVP, str(exc), now))
            except l2tp.BadVersion as exc:
                return self._finish(self._violation(DownReason.BAD_VERSION, str(exc), now))
            except l2tp.CodecError as exc:
                return self._finish(self._violation(DownReason.PROTOCOL_VIOLATION, str(exc), now))
            return self.handle_control(msg, now)
        return self._finish(self._receive_data(buf, now))

    def handle_control(self, msg: ControlMessage, now: int) -> list[Action]:
        self.last_rx = now
        self.stats.control_rx += 1
        actions = self._ack(msg.nr, now)
        if self.hello_deadline is not None and self.keepalive.hello_interval is not None:
            self.hello_deadline = now + self._hello_us
        if msg.message_type is MessageType.ZLB:
            return self._finish(actions)
        if msg.ns != self.nr:
            if seq_lt(msg.ns, self.nr):
                actions.append(self._zlb())
            return self._finish(actions)
        self.nr = (self.nr + 1) % SEQ_MOD
        if self.cc_state is CcState.Dead:
            actions.append(self._zlb())
            return self._finish(actions)
        sent_before = self.stats.control_tx
        actions += self._dispatch(msg, now)
        if self.stats.control_tx == sent_before:
            # nothing to piggyback the acknowledgement on
            actions.append(self._zlb())
        return self._finish(actions)

    @property
    def _hello_us(self) -> int:
        return seconds(self.keepalive.hello_interval)

    def _ack(self, nr: int, now: int) -> list[Action]:
        before = len(self.outstanding)
        self.outstanding = [p for p in self.outstanding if not seq_lt(p.message.ns, nr)]
        if self.cc_state is CcState.Stopping and not self.outstanding and before:
            self.cc_state = CcState.Dead
        return self._pump(now)

    def _dispatch(self, msg: ControlMessage, now: int) -> list[Action]:
        mt = msg.message_type
        if mt in (MessageType.OCRQ, MessageType.OCRP, MessageType.OCCN):
            return self._violation(DownReason.PROTOCOL_VIOLATION, f"outgoing call message {mt.name} not permitted", now)
        if mt is MessageType.StopCCN:
            return self._peer_stop(msg)
        if self.cc_state is CcState.Stopping:
            return []
        if mt in (MessageType.WEN, MessageType.SLI):
            return []
        missing = relevance.missing_required(msg)
        if missing:
            names = ", ".join(sorted(m.name for m in missing))
            return self._violation(DownReason.PROTOCOL_VIOLATION, f"{mt.name} missing {names}", now)
        handler = getattr(self, f"_on_{mt.name.lower()}", None)
        if handler is None:
            return self._violation(DownReason.PROTOCOL_VIOLATION, f"unexpected {mt.name}", now)
        return handler(msg, now)

    def _expect(self, role: Role, *states: CcState, what: str) -> None:
        if self.role is not role or self.cc_state not in states:
            raise ProtocolViolation(f"{what} illegal for {self.role.value} in {self.cc_state.value}")

    def _guard(self, fn, msg: ControlMessage, now: int) -> list[Action]:
        try:
            return fn(msg, now)
        except ProtocolViolation as exc:
            return self._violation(DownReason.PROTOCOL_VIOLATION, str(exc), now)
        except AuthFailure as exc:
            return self._violation(DownReason.AUTH_FAILURE, str(exc), now)

    # control connection -------------------------------------------------------

    def _on_sccrq(self, msg, now):
        return self._guard(self._sccrq, msg, now)

    def _sccrq(self, msg: ControlMessage, now: int) -> list[Action]:
        self._expect(Role.SC, CcState.Idle, what="SCCRQ")
        if msg.value(AvpType.PROTOCOL_VERSION) != b"\x01\x00":
            self.remote_tunnel_id = l2tp.u16_value(msg.value(AvpType.ASSIGNED_TUNNEL_ID))
            return self._violation(DownReason.BAD_VERSION, "unsupported protocol version", now)
        self._learn_peer(msg)
        response = None
        challenge = msg.value(AvpType.CHALLENGE)
        if challenge is not None:
            if self.config.secret is None:
                raise AuthFailure("peer sent Challenge but no tunnel secret is configured")
            response = compute_response(self.config.secret, challenge, MessageType.SCCRP)
        self.cc_state = CcState.WaitCtlConn
        self.last_rx = now
        return self._queue(MessageType.SCCRP, self._avps_connection(response), now)

    def _on_sccrp(self, msg, now):
        return self._guard(self._sccrp, msg, now)

    def _sccrp(self, msg: ControlMessage, now: int) -> list[Action]:
        self._expect(Role.SI, CcState.WaitCtlReply, what="SCCRP")
        self._learn_peer(msg)
        self._verify_response(msg, MessageType.SCCRP)
        response = None
        challenge = msg.value(AvpType.CHALLENGE)
        if challenge is not None:
            if self.config.secret is None:
                raise AuthFailure("peer sent Challenge but no tunnel secret is configured")
            response = compute_response(self.config.secret, challenge, MessageType.SCCCN)
        avps = [] if response is None else [l2tp.avp_bytes(AvpType.CHALLENGE_RESPONSE, response)]
        actions = self._queue(MessageType.SCCCN, avps, now)
        self._established(now)
        self.local_session_id = alloc_id(self.rng)
        self.call_serial += 1
        self.session_state = SessionState.WaitReply
        actions += self._queue(
            MessageType.ICRQ,
            [
                l2tp.avp_u16(AvpType.ASSIGNED_SESSION_ID, self.local_session_id),
                l2tp.avp_u32(AvpType.CALL_SERIAL_NUMBER, self.call_serial),
            ],
            now,
        )
        return actions

    def _on_scccn(self, msg, now):
        return self._guard(self._scccn, msg, now)

    def _scccn(self, msg: ControlMessage, now: int) -> list[Action]:
        self._expect(Role.SC, CcState.WaitCtlConn, what="SCCCN")
        self._verify_response(msg, MessageType.SCCCN)
        self._established(now)
        return []

    def _learn_peer(self, msg: ControlMessage) -> None:
        self.remote_tunnel_id = l2tp.u16_value(msg.value(AvpType.ASSIGNED_TUNNEL_ID))
        self.peer_host_name = msg.value(AvpType.HOST_NAME).decode("utf-8", "replace")
        rws = msg.value(AvpType.RECEIVE_WINDOW_SIZE)
        if rws is not None:
            self.peer_window = max(1, l2tp.u16_value(rws))

    def _verify_response(self, msg: ControlMessage, mt: MessageType) -> None:
        if self.challenge_sent is None:
            return
        got = msg.value(AvpType.CHALLENGE_RESPONSE)
        if got is None:
            raise AuthFailure(f"{mt.name} lacks Challenge Response")
        want = compute_response(self.config.secret, self.challenge_sent, mt)
        if not hmac.compare_digest(got, want):
            raise AuthFailure(f"{mt.name} Challenge Response mismatch")
        self.challenge_sent = None

    def _established(self, now: int) -> None:
        self.cc_state = CcState.Established
        if self.keepalive.hello_interval is not None:
            self.hello_deadline = self.last_rx + self._hello_us

    # session ---------------------------------------------------------------------

    def _on_icrq(self, msg, now):
        return self._guard(self._icrq, msg, now)

    def _icrq(self, msg: ControlMessage, now: int) -> list[Action]:
        self._expect(Role.SC, CcState.Established, what="ICRQ")
        if self.session_state is not SessionState.NoSession:
            raise ProtocolViolation("second session requested; a softwire carries exactly one")
        self.remote_session_id = l2tp.u16_value(msg.value(AvpType.ASSIGNED_SESSION_ID))
        self.local_session_id = alloc_id(self.rng)
        self.session_state = SessionState.WaitConnect
        return self._queue(
            MessageType.ICRP,
            [l2tp.avp_u16(AvpType.ASSIGNED_SESSION_ID, self.local_session_id)],
            now,
            session_id=self.remote_session_id,
        )

    def _on_icrp(self, msg, now):
        return self._guard(self._icrp, msg, now)

    def _icrp(self, msg: ControlMessage, now: int) -> list[Action]:
        self._expect(Role.SI, CcState.Established, what="ICRP")
        if self.session_state is not SessionState.WaitReply:
            raise ProtocolViolation(f"ICRP in session state {self.session_state.value}")
        self.remote_session_id = l2tp.u16_value(msg.value(AvpType.ASSIGNED_SESSION_ID))
        actions = self._queue(
            MessageType.ICCN,
            [
                l2tp.avp_u32(AvpType.FRAMING_TYPE, l2tp.FRAMING_SYNC),
                l2tp.avp_u32(AvpType.TX_CONNECT_SPEED, 0),
            ],
            now,
            session_id=self.remote_session_id,
        )
        self.session_state = SessionState.Established
        actions.append(SessionUp(self.local_session_id, self.remote_session_id))
        return actions

    def _on_iccn(self, msg, now):
        return self._guard(self._iccn, msg, now)

    def _iccn(self, msg: ControlMessage, now: int) -> list[Action]:
        self._expect(Role.SC, CcState.Established, what="ICCN")
        if self.session_state is not SessionState.WaitConnect:
            raise ProtocolViolation(f"ICCN in session state {self.session_state.value}")
        # Framing Type and (Tx) Connect Speed carry no meaning here and are ignored
        self.session_state = SessionState.Established
        return [SessionUp(self.local_session_id, self.remote_session_id)]

    def _on_hello(self, msg, now):
        if self.cc_state is not CcState.Established:
            return self._violation(DownReason.PROTOCOL_VIOLATION, "HELLO before establishment", now)
        return []

    def _on_cdn(self, msg: ControlMessage, now: int) -> list[Action]:
        self.session_state = SessionState.NoSession
        return self.teardown(DownReason.SESSION_CLOSED, now, detail="peer sent CDN")

    def _peer_stop(self, msg: ControlMessage) -> list[Action]:
        was_alive = self.alive
        self.outstanding.clear()
        self.backlog.clear()
        self.cc_state = CcState.Dead
        self.session_state = SessionState.NoSession
        self.hello_deadline = None
        detail = ""
        rc = msg.value(AvpType.RESULT_CODE)
        if rc is not None:
            result, error, text = l2tp.parse_result_code(rc)
            detail = f"result={result}" + (f" error={error}" if error is not None else "") + (f" {text}" if text else "")
        if not was_alive:
            return []
        self.down_reason = DownReason.PEER_STOPCCN
        return [TunnelDown(DownReason.PEER_STOPCCN, detail)]

    def _violation(self, reason: DownReason, detail: str, now: int) -> list[Action]:
        return self.teardown(reason, now, detail=detail)

    def hello(self, now: int) -> list[Action]:
        """Queue a HELLO immediately, whatever the idle timer says."""
        if self.cc_state is not CcState.Established:
            return []
        return self._finish(self._queue(MessageType.HELLO, [], now))

    # --- teardown -------------------------------------------------------------------

    def teardown(self, reason: DownReason, now: int, detail: str = "") -> list[Action]:
        """Close session and tunnel with a single StopCCN; idempotent."""
        if self.cc_state in (CcState.Dead, CcState.Stopping):
            return []
        if self.cc_state is CcState.Idle and self.role is Role.SI:
            self.cc_state = CcState.Dead
            return []
        self.session_state = SessionState.NoSession
        self.hello_deadline = None
        self.down_reason = reason
        if reason is DownReason.DEAD_PEER:
            self.outstanding.clear()
            self.backlog.clear()
            self.cc_state = CcState.Dead
            return [TunnelDown(reason, detail)]
        self.outstanding.clear()
        self.backlog.clear()
        result, error = RESULT_CODES.get(reason, (2, 0))
        actions = self._queue(
            MessageType.StopCCN,
            [
                l2tp.avp_u16(AvpType.ASSIGNED_TUNNEL_ID, self.local_tunnel_id),
                l2tp.result_code_avp(result, error, detail[:64]),
            ],
            now,
        )
        self.cc_state = CcState.Stopping
        return actions + [TunnelDown(reason, detail)]

    # --- timers ---------------------------------------------------------------------------

    def on_timer(self, now: int) -> list[Action]:
        actions: list[Action] = []
        self._announced = None
        for p in list(self.outstanding):
            if p.deadline > now or p not in self.outstanding:
                continue
            p.attempts += 1
            if p.attempts >= self.keepalive.max_retransmits:
                if self.cc_state is CcState.Stopping:
                    self.outstanding.clear()
                    self.cc_state = CcState.Dead
                    return self._finish(actions)
                actions += self.teardown(
                    DownReason.DEAD_PEER, now, detail=f"{p.message.name} unacknowledged after {p.attempts} timeouts"
                )
                return self._finish(actions)
            p.deadline = now + self.keepalive.backoff(p.attempts)
            msg = p.message.with_sequence(p.message.ns, self.nr)
            p.message = msg
            self.stats.retransmits += 1
            actions.append(Send(msg, retransmit=True))
        if (
            self.cc_state is CcState.Established
            and self.hello_deadline is not None
            and self.hello_deadline <= now
        ):
            self.hello_deadline = now + self._hello_us
            if not any(p.message.message_type is MessageType.HELLO for p in self.outstanding):
                actions += self._queue(MessageType.HELLO, [], now)
        return self._finish(actions)

    # --- data plane ---------------------------------------------------------------------

    def _data(self, frame: PppFrame) -> bytes:
        ppp = encode_ppp(frame, acfc=self.acfc)
        return l2tp.data_header(self.remote_tunnel_id, self.remote_session_id, len(ppp)) + ppp

    def send_frame(self, frame: PppFrame) -> SendData:
        """Wrap a PPP control frame (LCP, CHAP, NCP) for the session."""
        if self.session_state is not SessionState.Established or not self.alive:
            raise SessionNotUp("session is not established")
        raw = self._data(frame)
        return SendData(raw, frame.protocol, len(frame.payload))

    def encapsulate(self, packet: bytes, af: Af | None = None) -> SendData:
        if not self.session_up:
            raise SessionNotUp("session is not established")
        got = Af(ip_version(packet)) if af is None else Af(af)
        want = self.config.payload_af
        if got is not want:
            self.stats.wrong_af_drops += 1
            raise WrongAddressFamily(got, want)
        mtu = self.mtu
        if mtu is not None and len(packet) > mtu:
            self.stats.too_big_drops += 1
            raise PacketTooBig(len(packet), mtu)
        proto = PppProtocol.IPV6 if want is Af.IPV6 else PppProtocol.IPV4
        c = self.stats.per_af[want]
        c.tx_packets += 1
        c.tx_octets += len(packet)
        return SendData(self._data(PppFrame(proto, packet)), proto, len(packet))

    def decapsulate(self, buf: bytes) -> PppFrame:
        h = l2tp.decode_header(buf)
        if h.is_control:
            raise l2tp.CodecError("control message on data path")
        if h.tunnel_id != self.local_tunnel_id or h.session_id != self.local_session_id:
            raise l2tp.CodecError(f"data for tunnel {h.tunnel_id}/session {h.session_id} not ours")
        end = h.length if h.has_length else len(buf)
        if end > len(buf):
            raise l2tp.Truncated("data message shorter than its length field")
        return decode_ppp(buf[h.encoded_len : end])

    def _receive_data(self, buf: bytes, now: int) -> list[Action]:
        if self.session_state is not SessionState.Established or not self.alive:
            return []
        try:
            frame = self.decapsulate(buf)
        except l2tp.CodecError:
            return []
        self.last_rx = now
        if self.hello_deadline is not None and self.keepalive.hello_interval is not None:
            self.hello_deadline = now + self._hello_us
        if frame.protocol in (PppProtocol.IPV4, PppProtocol.IPV6):
            af = Af.IPV4 if frame.protocol is PppProtocol.IPV4 else Af.IPV6
            if af is not self.config.payload_af:
                self.stats.wrong_af_drops += 1
                return []
            c = self.stats.per_af[af]
            c.rx_packets += 1
            c.rx_octets += len(frame.payload)
            return [DeliverPayload(af, frame.payload)]
        return [DeliverFrame(frame)]


def si_start(config: TunnelConfig, rng: random.Random, now: int = 0) -> tuple[TunnelEndpointState, list[Action]]:
    state = TunnelEndpointState(Role.SI, config, rng)
    return state, state.start(now)


def sc_accept(config: TunnelConfig, rng: random.Random, taken: set[int] | frozenset[int] = frozenset()) -> TunnelEndpointState:
    return TunnelEndpointState(Role.SC, config, rng, alloc_id(rng, taken))
