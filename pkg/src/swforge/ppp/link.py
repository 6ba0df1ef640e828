"""PPP link over a softwire session: LCP, optional CHAP, one NCP, LCP echo.

The link is driven like the tunnel engine: feed it frames and timer ticks,
collect the outputs (frames to send, phase changes, failures).
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import ipaddress
import random
import struct
from dataclasses import dataclass, field
from typing import Callable

from ..trace import seconds
from ..tunnel.config import KeepaliveConfig
from ..wire import ppp as w
from ..wire.ip import Af, IpAddress
from ..wire.l2tp import CodecError
from ..wire.ppp import Code, ControlPacket, Options, PppFrame, PppProtocol
from .mtu import MIN_IPV4_MTU, compute_ppp_mtu

AUTH_CHAP_MD5 = struct.pack("!HB", PppProtocol.CHAP, w.CHAP_MD5)
ZERO_V4 = ipaddress.IPv4Address(0)


class Phase(enum.IntEnum):
    Dead = 0
    LcpNegotiating = 1
    Authenticating = 2
    NcpNegotiating = 3
    Up = 4


class Ncp(enum.Enum):
    IPV6CP = "IPV6CP"
    IPCP = "IPCP"

    @classmethod
    def for_payload(cls, af: Af) -> Ncp:
        return cls.IPV6CP if Af(af) is Af.IPV6 else cls.IPCP

    @property
    def protocol(self) -> PppProtocol:
        return PppProtocol.IPV6CP if self is Ncp.IPV6CP else PppProtocol.IPCP


class PppError(Exception):
    pass


class NegotiationDiverged(PppError):
    pass


class AuthFailed(PppError):
    pass


class IidExhausted(PppError):
    pass


class PoolExhausted(PppError):
    pass


class LinkDead(PppError):
    pass


class PeerTerminated(PppError):
    pass


@dataclass(frozen=True)
class PhaseChange:
    phase: Phase


@dataclass(frozen=True)
class LinkFailed:
    error: PppError


Output = PppFrame | PhaseChange | LinkFailed


@dataclass(frozen=True)
class Credentials:
    name: str
    secret: bytes


@dataclass
class NcpParams:
    """What the concentrator hands out on the NCP; filled from AAA and pools."""

    ipv4_address: ipaddress.IPv4Address | None = None
    dns: tuple[IpAddress, ...] = ()
    interface_id: int | None = None


@dataclass
class PppConfig:
    link_mtu: int = 1500
    transport_af: Af = Af.IPV4
    payload_af: Af = Af.IPV6
    name: str = "ppp"
    propose_acfc: bool = False
    accept_acfc: bool = True
    # concentrator: demand CHAP-MD5 from the peer
    require_chap: bool = False
    # initiator: answer CHAP challenges with these
    credentials: Credentials | None = None
    want_dns: bool = True
    local_ipv4: ipaddress.IPv4Address | None = None
    max_configure: int = 10
    max_iid_naks: int = 3
    restart_timer: float = 3.0
    challenge_len: int = 16
    keepalive: KeepaliveConfig = field(default_factory=KeepaliveConfig)

    def __post_init__(self) -> None:
        self.transport_af = Af.parse(self.transport_af)
        self.payload_af = Af.parse(self.payload_af)
        # fail early on a link that cannot carry payload at all
        compute_ppp_mtu(self.link_mtu, self.transport_af, False)


def chap_digest(identifier: int, secret: bytes, challenge: bytes) -> bytes:
    return hashlib.md5(bytes([identifier]) + secret + challenge).digest()


def verify_chap(secret: bytes, identifier: int, challenge: bytes, response: bytes) -> bool:
    return hmac.compare_digest(chap_digest(identifier, secret, challenge), response)


def next_iid(iid: int) -> int:
    """Deterministic Nak suggestion: iid + 1 mod 2**64, never zero."""
    nxt = (iid + 1) % (1 << 64)
    return nxt or 1


class _Negotiator:
    """Configure-Request/Ack/Nak/Reject exchange for one control protocol."""

    protocol: PppProtocol

    def __init__(self, link: PppLink):
        self.link = link
        self.ack_rcvd = False
        self.ack_sent = False
        self.requests = 0
        self.req_id: int | None = None
        self.deadline: int | None = None
        self.opened = False

    # subclass hooks
    def request_options(self) -> Options:
        raise NotImplementedError

    def check(self, opts: Options) -> tuple[Code, Options]:
        raise NotImplementedError

    def on_ack(self, opts: Options) -> None:
        pass

    def on_nak(self, opts: Options) -> None:
        pass

    def on_reject(self, opts: Options) -> None:
        pass

    def on_open(self) -> None:
        pass

    # machinery
    def send_request(self, now: int) -> list[Output]:
        self.requests += 1
        if self.requests > self.link.config.max_configure:
            raise NegotiationDiverged(f"{self.protocol.name} did not converge in {self.link.config.max_configure} requests")
        self.req_id = self.link.next_id()
        self.deadline = now + seconds(self.link.config.restart_timer)
        pkt = ControlPacket(Code.CONFIGURE_REQUEST, self.req_id, w.encode_options(self.request_options()))
        return [w.frame(self.protocol, pkt)]

    def tick(self, now: int) -> list[Output]:
        if self.deadline is None or self.deadline > now or self.opened:
            return []
        return self.send_request(now)

    def receive(self, pkt: ControlPacket, now: int) -> list[Output]:
        code = pkt.code
        if code == Code.CONFIGURE_REQUEST:
            verdict, opts = self.check(w.decode_options(pkt.data))
            self.ack_sent = verdict is Code.CONFIGURE_ACK
            reply = ControlPacket(verdict, pkt.identifier, w.encode_options(opts))
            return [w.frame(self.protocol, reply)] + self._maybe_open()
        if pkt.identifier != self.req_id:
            return []
        if code == Code.CONFIGURE_ACK:
            if self.ack_rcvd:
                return []
            self.on_ack(w.decode_options(pkt.data))
            self.ack_rcvd = True
            self.deadline = None
            return self._maybe_open()
        if code in (Code.CONFIGURE_NAK, Code.CONFIGURE_REJECT):
            opts = w.decode_options(pkt.data)
            if code == Code.CONFIGURE_NAK:
                self.on_nak(opts)
            else:
                self.on_reject(opts)
            self.ack_rcvd = False
            return self.send_request(now)
        return []

    def _maybe_open(self) -> list[Output]:
        if self.opened or not (self.ack_rcvd and self.ack_sent):
            return []
        self.opened = True
        self.deadline = None
        self.on_open()
        return []


class _Lcp(_Negotiator):
    protocol = PppProtocol.LCP

    def __init__(self, link: PppLink):
        super().__init__(link)
        cfg = link.config
        self.magic = link.rng.getrandbits(32) or 1
        self.mru = compute_ppp_mtu(cfg.link_mtu, cfg.transport_af, cfg.propose_acfc)
        self.want_acfc = cfg.propose_acfc
        self.want_auth = link.is_sc and cfg.require_chap
        self.send_mru = True
        self.send_magic = True
        self.local_acfc = False
        self.peer_acfc = False
        self.peer_mru: int | None = None
        self.peer_magic: int | None = None
        self.auth_agreed = False

    def request_options(self) -> Options:
        opts: Options = []
        if self.send_mru:
            opts.append((w.LCP_MRU, struct.pack("!H", self.mru)))
        if self.want_auth:
            opts.append((w.LCP_AUTH_PROTOCOL, AUTH_CHAP_MD5))
        if self.send_magic:
            opts.append((w.LCP_MAGIC, struct.pack("!I", self.magic)))
        if self.want_acfc:
            opts.append((w.LCP_ACFC, b""))
        return opts

    def check(self, opts: Options) -> tuple[Code, Options]:
        cfg = self.link.config
        rej: Options = []
        nak: Options = []
        for typ, val in opts:
            if typ == w.LCP_MRU and len(val) == 2:
                if struct.unpack("!H", val)[0] < MIN_IPV4_MTU:
                    nak.append((typ, struct.pack("!H", self.mru)))
            elif typ == w.LCP_MAGIC and len(val) == 4:
                if struct.unpack("!I", val)[0] in (0, self.magic):
                    nak.append((typ, struct.pack("!I", self.link.rng.getrandbits(32) or 1)))
            elif typ == w.LCP_ACFC and not val:
                if not cfg.accept_acfc:
                    rej.append((typ, val))
            elif typ == w.LCP_AUTH_PROTOCOL:
                if self.link.is_sc or cfg.credentials is None:
                    rej.append((typ, val))
                elif val != AUTH_CHAP_MD5:
                    nak.append((typ, AUTH_CHAP_MD5))
            else:
                rej.append((typ, val))
        if rej:
            return Code.CONFIGURE_REJECT, rej
        if nak:
            return Code.CONFIGURE_NAK, nak
        found = dict(opts)
        self.peer_mru = struct.unpack("!H", found[w.LCP_MRU])[0] if w.LCP_MRU in found else None
        self.peer_magic = struct.unpack("!I", found[w.LCP_MAGIC])[0] if w.LCP_MAGIC in found else None
        self.peer_acfc = w.LCP_ACFC in found
        if not self.link.is_sc:
            self.auth_agreed = w.LCP_AUTH_PROTOCOL in found
        return Code.CONFIGURE_ACK, opts

    def on_ack(self, opts: Options) -> None:
        found = dict(opts)
        self.local_acfc = w.LCP_ACFC in found
        if self.link.is_sc:
            self.auth_agreed = w.LCP_AUTH_PROTOCOL in found

    def on_nak(self, opts: Options) -> None:
        for typ, val in opts:
            if typ == w.LCP_MRU and len(val) == 2:
                self.mru = min(self.mru, max(MIN_IPV4_MTU, struct.unpack("!H", val)[0]))
            elif typ == w.LCP_MAGIC:
                self.magic = self.link.rng.getrandbits(32) or 1
            elif typ == w.LCP_AUTH_PROTOCOL:
                raise AuthFailed("peer will not authenticate with CHAP-MD5")

    def on_reject(self, opts: Options) -> None:
        for typ, _ in opts:
            if typ == w.LCP_ACFC:
                self.want_acfc = False
            elif typ == w.LCP_MRU:
                self.send_mru = False
            elif typ == w.LCP_MAGIC:
                self.send_magic = False
            elif typ == w.LCP_AUTH_PROTOCOL:
                raise AuthFailed("peer rejected CHAP authentication")

    def on_open(self) -> None:
        cfg = self.link.config
        acfc = self.local_acfc and self.peer_acfc
        mtu = compute_ppp_mtu(cfg.link_mtu, cfg.transport_af, acfc)
        if self.peer_mru is not None:
            mtu = min(mtu, self.peer_mru)
        self.link.acfc_accepted = acfc
        self.link.mtu = mtu


class _Ipv6cp(_Negotiator):
    protocol = PppProtocol.IPV6CP

    def __init__(self, link: PppLink, iid: int):
        super().__init__(link)
        self.iid = iid
        self.naks_sent = 0

    def request_options(self) -> Options:
        return [(w.IPV6CP_INTERFACE_ID, self.iid.to_bytes(8, "big"))]

    def check(self, opts: Options) -> tuple[Code, Options]:
        rej = [(t, v) for t, v in opts if t != w.IPV6CP_INTERFACE_ID or len(v) != 8]
        if rej:
            return Code.CONFIGURE_REJECT, rej
        found = dict(opts)
        if w.IPV6CP_INTERFACE_ID not in found:
            return Code.CONFIGURE_ACK, opts
        peer = int.from_bytes(found[w.IPV6CP_INTERFACE_ID], "big")
        # the concentrator arbitrates collisions; the initiator defers to it
        if peer == 0 or (self.link.is_sc and peer == self.iid):
            if self.naks_sent >= self.link.config.max_iid_naks:
                raise IidExhausted(f"no unique interface identifier after {self.naks_sent} Naks")
            self.naks_sent += 1
            alt = next_iid(peer)
            if alt == self.iid:
                alt = next_iid(alt)
            return Code.CONFIGURE_NAK, [(w.IPV6CP_INTERFACE_ID, alt.to_bytes(8, "big"))]
        self.link.remote_iid = peer
        return Code.CONFIGURE_ACK, opts

    def on_ack(self, opts: Options) -> None:
        self.link.local_iid = self.iid

    def on_nak(self, opts: Options) -> None:
        for typ, val in opts:
            if typ == w.IPV6CP_INTERFACE_ID and len(val) == 8:
                suggested = int.from_bytes(val, "big")
                if suggested:
                    self.iid = suggested

    def on_reject(self, opts: Options) -> None:
        raise IidExhausted("peer rejected the Interface-Identifier option")


class _Ipcp(_Negotiator):
    protocol = PppProtocol.IPCP

    def __init__(self, link: PppLink, params: NcpParams | None):
        super().__init__(link)
        self.params = params
        cfg = link.config
        self.opts: dict[int, ipaddress.IPv4Address] = {}
        if link.is_sc:
            if cfg.local_ipv4 is not None:
                self.opts[w.IPCP_ADDRESS] = ipaddress.IPv4Address(cfg.local_ipv4)
        else:
            self.opts[w.IPCP_ADDRESS] = ZERO_V4
            if cfg.want_dns:
                self.opts[w.IPCP_PRIMARY_DNS] = ZERO_V4
                self.opts[w.IPCP_SECONDARY_DNS] = ZERO_V4

    def request_options(self) -> Options:
        return [(t, a.packed) for t, a in self.opts.items()]

    def check(self, opts: Options) -> tuple[Code, Options]:
        if not self.link.is_sc:
            rej = [(t, v) for t, v in opts if t != w.IPCP_ADDRESS or len(v) != 4]
            if rej:
                return Code.CONFIGURE_REJECT, rej
            return Code.CONFIGURE_ACK, opts
        params = self.params or NcpParams()
        v4_dns = [d for d in params.dns if d.version == 4]
        rej: Options = []
        nak: Options = []
        for typ, val in opts:
            if len(val) != 4:
                rej.append((typ, val))
            elif typ == w.IPCP_ADDRESS:
                if params.ipv4_address is None:
                    raise PoolExhausted("no IPv4 address available for the initiator")
                if val != params.ipv4_address.packed:
                    nak.append((typ, params.ipv4_address.packed))
            elif typ in (w.IPCP_PRIMARY_DNS, w.IPCP_SECONDARY_DNS):
                idx = 0 if typ == w.IPCP_PRIMARY_DNS else 1
                if idx >= len(v4_dns):
                    rej.append((typ, val))
                elif val != v4_dns[idx].packed:
                    nak.append((typ, v4_dns[idx].packed))
            else:
                rej.append((typ, val))
        if rej:
            return Code.CONFIGURE_REJECT, rej
        if nak:
            return Code.CONFIGURE_NAK, nak
        if w.IPCP_ADDRESS not in dict(opts):
            # an initiator must take an address on an IPv4 softwire
            if params.ipv4_address is None:
                raise PoolExhausted("no IPv4 address available for the initiator")
            return Code.CONFIGURE_NAK, [(w.IPCP_ADDRESS, params.ipv4_address.packed)]
        self.link.remote_ipv4 = ipaddress.IPv4Address(dict(opts)[w.IPCP_ADDRESS])
        return Code.CONFIGURE_ACK, opts

    def on_ack(self, opts: Options) -> None:
        found = {t: ipaddress.IPv4Address(v) for t, v in opts if len(v) == 4}
        addr = found.get(w.IPCP_ADDRESS)
        if addr is not None and addr != ZERO_V4:
            self.link.local_ipv4 = addr
        self.link.dns = tuple(
            found[t] for t in (w.IPCP_PRIMARY_DNS, w.IPCP_SECONDARY_DNS) if t in found and found[t] != ZERO_V4
        )

    def on_nak(self, opts: Options) -> None:
        for typ, val in opts:
            if len(val) == 4:
                self.opts[typ] = ipaddress.IPv4Address(val)

    def on_reject(self, opts: Options) -> None:
        for typ, _ in opts:
            if typ == w.IPCP_ADDRESS and self.link.is_sc is False:
                raise PoolExhausted("peer refused to assign an IPv4 address")
            self.opts.pop(typ, None)


class PppLink:
    """One end of the PPP link. ``is_sc`` selects concentrator behaviour."""

    def __init__(
        self,
        config: PppConfig,
        rng: random.Random,
        *,
        is_sc: bool,
        verify: Callable[[str, int, bytes, bytes], bool] | None = None,
        ncp_params: Callable[[str | None], NcpParams] | None = None,
    ):
        self.config = config
        self.rng = rng
        self.is_sc = is_sc
        self.verify = verify
        self.ncp_params = ncp_params
        self.ncp = Ncp.for_payload(config.payload_af)
        self.phase = Phase.Dead
        self.history: list[Phase] = [Phase.Dead]
        self.mtu: int | None = None
        self.acfc_accepted = False
        self.local_iid: int | None = None
        self.remote_iid: int | None = None
        self.local_ipv4: ipaddress.IPv4Address | None = None
        self.remote_ipv4: ipaddress.IPv4Address | None = None
        self.dns: tuple[IpAddress, ...] = ()
        self.peer_name: str | None = None
        self.failure: PppError | None = None
        self._id = 0
        self.lcp = _Lcp(self)
        self.ncp_fsm: _Negotiator | None = None
        self.auth_done = False
        self._challenge: bytes | None = None
        self._chap_id: int | None = None
        self._chap_deadline: int | None = None
        self._chap_tries = 0
        self.echo_deadline: int | None = None
        self.echo_missed = 0
        self.protocol_rejects = 0

    def next_id(self) -> int:
        self._id = (self._id + 1) % 256
        return self._id

    # --- phases ----------------------------------------------------------------

    def _enter(self, phase: Phase) -> list[Output]:
        if phase == self.phase:
            return []
        self.phase = phase
        self.history.append(phase)
        return [PhaseChange(phase)]

    def _fail(self, err: PppError) -> list[Output]:
        self.failure = err
        self.lcp.deadline = None
        if self.ncp_fsm is not None:
            self.ncp_fsm.deadline = None
        self._chap_deadline = None
        self.echo_deadline = None
        return self._enter(Phase.Dead) + [LinkFailed(err)]

    def lower_down(self) -> list[Output]:
        """The session underneath went away: stop quietly, no failure reported."""
        if self.phase is Phase.Dead:
            return []
        self.lcp.deadline = None
        if self.ncp_fsm is not None:
            self.ncp_fsm.deadline = None
        self._chap_deadline = None
        self.echo_deadline = None
        return self._enter(Phase.Dead)

    def open(self, now: int) -> list[Output]:
        """Session is up: both ends start LCP by sending a Configure-Request."""
        if self.phase is not Phase.Dead or self.failure is not None:
            return []
        out = self._enter(Phase.LcpNegotiating)
        return out + self.lcp.send_request(now)

    def _advance(self, now: int) -> list[Output]:
        out: list[Output] = []
        if self.phase is Phase.LcpNegotiating and self.lcp.opened:
            if self.lcp.auth_agreed:
                out += self._enter(Phase.Authenticating)
                if self.is_sc:
                    out += self._send_challenge(now)
            else:
                self.auth_done = True
        if self.phase in (Phase.LcpNegotiating, Phase.Authenticating) and self.lcp.opened and self.auth_done:
            out += self._enter(Phase.NcpNegotiating)
            out += self._start_ncp(now)
        if self.phase is Phase.NcpNegotiating and self.ncp_fsm is not None and self.ncp_fsm.opened:
            out += self._enter(Phase.Up)
            ka = self.config.keepalive
            if ka.lcp_echo_enabled:
                self.echo_deadline = now + seconds(ka.lcp_echo_interval)
        return out

    def _start_ncp(self, now: int) -> list[Output]:
        params = self.ncp_params(self.peer_name) if (self.is_sc and self.ncp_params) else None
        if self.ncp is Ncp.IPV6CP:
            iid = params.interface_id if params is not None and params.interface_id else None
            self.ncp_fsm = _Ipv6cp(self, iid or (self.rng.getrandbits(64) or 1))
        else:
            self.ncp_fsm = _Ipcp(self, params)
        return self.ncp_fsm.send_request(now)

    # --- input -------------------------------------------------------------------

    def receive(self, f: PppFrame, now: int) -> list[Output]:
        if self.phase is Phase.Dead:
            return []
        try:
            out = self._dispatch(f, now)
            return out + self._advance(now)
        except PppError as err:
            return self._fail(err)
        except CodecError:
            return []

    def _dispatch(self, f: PppFrame, now: int) -> list[Output]:
        proto = f.protocol
        if proto is PppProtocol.LCP:
            return self._lcp(w.decode_cp(f.payload), now)
        if not self.lcp.opened:
            return []
        if proto is PppProtocol.CHAP:
            return self._chap(w.decode_cp(f.payload), now)
        if proto in (PppProtocol.IPCP, PppProtocol.IPV6CP):
            if proto is not self.ncp.protocol:
                self.protocol_rejects += 1
                data = struct.pack("!H", proto) + f.payload
                return [w.frame(PppProtocol.LCP, ControlPacket(Code.PROTOCOL_REJECT, self.next_id(), data))]
            if self.ncp_fsm is None:
                return []
            return self.ncp_fsm.receive(w.decode_cp(f.payload), now)
        return []

    def _lcp(self, pkt: ControlPacket, now: int) -> list[Output]:
        code = pkt.code
        if code in (Code.CONFIGURE_REQUEST, Code.CONFIGURE_ACK, Code.CONFIGURE_NAK, Code.CONFIGURE_REJECT):
            if self.lcp.opened and code == Code.CONFIGURE_REQUEST:
                # peer did not see our Ack; answer again without renegotiating
                verdict, opts = self.lcp.check(w.decode_options(pkt.data))
                return [w.frame(PppProtocol.LCP, ControlPacket(verdict, pkt.identifier, w.encode_options(opts)))]
            return self.lcp.receive(pkt, now)
        if code == Code.TERMINATE_REQUEST:
            ack = w.frame(PppProtocol.LCP, ControlPacket(Code.TERMINATE_ACK, pkt.identifier))
            return [ack] + self._fail(PeerTerminated("peer sent Terminate-Request"))
        if not self.lcp.opened:
            return []
        if code == Code.ECHO_REQUEST:
            return [w.frame(PppProtocol.LCP, ControlPacket(Code.ECHO_REPLY, pkt.identifier, struct.pack("!I", self.lcp.magic) + pkt.data[4:]))]
        if code == Code.ECHO_REPLY:
            self.echo_missed = 0
            return []
        if code == Code.PROTOCOL_REJECT and len(pkt.data) >= 2:
            if struct.unpack_from("!H", pkt.data)[0] == self.ncp.protocol:
                raise NegotiationDiverged(f"peer rejected {self.ncp.value}")
        return []

    # --- CHAP ----------------------------------------------------------------------

    def _send_challenge(self, now: int) -> list[Output]:
        self._chap_tries += 1
        if self._chap_tries > self.config.max_configure:
            raise AuthFailed("no CHAP response from peer")
        self._chap_id = self.next_id()
        self._challenge = self.rng.randbytes(self.config.challenge_len)
        self._chap_deadline = now + seconds(self.config.restart_timer)
        pkt = w.chap_value_packet(w.CHAP_CHALLENGE, self._chap_id, self._challenge, self.config.name)
        return [w.frame(PppProtocol.CHAP, pkt)]

    def _chap(self, pkt: ControlPacket, now: int) -> list[Output]:
        code = pkt.code
        if self.is_sc:
            if code != w.CHAP_RESPONSE or pkt.identifier != self._chap_id or self.auth_done:
                return []
            value, name = w.parse_chap_value(pkt)
            self._chap_deadline = None
            self.peer_name = name
            ok = self.verify is not None and self.verify(name, pkt.identifier, self._challenge, value)
            if not ok:
                fail = w.frame(PppProtocol.CHAP, ControlPacket(w.CHAP_FAILURE, pkt.identifier, b"denied"))
                return [fail] + self._fail(AuthFailed(f"CHAP response from {name!r} did not verify"))
            self.auth_done = True
            return [w.frame(PppProtocol.CHAP, ControlPacket(w.CHAP_SUCCESS, pkt.identifier, b"welcome"))]
        if code == w.CHAP_CHALLENGE:
            creds = self.config.credentials
            if creds is None:
                raise AuthFailed("challenged without credentials")
            challenge, _ = w.parse_chap_value(pkt)
            digest = chap_digest(pkt.identifier, creds.secret, challenge)
            return [w.frame(PppProtocol.CHAP, w.chap_value_packet(w.CHAP_RESPONSE, pkt.identifier, digest, creds.name))]
        if code == w.CHAP_SUCCESS:
            self.auth_done = True
            return []
        if code == w.CHAP_FAILURE:
            raise AuthFailed("concentrator rejected our CHAP response")
        return []

    # --- timers --------------------------------------------------------------------

    def next_deadline(self) -> int | None:
        if self.phase is Phase.Dead:
            return None
        times = [self.lcp.deadline, self._chap_deadline, self.echo_deadline]
        if self.ncp_fsm is not None:
            times.append(self.ncp_fsm.deadline)
        live = [t for t in times if t is not None]
        return min(live) if live else None

    def on_timer(self, now: int) -> list[Output]:
        if self.phase is Phase.Dead:
            return []
        try:
            out = self.lcp.tick(now)
            if self.ncp_fsm is not None:
                out += self.ncp_fsm.tick(now)
            if self._chap_deadline is not None and self._chap_deadline <= now:
                out += self._send_challenge(now)
            if self.echo_deadline is not None and self.echo_deadline <= now:
                out += self._echo(now)
            return out + self._advance(now)
        except PppError as err:
            return self._fail(err)

    def _echo(self, now: int) -> list[Output]:
        ka = self.config.keepalive
        if self.echo_missed >= ka.lcp_echo_max_missed:
            raise LinkDead(f"{self.echo_missed} LCP Echo-Requests unanswered")
        self.echo_missed += 1
        self.echo_deadline = now + seconds(ka.lcp_echo_interval)
        pkt = ControlPacket(Code.ECHO_REQUEST, self.next_id(), struct.pack("!I", self.lcp.magic))
        return [w.frame(PppProtocol.LCP, pkt)]
