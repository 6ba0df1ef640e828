"""DHCPv6 over the softwire: prefix delegation (IA_PD), IA_NA and DNS.

Messages use the RFC 3315 layout (type, 24-bit transaction id, TLV options)
with the RFC 3633 IA_PD/IAPREFIX and RFC 3646 DNS options.
"""

from __future__ import annotations

import enum
import ipaddress
import random
import struct
from dataclasses import dataclass, field
from typing import Callable

from ..wire.ip import PROTO_UDP, decode_ip, decode_udp, udp_packet
from ..wire.l2tp import CodecError, Truncated
from .pools import NoPrefixAvailable

CLIENT_PORT = 546
SERVER_PORT = 547
ALL_SERVERS = ipaddress.IPv6Address("ff02::1:2")

OPT_CLIENTID = 1
OPT_SERVERID = 2
OPT_IA_NA = 3
OPT_IAADDR = 5
OPT_ORO = 6
OPT_STATUS_CODE = 13
OPT_DNS_SERVERS = 23
OPT_IA_PD = 25
OPT_IAPREFIX = 26

STATUS_SUCCESS = 0
STATUS_NO_ADDRS_AVAIL = 2
STATUS_NO_PREFIX_AVAIL = 6

IAID = 1


class MsgType(enum.IntEnum):
    SOLICIT = 1
    ADVERTISE = 2
    REQUEST = 3
    REPLY = 7
    INFORMATION_REQUEST = 11


class DuidMismatch(Exception):
    pass


class Dhcpv6Failed(Exception):
    pass


Options6 = list[tuple[int, bytes]]


@dataclass(frozen=True)
class Dhcpv6Message:
    msg_type: MsgType
    xid: int
    options: tuple[tuple[int, bytes], ...] = ()

    def get(self, code: int) -> bytes | None:
        for c, v in self.options:
            if c == code:
                return v
        return None


def encode_options6(opts) -> bytes:
    return b"".join(struct.pack("!HH", c, len(v)) + v for c, v in opts)


def decode_options6(buf: bytes) -> Options6:
    out: Options6 = []
    pos = 0
    while pos < len(buf):
        if len(buf) - pos < 4:
            raise Truncated("DHCPv6 option header truncated")
        code, length = struct.unpack_from("!HH", buf, pos)
        if pos + 4 + length > len(buf):
            raise Truncated(f"DHCPv6 option {code} truncated")
        out.append((code, bytes(buf[pos + 4 : pos + 4 + length])))
        pos += 4 + length
    return out


def encode_dhcpv6(m: Dhcpv6Message) -> bytes:
    return struct.pack("!I", (int(m.msg_type) << 24) | (m.xid & 0xFFFFFF)) + encode_options6(m.options)


def decode_dhcpv6(buf: bytes) -> Dhcpv6Message:
    if len(buf) < 4:
        raise Truncated("DHCPv6 header truncated")
    (word,) = struct.unpack_from("!I", buf)
    try:
        mt = MsgType(word >> 24)
    except ValueError:
        raise CodecError(f"unsupported DHCPv6 message type {word >> 24}") from None
    return Dhcpv6Message(mt, word & 0xFFFFFF, tuple(decode_options6(buf[4:])))


# --- option builders -----------------------------------------------------------


def duid_ll(mac: bytes) -> bytes:
    """DUID-LL (type 3) over an Ethernet-style 6-byte identifier."""
    return struct.pack("!HH", 3, 1) + mac


def status_option(code: int, text: str = "") -> tuple[int, bytes]:
    return OPT_STATUS_CODE, struct.pack("!H", code) + text.encode()


def ia_pd(prefix: ipaddress.IPv6Network | None, *, t1=0, t2=0, preferred=0, valid=0, status: int | None = None):
    inner: Options6 = []
    if prefix is not None:
        inner.append(
            (OPT_IAPREFIX, struct.pack("!IIB16s", preferred, valid, prefix.prefixlen, prefix.network_address.packed))
        )
    if status is not None:
        inner.append(status_option(status))
    return OPT_IA_PD, struct.pack("!III", IAID, t1, t2) + encode_options6(inner)


def ia_na(address: ipaddress.IPv6Address | None, *, t1=0, t2=0, preferred=0, valid=0, status: int | None = None):
    inner: Options6 = []
    if address is not None:
        inner.append((OPT_IAADDR, address.packed + struct.pack("!II", preferred, valid)))
    if status is not None:
        inner.append(status_option(status))
    return OPT_IA_NA, struct.pack("!III", IAID, t1, t2) + encode_options6(inner)


def oro(*codes: int) -> tuple[int, bytes]:
    return OPT_ORO, b"".join(struct.pack("!H", c) for c in codes)


def dns_option(servers) -> tuple[int, bytes]:
    return OPT_DNS_SERVERS, b"".join(ipaddress.IPv6Address(s).packed for s in servers)


def _ia_body(value: bytes) -> Options6:
    if len(value) < 12:
        raise Truncated("IA option truncated")
    return decode_options6(value[12:])


def _status(opts: Options6) -> int:
    for c, v in opts:
        if c == OPT_STATUS_CODE and len(v) >= 2:
            return struct.unpack_from("!H", v)[0]
    return STATUS_SUCCESS


def parse_ia_pd(value: bytes) -> tuple[ipaddress.IPv6Network | None, int]:
    inner = _ia_body(value)
    for c, v in inner:
        if c == OPT_IAPREFIX and len(v) >= 25:
            _, _, plen, raw = struct.unpack_from("!IIB16s", v)
            return ipaddress.IPv6Network((ipaddress.IPv6Address(raw), plen)), _status(inner)
    return None, _status(inner)


def parse_ia_na(value: bytes) -> tuple[ipaddress.IPv6Address | None, int]:
    inner = _ia_body(value)
    for c, v in inner:
        if c == OPT_IAADDR and len(v) >= 24:
            return ipaddress.IPv6Address(v[:16]), _status(inner)
    return None, _status(inner)


def parse_dns(value: bytes) -> tuple[ipaddress.IPv6Address, ...]:
    if len(value) % 16:
        raise CodecError("DNS option length not a multiple of 16")
    return tuple(ipaddress.IPv6Address(value[i : i + 16]) for i in range(0, len(value), 16))


def requested_options(m: Dhcpv6Message) -> set[int]:
    raw = m.get(OPT_ORO) or b""
    return {struct.unpack_from("!H", raw, i)[0] for i in range(0, len(raw) - 1, 2)}


def wrap(src, dst, m: Dhcpv6Message, *, to_server: bool) -> bytes:
    sport, dport = (CLIENT_PORT, SERVER_PORT) if to_server else (SERVER_PORT, CLIENT_PORT)
    return udp_packet(src, dst, sport, dport, encode_dhcpv6(m))


def unwrap(buf: bytes) -> Dhcpv6Message | None:
    """The DHCPv6 message inside an IPv6/UDP packet, or None if it is something else."""
    pkt = decode_ip(buf)
    if pkt.src.version != 6 or pkt.proto != PROTO_UDP:
        return None
    sport, dport, data = decode_udp(pkt.payload)
    if {sport, dport} != {CLIENT_PORT, SERVER_PORT}:
        return None
    return decode_dhcpv6(data)


# --- server ------------------------------------------------------------------------


@dataclass
class Lease:
    prefix: ipaddress.IPv6Network | None = None
    address: ipaddress.IPv6Address | None = None


LeaseSource = Callable[[bool, bool], Lease]


@dataclass
class Dhcpv6Server:
    duid: bytes
    dns: tuple[ipaddress.IPv6Address, ...] = ()
    preferred: int = 3600
    valid: int = 7200
    # DUID -> tunnel it was first seen on
    associations: dict[bytes, str] = field(default_factory=dict)

    def associate(self, duid: bytes, tunnel: str) -> None:
        owner = self.associations.setdefault(duid, tunnel)
        if owner != tunnel:
            raise DuidMismatch(f"DUID {duid.hex()} bound to {owner}, seen on {tunnel}")

    def release(self, tunnel: str) -> None:
        for duid in [d for d, t in self.associations.items() if t == tunnel]:
            del self.associations[duid]

    def handle(self, m: Dhcpv6Message, tunnel: str, lease_source: LeaseSource) -> tuple[Dhcpv6Message | None, Lease | None]:
        """Answer one client message. The lease is returned only when committed (Reply to Request)."""
        client = m.get(OPT_CLIENTID)
        if client is None:
            return None, None
        self.associate(client, tunnel)
        base: Options6 = [(OPT_CLIENTID, client), (OPT_SERVERID, self.duid)]
        if OPT_DNS_SERVERS in requested_options(m) and self.dns:
            dns = [dns_option(self.dns)]
        else:
            dns = []
        if m.msg_type is MsgType.INFORMATION_REQUEST:
            return Dhcpv6Message(MsgType.REPLY, m.xid, tuple(base + dns)), None
        if m.msg_type is MsgType.REQUEST:
            server = m.get(OPT_SERVERID)
            if server is not None and server != self.duid:
                return None, None
        elif m.msg_type is not MsgType.SOLICIT:
            return None, None
        want_pd = m.get(OPT_IA_PD) is not None
        want_na = m.get(OPT_IA_NA) is not None
        ias: Options6 = []
        lease = Lease()
        if want_pd or want_na:
            try:
                lease = lease_source(want_pd, want_na)
            except NoPrefixAvailable:
                lease = Lease()
        life = dict(t1=self.preferred // 2, t2=self.preferred * 4 // 5, preferred=self.preferred, valid=self.valid)
        if want_pd:
            if lease.prefix is None:
                ias.append(ia_pd(None, status=STATUS_NO_PREFIX_AVAIL))
            else:
                ias.append(ia_pd(lease.prefix, **life))
        if want_na:
            if lease.address is None:
                ias.append(ia_na(None, status=STATUS_NO_ADDRS_AVAIL))
            else:
                ias.append(ia_na(lease.address, **life))
        reply_type = MsgType.ADVERTISE if m.msg_type is MsgType.SOLICIT else MsgType.REPLY
        reply = Dhcpv6Message(reply_type, m.xid, tuple(base + ias + dns))
        committed = lease if reply_type is MsgType.REPLY and (lease.prefix or lease.address) else None
        return reply, committed


# --- client -----------------------------------------------------------------------


class ClientMode(enum.Enum):
    # stateless: Information-Request / Reply
    Info = "info"
    # Solicit without any IA: DNS only
    Host = "host"
    # Solicit with IA_PD (and IA_NA when addresses come from DHCPv6)
    Router = "router"


@dataclass
class Dhcpv6Result:
    prefix: ipaddress.IPv6Network | None = None
    address: ipaddress.IPv6Address | None = None
    dns: tuple[ipaddress.IPv6Address, ...] = ()


class Dhcpv6Client:
    def __init__(self, duid: bytes, mode: ClientMode, rng: random.Random, *, want_address: bool = False, max_tries: int = 5):
        self.duid = duid
        self.mode = ClientMode(mode)
        self.rng = rng
        self.want_pd = self.mode is ClientMode.Router
        self.want_na = want_address and self.mode is not ClientMode.Info
        self.max_tries = max_tries
        self.tries = 0
        self.pending: Dhcpv6Message | None = None
        self.server: bytes | None = None
        self.result = Dhcpv6Result()
        self.done = False
        self.error: Exception | None = None

    def _xid(self) -> int:
        return self.rng.getrandbits(24)

    def _common(self) -> Options6:
        return [(OPT_CLIENTID, self.duid), oro(OPT_DNS_SERVERS)]

    def start(self) -> Dhcpv6Message:
        opts = self._common()
        if self.mode is ClientMode.Info:
            msg = Dhcpv6Message(MsgType.INFORMATION_REQUEST, self._xid(), tuple(opts))
        else:
            if self.want_na:
                opts.append(ia_na(None))
            if self.want_pd:
                opts.append(ia_pd(None))
            msg = Dhcpv6Message(MsgType.SOLICIT, self._xid(), tuple(opts))
        self.pending = msg
        self.tries = 1
        return msg

    def retransmit(self) -> Dhcpv6Message | None:
        if self.done or self.pending is None:
            return None
        if self.tries >= self.max_tries:
            self.error = Dhcpv6Failed(f"no answer to {self.pending.msg_type.name} after {self.tries} tries")
            self.done = True
            return None
        self.tries += 1
        return self.pending

    def _absorb(self, m: Dhcpv6Message) -> None:
        dns = m.get(OPT_DNS_SERVERS)
        if dns is not None:
            self.result.dns = parse_dns(dns)
        pd = m.get(OPT_IA_PD)
        if self.want_pd:
            prefix, status = parse_ia_pd(pd) if pd is not None else (None, STATUS_NO_PREFIX_AVAIL)
            if status == STATUS_NO_PREFIX_AVAIL or prefix is None:
                raise NoPrefixAvailable("server has no prefix to delegate")
            self.result.prefix = prefix
        na = m.get(OPT_IA_NA)
        if self.want_na:
            addr, status = parse_ia_na(na) if na is not None else (None, STATUS_NO_ADDRS_AVAIL)
            if status != STATUS_SUCCESS or addr is None:
                raise Dhcpv6Failed("server has no address to assign")
            self.result.address = addr

    def receive(self, m: Dhcpv6Message) -> Dhcpv6Message | None:
        """Feed a server message; returns the next message to send, if any."""
        if self.done or self.pending is None or m.xid != self.pending.xid:
            return None
        if m.get(OPT_CLIENTID) != self.duid:
            return None
        try:
            self._absorb(m)
        except (NoPrefixAvailable, Dhcpv6Failed) as exc:
            self.error = exc
            self.done = True
            return None
        if m.msg_type is MsgType.ADVERTISE and (self.want_pd or self.want_na):
            self.server = m.get(OPT_SERVERID)
            opts = self._common() + [(OPT_SERVERID, self.server)]
            if self.want_na:
                opts.append(ia_na(self.result.address))
            if self.want_pd:
                opts.append(ia_pd(self.result.prefix))
            self.pending = Dhcpv6Message(MsgType.REQUEST, self._xid(), tuple(opts))
            self.tries = 1
            return self.pending
        self.done = True
        self.pending = None
        return None
