"""Softwire Initiator and Concentrator hosts wired onto the simulator.

Each node owns tunnel engines and PPP links and turns their actions into
datagrams, trace events and provisioning steps. Nodes keep one pending
wake-up per distinct deadline; a wake runs everything that is due.
"""

from __future__ import annotations

import dataclasses
import ipaddress
import random
from typing import Any

from .. import aaa
from ..netsim import Datagram, Endpoint, SimNetwork, fmt_endpoint
from ..ppp.link import Credentials, LinkFailed, NcpParams, Phase, PhaseChange, PppConfig, PppLink
from ..provisioning import dhcpv4, dhcpv6, nd
from ..provisioning.dhcpv4 import Dhcpv4Message, Op
from ..provisioning.dhcpv6 import ClientMode, Dhcpv6Client, Dhcpv6Server, DuidMismatch, Lease
from ..provisioning.pools import AddressPool, InvalidPrefixLength, NoPrefixAvailable, PrefixPool
from ..provisioning.record import ProvisioningRecord
from ..provisioning.rib import Conflict, Origin, Rib
from ..provisioning.stable import Assignment, StableStore
from ..trace import seconds
from ..tunnel.config import TunnelConfig
from ..tunnel.engine import (
    Action,
    DeliverFrame,
    DeliverPayload,
    DownReason,
    Send,
    SendData,
    SessionNotUp,
    SessionUp,
    TunnelDown,
    TunnelEndpointState,
    TunnelError,
    sc_accept,
    si_start,
)
from ..wire import l2tp
from ..wire.ip import PROTO_UDP, Af, IpAddress, decode_ip, decode_udp, ip_version, udp_packet
from ..wire.ppp import PppFrame
from .config import ScenarioConfig

L2TP_PORT = 1701
ALTERNATE_PORT = 1702
RETRY_US = seconds(1)
MAX_TRIES = 5
RS_INTERVAL_US = seconds(4)
MAX_RS = 3
V4_BROADCAST = ipaddress.IPv4Address("255.255.255.255")
SC_DUID = dhcpv6.duid_ll(bytes.fromhex("02005e005301"))


def default_route(af: Af) -> ipaddress.IPv4Network | ipaddress.IPv6Network:
    return ipaddress.ip_network("::/0" if af is Af.IPV6 else "0.0.0.0/0")


class Node:
    """Trace and wake-up plumbing shared by both ends."""

    def __init__(self, name: str, net: SimNetwork):
        self.name = name
        self.net = net
        self._wakes: set[int] = set()

    def emit(self, event: str, **fields: Any) -> None:
        self.net.trace.emit(self.net.clock, event, node=self.name, **fields)

    def deadlines(self) -> list[int | None]:
        return []

    def tick(self, now: int) -> None:
        pass

    def reschedule(self) -> None:
        live = [d for d in self.deadlines() if d is not None]
        if not live:
            return
        when = max(min(live), self.net.clock)
        if when in self._wakes:
            return
        self._wakes.add(when)
        self.net.call_at(when, lambda: self._wake(when))

    def _wake(self, when: int) -> None:
        self._wakes.discard(when)
        self.tick(self.net.clock)
        self.reschedule()

    # hooks called by Softwire
    def session_up(self, sw: Softwire, now: int) -> None:
        pass

    def ppp_up(self, sw: Softwire, now: int) -> None:
        pass

    def payload(self, sw: Softwire, af: Af, packet: bytes, now: int) -> None:
        pass

    def tunnel_down(self, sw: Softwire, down: TunnelDown, now: int) -> None:
        pass


class Softwire:
    """A tunnel endpoint, its PPP link and the UDP 4-tuple they ride on."""

    def __init__(self, node: Node, sw_id: str, tunnel: TunnelEndpointState, link: PppLink | None, local: Endpoint, peer: Endpoint):
        self.node = node
        self.id = sw_id
        self.tunnel = tunnel
        self.link = link
        self.local = local
        self.peer = peer
        self.session_up_at: int | None = None
        self.ppp_up_at: int | None = None
        self.down: TunnelDown | None = None

    @property
    def net(self) -> SimNetwork:
        return self.node.net

    def deadlines(self) -> list[int | None]:
        return [self.tunnel.next_deadline(), self.link.next_deadline()]

    def tick(self, now: int) -> None:
        due = self.tunnel.next_deadline()
        if due is not None and due <= now:
            self.run(self.tunnel.on_timer(now), now)
        due = self.link.next_deadline()
        if due is not None and due <= now:
            self.ppp(self.link.on_timer(now), now)

    def receive(self, buf: bytes, now: int) -> None:
        self.run(self.tunnel.receive(buf, now), now)

    # --- tunnel actions ----------------------------------------------------------

    def run(self, actions: list[Action], now: int) -> None:
        for a in actions:
            if isinstance(a, Send):
                self._send_control(a)
            elif isinstance(a, SendData):
                self._send(a.datagram, f"data {a.protocol.name} {a.size}")
            elif isinstance(a, SessionUp):
                self.session_up_at = now
                t = self.tunnel
                self.node.emit(
                    "session_up",
                    softwire=self.id,
                    local_tunnel_id=t.local_tunnel_id,
                    remote_tunnel_id=t.remote_tunnel_id,
                    local_session_id=a.local_session_id,
                    remote_session_id=a.remote_session_id,
                )
                self.node.session_up(self, now)
                self.ppp(self.link.open(now), now)
            elif isinstance(a, TunnelDown):
                self.down = a
                self.node.emit("tunnel_down", softwire=self.id, reason=a.reason.value, detail=a.detail or None)
                self.ppp(self.link.lower_down(), now)
                self.node.tunnel_down(self, a, now)
            elif isinstance(a, DeliverPayload):
                self.node.emit("payload", softwire=self.id, dir="rx", af=a.af.label, size=len(a.packet))
                self.node.payload(self, a.af, a.packet, now)
            elif isinstance(a, DeliverFrame):
                self.ppp(self.link.receive(a.frame, now), now)

    def _send_control(self, a: Send) -> None:
        msg = a.message
        raw = l2tp.encode_message(msg)
        self.node.emit(
            "control",
            softwire=self.id,
            dir="tx",
            msg=msg.name,
            ns=msg.ns,
            nr=msg.nr,
            tunnel_id=msg.header.tunnel_id,
            session_id=msg.header.session_id,
            retransmit=True if a.retransmit else None,
            wire=raw.hex(),
        )
        self.net.send(self.local, self.peer, raw, summary=msg.name)

    def _send(self, datagram: bytes, summary: str) -> None:
        self.net.send(self.local, self.peer, datagram, summary=summary)

    # --- PPP outputs ---------------------------------------------------------------

    def ppp(self, outputs: list, now: int) -> None:
        for o in outputs:
            if isinstance(o, PppFrame):
                try:
                    sd = self.tunnel.send_frame(o)
                except SessionNotUp:
                    continue
                self._send(sd.datagram, f"ppp {o.protocol.name}")
            elif isinstance(o, PhaseChange):
                self.node.emit("ppp_phase", softwire=self.id, phase=o.phase.name)
                if o.phase is Phase.Up:
                    self.ppp_up_at = now
                    self.tunnel.mtu = self.link.mtu
                    self.tunnel.acfc = self.link.acfc_accepted
                    self.node.ppp_up(self, now)
            elif isinstance(o, LinkFailed):
                err = o.error
                self.node.emit("ppp_failed", softwire=self.id, error=type(err).__name__, detail=str(err))
                self.run(self.tunnel.teardown(DownReason.PPP_FAILURE, now, detail=str(err)), now)

    # --- payload -------------------------------------------------------------------

    def send_payload(self, packet: bytes) -> None:
        """Encapsulate one payload packet; raises the engine's TunnelError subclasses."""
        sd = self.tunnel.encapsulate(packet)
        af = Af(ip_version(packet))
        self.node.emit("payload", softwire=self.id, dir="tx", af=af.label, size=len(packet))
        self._send(sd.datagram, f"{af.label} payload {len(packet)}")

    def try_payload(self, packet: bytes) -> bool:
        try:
            self.send_payload(packet)
        except TunnelError as exc:
            self.node.emit("drop", softwire=self.id, reason=type(exc).__name__, detail=str(exc))
            return False
        return True


def _experiment(packet: bytes) -> bool:
    from ..wire.ip import PROTO_EXPERIMENT

    try:
        return decode_ip(packet).proto == PROTO_EXPERIMENT
    except l2tp.CodecError:
        return False


def _requested_info(m: Dhcpv4Message) -> dhcpv4.SubnetInformation | None:
    if m.subnet_info is not None:
        return m.subnet_info
    return m.subnet_request.info if m.subnet_request is not None else None


# --- initiator ------------------------------------------------------------------------


class SoftwireInitiator(Node):
    """The CPE (or host behind it) that dials the concentrator."""

    def __init__(self, cfg: ScenarioConfig, net: SimNetwork, rng: random.Random, address: IpAddress, sc_endpoint: Endpoint):
        super().__init__("si", net)
        self.cfg = cfg
        self.rng = rng
        self.local: Endpoint = (address, L2TP_PORT)
        self.sc_endpoint = sc_endpoint
        self.rib = Rib("si")
        self.softwire: Softwire | None = None
        self.failure: tuple[str, str] | None = None
        self.ready = False
        self.received: list[bytes] = []
        # IPv6 payload state
        self.link_local: ipaddress.IPv6Address | None = None
        self.ra: nd.RouterAdvertisement | None = None
        self.tentative: ipaddress.IPv6Address | None = None
        self.address_v6: ipaddress.IPv6Address | None = None
        self.dhcp_address_v6: ipaddress.IPv6Address | None = None
        self.delegated_v6: ipaddress.IPv6Network | None = None
        self.duid = dhcpv6.duid_ll(bytes([0x02]) + rng.randbytes(5))
        self.dhcp6: Dhcpv6Client | None = None
        # IPv4 payload state
        self.address_v4: ipaddress.IPv4Address | None = None
        self.delegated_v4: ipaddress.IPv4Network | None = None
        self.dhcp4: dict[str, Any] | None = None
        self.dns: tuple = ()
        self.rs_sent = 0
        self.rs_deadline: int | None = None
        self.dad_deadline: int | None = None
        self.dhcp_deadline: int | None = None

    # --- lifecycle ------------------------------------------------------------------

    def start(self, now: int) -> None:
        cfg = self.cfg
        tcfg = TunnelConfig(
            host_name=cfg.user.name,
            payload_af=cfg.payload_af,
            transport_af=cfg.transport_af,
            secret=cfg.tunnel_secret.encode() if cfg.tunnel_secret else None,
            keepalive=cfg.keepalive,
        )
        tunnel, actions = si_start(tcfg, self.rng, now)
        pcfg = PppConfig(
            link_mtu=cfg.link_mtu,
            transport_af=cfg.transport_af,
            payload_af=cfg.payload_af,
            name=cfg.user.name,
            credentials=Credentials(cfg.user.name, cfg.user.secret.encode()),
            keepalive=cfg.keepalive,
        )
        link = PppLink(pcfg, self.rng, is_sc=False)
        self.softwire = Softwire(self, "softwire", tunnel, link, self.local, self.sc_endpoint)
        self.emit("start", softwire="softwire", summary=f"{fmt_endpoint(self.local)} -> {fmt_endpoint(self.sc_endpoint)}")
        self.softwire.run(actions, now)
        self.reschedule()

    @property
    def payload_address(self) -> IpAddress | None:
        return self.address_v6 if self.cfg.payload_af is Af.IPV6 else self.address_v4

    def receive(self, dgram: Datagram, now: int) -> None:
        sw = self.softwire
        if sw is None:
            return
        buf = dgram.payload
        if l2tp.is_control_packet(buf):
            try:
                hdr = l2tp.decode_header(buf)
            except l2tp.CodecError:
                hdr = None
            if hdr is not None and hdr.tunnel_id == sw.tunnel.local_tunnel_id and sw.peer != dgram.src:
                # the concentrator answered from elsewhere: follow it
                self.emit("peer_moved", softwire=sw.id, summary=f"{fmt_endpoint(sw.peer)} -> {fmt_endpoint(dgram.src)}")
                sw.peer = dgram.src
        sw.receive(buf, now)
        self.reschedule()

    def deadlines(self) -> list[int | None]:
        own = [self.rs_deadline, self.dad_deadline, self.dhcp_deadline]
        return own + (self.softwire.deadlines() if self.softwire else [])

    def tick(self, now: int) -> None:
        if self.softwire is not None:
            self.softwire.tick(now)
        if self.rs_deadline is not None and self.rs_deadline <= now:
            self._rs_timeout(now)
        if self.dad_deadline is not None and self.dad_deadline <= now:
            self.dad_deadline = None
            self._dad_done(now)
        if self.dhcp_deadline is not None and self.dhcp_deadline <= now:
            self._dhcp_timeout(now)

    def fail(self, step: str, detail: str) -> None:
        if self.failure is None:
            self.failure = (step, detail)
            self.emit("step_failed", step=step, detail=detail)
        self.rs_deadline = self.dad_deadline = self.dhcp_deadline = None

    def _done(self) -> None:
        self.ready = True
        self.dhcp_deadline = None
        self.emit("provisioned", summary=self.summary())

    def summary(self) -> str:
        parts = []
        for label, value in (
            ("v6", self.address_v6),
            ("pd", self.delegated_v6),
            ("v4", self.address_v4),
            ("v4-subnet", self.delegated_v4),
        ):
            if value is not None:
                parts.append(f"{label}={value}")
        if self.dns:
            parts.append("dns=" + ",".join(str(d) for d in self.dns))
        return " ".join(parts)

    def _payload(self, packet: bytes) -> bool:
        return self.softwire is not None and self.softwire.try_payload(packet)

    def _route(self, prefix, next_hop: str, origin: Origin) -> None:
        self.rib.inject(prefix, next_hop, origin)
        self.emit("route", rib="si", op="add", prefix=str(ipaddress.ip_network(prefix)), next_hop=next_hop, origin=origin.value)

    # --- hooks ------------------------------------------------------------------------

    def ppp_up(self, sw: Softwire, now: int) -> None:
        cfg = self.cfg
        self._route(default_route(cfg.payload_af), sw.id, Origin.Default)
        if cfg.payload_af is Af.IPV6:
            self.link_local = nd.link_local(sw.link.local_iid)
            self.emit("provision", item="interface_id", value=f"{sw.link.local_iid:016x}")
            self._send_rs(now)
            return
        self.address_v4 = sw.link.local_ipv4
        self.dns = sw.link.dns
        self.emit("provision", item="address_v4", value=str(self.address_v4))
        if cfg.router:
            self._dhcp4_start(now)
        else:
            self._done()

    def tunnel_down(self, sw: Softwire, down: TunnelDown, now: int) -> None:
        for r in self.rib.withdraw_next_hop(sw.id):
            self.emit("route", rib="si", op="del", prefix=str(r.prefix), next_hop=r.next_hop, origin=r.origin.value)
        if not self.ready:
            if sw.session_up_at is None:
                step = "l2tp"
            elif sw.ppp_up_at is None:
                step = "ppp"
            else:
                step = "provisioning"
            self.fail(step, f"tunnel down: {down.reason.value} {down.detail}".strip())

    def payload(self, sw: Softwire, af: Af, packet: bytes, now: int) -> None:
        if _experiment(packet):
            self.received.append(packet)
            return
        try:
            if af is Af.IPV6:
                self._payload_v6(packet, now)
            else:
                self._payload_v4(packet, now)
        except l2tp.CodecError as exc:
            self.emit("drop", softwire=sw.id, reason="malformed", detail=str(exc))

    # --- IPv6: RS / RA / SLAAC / DAD -------------------------------------------------

    def _send_rs(self, now: int) -> None:
        self.rs_sent += 1
        self.rs_deadline = now + RS_INTERVAL_US
        self._payload(nd.router_solicitation(self.link_local))

    def _rs_timeout(self, now: int) -> None:
        if self.ra is not None:
            self.rs_deadline = None
        elif self.rs_sent >= MAX_RS:
            self.fail("provisioning", f"no Router Advertisement after {self.rs_sent} solicitations")
        else:
            self._send_rs(now)

    def _payload_v6(self, packet: bytes, now: int) -> None:
        icmp = nd.parse_icmpv6(packet)
        if icmp is not None:
            _, typ, body = icmp
            if typ == nd.ROUTER_ADVERTISEMENT and self.ra is None:
                self._on_ra(nd.decode_ra(body), now)
            elif typ == nd.NEIGHBOR_ADVERTISEMENT:
                na = nd.decode_neighbor(typ, body)
                if self.tentative is not None and na.target == self.tentative:
                    self.tentative = None
                    self.dad_deadline = None
                    self.fail("provisioning", str(nd.DadFailed(f"{na.target} is already in use")))
            return
        m = dhcpv6.unwrap(packet)
        if m is not None and self.dhcp6 is not None:
            self._on_dhcp6(m, now)

    def _on_ra(self, ra: nd.RouterAdvertisement, now: int) -> None:
        self.ra = ra
        self.rs_deadline = None
        self.emit("provision", item="ra", value=str(ra.prefix), managed=ra.managed, other=ra.other)
        self.tentative = nd.slaac_address(ra.prefix, self.softwire.link.local_iid)
        self._payload(nd.neighbor_message(nd.NEIGHBOR_SOLICITATION, nd.UNSPECIFIED, self.tentative))
        self.dad_deadline = now + nd.DAD_WAIT_US

    def _dad_done(self, now: int) -> None:
        if self.tentative is None:
            return
        self.address_v6, self.tentative = self.tentative, None
        self.emit("provision", item="address_v6", value=str(self.address_v6))
        ra = self.ra
        if not self.cfg.router and not (ra.other or ra.managed):
            self._done()
            return
        mode = ClientMode.Router if self.cfg.router else ClientMode(self.cfg.dhcpv6_mode)
        self.dhcp6 = Dhcpv6Client(self.duid, mode, self.rng, want_address=ra.managed, max_tries=MAX_TRIES)
        self._dhcp6_send(self.dhcp6.start(), now)

    # --- IPv6: DHCPv6 ---------------------------------------------------------------

    def _dhcp6_send(self, m: dhcpv6.Dhcpv6Message, now: int) -> None:
        self.dhcp_deadline = now + RETRY_US
        self.emit("dhcp", softwire="softwire", msg=m.msg_type.name, xid=m.xid)
        self._payload(dhcpv6.wrap(self.link_local, dhcpv6.ALL_SERVERS, m, to_server=True))

    def _on_dhcp6(self, m: dhcpv6.Dhcpv6Message, now: int) -> None:
        client = self.dhcp6
        nxt = client.receive(m)
        if nxt is not None:
            self._dhcp6_send(nxt, now)
            return
        if not client.done:
            return
        self.dhcp_deadline = None
        if client.error is not None:
            self.fail("provisioning", f"DHCPv6: {client.error}")
            return
        res = client.result
        self.dns = res.dns
        if res.address is not None:
            self.dhcp_address_v6 = res.address
            self.emit("provision", item="dhcp_address_v6", value=str(res.address))
        if res.prefix is not None:
            self.delegated_v6 = res.prefix
            self.emit("provision", item="delegated_v6", value=str(res.prefix))
            self._route(res.prefix, "lan", Origin.Connected)
        if self.dns:
            self.emit("provision", item="dns", value=[str(d) for d in self.dns])
        self._done()

    def _dhcp_timeout(self, now: int) -> None:
        self.dhcp_deadline = None
        if self.dhcp6 is not None and not self.dhcp6.done:
            again = self.dhcp6.retransmit()
            if again is None:
                self.fail("provisioning", f"DHCPv6: {self.dhcp6.error}")
            else:
                self._dhcp6_send(again, now)
        elif self.dhcp4 is not None and not self.dhcp4.get("done"):
            if self.dhcp4["tries"] >= MAX_TRIES:
                self.fail("provisioning", f"DHCPv4: no answer to {self.dhcp4['last'].op.name}")
            else:
                self.dhcp4["tries"] += 1
                self._dhcp4_send(self.dhcp4["last"], now)

    # --- IPv4: DHCPv4 subnet allocation ------------------------------------------------

    def _dhcp4_start(self, now: int) -> None:
        req = dhcpv4.dhcpv4_subnet_request(None, self.cfg.supported_min_len_v4)
        self.dhcp4 = {"xid": self.rng.getrandbits(32), "req": req, "tries": 1}
        self._dhcp4_send(Dhcpv4Message(Op.DISCOVER, self.dhcp4["xid"], req), now)

    def _dhcp4_send(self, m: Dhcpv4Message, now: int) -> None:
        self.dhcp4["last"] = m
        self.dhcp_deadline = now + RETRY_US
        self.emit("dhcp", softwire="softwire", msg=m.op.name, xid=m.xid)
        pkt = udp_packet(self.address_v4, V4_BROADCAST, dhcpv4.CLIENT_PORT, dhcpv4.SERVER_PORT, dhcpv4.encode_dhcpv4(m))
        self._payload(pkt)

    def _payload_v4(self, packet: bytes, now: int) -> None:
        pkt = decode_ip(packet)
        if pkt.proto != PROTO_UDP or self.dhcp4 is None or self.dhcp4.get("done"):
            return
        _, dport, data = decode_udp(pkt.payload)
        if dport != dhcpv4.CLIENT_PORT:
            return
        m = dhcpv4.decode_dhcpv4(data)
        st = self.dhcp4
        if m.xid != st["xid"]:
            return
        if m.op is Op.NAK:
            st["done"] = True
            self.fail("provisioning", "DHCPv4 subnet request refused")
        elif m.op is Op.OFFER and st["last"].op is Op.DISCOVER and m.subnet_info is not None:
            st["tries"] = 1
            req = dataclasses.replace(st["req"], i=True, info=m.subnet_info)
            self._dhcp4_send(Dhcpv4Message(Op.REQUEST, st["xid"], req), now)
        elif m.op is Op.ACK and st["last"].op is Op.REQUEST and m.subnet_info is not None:
            st["done"] = True
            self.delegated_v4 = m.subnet_info.prefix
            self.emit("provision", item="delegated_v4", value=str(self.delegated_v4))
            self._route(self.delegated_v4, "lan", Origin.Connected)
            self._done()


# --- concentrator ------------------------------------------------------------------------


class ScSoftwire(Softwire):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.user: str | None = None
        self.directives: aaa.Directives | None = None
        self.record: ProvisioningRecord | None = None
        self.prior: Assignment | None = None
        self.link_prefix: ipaddress.IPv6Network | None = None
        self.link_prefix_pool: PrefixPool | None = None
        self.endpoint_v4: ipaddress.IPv4Address | None = None
        self.endpoint_v4_pooled = False
        self.offer_v6: ipaddress.IPv6Network | None = None
        self.offer_v6_pooled = False
        self.offer_v4: ipaddress.IPv4Network | None = None
        self.offer_v4_pool: PrefixPool | None = None
        self.received: list[bytes] = []


class SoftwireConcentrator(Node):
    """The LNS: accepts many softwires, runs AAA, provisioning and accounting."""

    def __init__(
        self,
        cfg: ScenarioConfig,
        net: SimNetwork,
        rng: random.Random,
        primary: Endpoint,
        alternate: Endpoint,
        directory: aaa.Directory,
        accounting: aaa.Accounting,
        store: StableStore,
    ):
        super().__init__(cfg.sc.name, net)
        sc = cfg.sc
        self.cfg = cfg
        self.rng = rng
        self.primary = primary
        self.alternate = alternate
        self.directory = directory
        self.accounting = accounting
        self.store = store
        self.link_pool = PrefixPool(sc.link_pool_v6, 64, delegated=False, name="local")
        self.named_pools = {n: PrefixPool(p, 64, delegated=False, name=n) for n, p in sc.named_pools_v6.items()}
        self.delegation_v6 = PrefixPool(sc.delegation_pool_v6, sc.delegation_len_v6, name="delegation-v6")
        self.link_ipv4 = ipaddress.IPv4Address(sc.link_ipv4)
        self.endpoint_pool_v4 = AddressPool(sc.endpoint_pool_v4, exclude=(self.link_ipv4,))
        self.delegation_net_v4 = ipaddress.IPv4Network(sc.delegation_pool_v4)
        self.delegation_v4: dict[int, PrefixPool] = {}
        self.dhcp6 = Dhcpv6Server(SC_DUID, dns=tuple(ipaddress.IPv6Address(d) for d in sc.dns_v6))
        self.dns_v4 = tuple(ipaddress.IPv4Address(d) for d in sc.dns_v4)
        self.rib = Rib("sc")
        self.softwires: dict[int, ScSoftwire] = {}
        self.by_peer: dict[tuple[Endpoint, int | None], ScSoftwire] = {}
        self._count = 0

    @property
    def hint(self) -> aaa.Hint:
        return aaa.Hint(tunnel_medium=self.cfg.transport_af)

    def deadlines(self) -> list[int | None]:
        out: list[int | None] = []
        for sw in self.softwires.values():
            out += sw.deadlines()
        return out

    def tick(self, now: int) -> None:
        for sw in list(self.softwires.values()):
            sw.tick(now)

    def records(self) -> list[dict]:
        return [sw.record.to_dict() for sw in self.softwires.values() if sw.record is not None]

    # --- receive --------------------------------------------------------------------

    def receive(self, dgram: Datagram, now: int) -> None:
        buf = dgram.payload
        try:
            hdr = l2tp.decode_header(buf)
        except l2tp.CodecError as exc:
            self.emit("drop", reason="malformed", detail=str(exc))
            return
        if hdr.is_control and hdr.tunnel_id == 0:
            sw = self._sccrq_owner(dgram, buf)
        else:
            sw = self.softwires.get(hdr.tunnel_id)
        if sw is None:
            self.emit("drop", reason="unknown-tunnel", detail=f"tunnel {hdr.tunnel_id} from {fmt_endpoint(dgram.src)}")
            return
        sw.receive(buf, now)
        self.reschedule()

    def _sccrq_owner(self, dgram: Datagram, buf: bytes) -> ScSoftwire:
        try:
            raw = l2tp.decode_message(buf).value(l2tp.AvpType.ASSIGNED_TUNNEL_ID)
            peer_tid = l2tp.u16_value(raw) if raw is not None else None
        except l2tp.CodecError:
            peer_tid = None
        key = (dgram.src, peer_tid)
        sw = self.by_peer.get(key)
        if sw is None:
            sw = self._new_softwire(dgram.src)
            self.by_peer[key] = sw
        return sw

    def _new_softwire(self, peer: Endpoint) -> ScSoftwire:
        cfg = self.cfg
        self._count += 1
        tcfg = TunnelConfig(
            host_name=self.name,
            payload_af=cfg.payload_af,
            transport_af=cfg.transport_af,
            secret=cfg.tunnel_secret.encode() if cfg.tunnel_secret else None,
            keepalive=cfg.keepalive,
            respond_from_alternate=cfg.respond_from_alternate,
        )
        tunnel = sc_accept(tcfg, self.rng, frozenset(self.softwires))
        local = self.alternate if cfg.respond_from_alternate else self.primary
        sw = ScSoftwire(self, f"sw{self._count}", tunnel, None, local, peer)
        pcfg = PppConfig(
            link_mtu=cfg.link_mtu,
            transport_af=cfg.transport_af,
            payload_af=cfg.payload_af,
            name=self.name,
            require_chap=cfg.sc.require_chap,
            local_ipv4=self.link_ipv4 if cfg.payload_af is Af.IPV4 else None,
            keepalive=cfg.keepalive,
        )
        sw.link = PppLink(
            pcfg,
            self.rng,
            is_sc=True,
            verify=lambda name, ident, challenge, response: self._verify(sw, name, ident, challenge, response),
            ncp_params=lambda name: self._ncp_params(sw, name),
        )
        self.softwires[tunnel.local_tunnel_id] = sw
        self.emit("accept", softwire=sw.id, summary=f"{fmt_endpoint(peer)} via {fmt_endpoint(local)}")
        return sw

    # --- AAA ------------------------------------------------------------------------

    def _apply(self, sw: ScSoftwire, user: str, res: aaa.AccessResult) -> bool:
        try:
            sw.directives = aaa.apply_attributes(res)
        except aaa.InconsistentAttributes as exc:
            self.emit("aaa_error", softwire=sw.id, user=user, detail=str(exc))
            return False
        sw.user = user
        return True

    def _verify(self, sw: ScSoftwire, name: str, ident: int, challenge: bytes, response: bytes) -> bool:
        res = self.directory.access_request(name, aaa.ChapResponse(ident, challenge, response), self.hint)
        self.emit(
            "aaa",
            softwire=sw.id,
            user=name,
            verdict=res.verdict.value,
            attributes=[a.radius_name for a, _ in res.attributes],
            tunnel_medium=self.cfg.transport_af.label,
        )
        return res.accepted and self._apply(sw, name, res)

    def _ncp_params(self, sw: ScSoftwire, peer_name: str | None) -> NcpParams:
        if sw.directives is None:
            user = peer_name or sw.tunnel.peer_host_name
            res = self.directory.authorize(user, self.hint)
            self.emit("aaa", softwire=sw.id, user=user, verdict=res.verdict.value, attributes=[a.radius_name for a, _ in res.attributes])
            if not self._apply(sw, user, res):
                sw.directives = aaa.Directives()
                sw.user = user
        d = sw.directives
        sw.record = ProvisioningRecord(sw.user, sw.id)
        sw.prior = self.store.lookup(sw.user, self.name)
        if self.cfg.payload_af is Af.IPV6:
            iid = d.interface_id
            if iid is None and sw.prior is not None:
                iid = sw.prior.interface_id
            return NcpParams(interface_id=iid)
        addr = d.endpoint_v4
        if addr is None:
            addr = self._endpoint_v4(sw)
        else:
            try:
                self.endpoint_pool_v4.reserve(addr)
                sw.endpoint_v4_pooled = True
            except (KeyError, NoPrefixAvailable):
                pass
        sw.endpoint_v4 = addr
        sw.record.dns = self.dns_v4
        return NcpParams(ipv4_address=addr, dns=self.dns_v4)

    def _endpoint_v4(self, sw: ScSoftwire) -> ipaddress.IPv4Address | None:
        prior = sw.prior.endpoint_v4 if sw.prior else None
        try:
            if prior is not None:
                try:
                    self.endpoint_pool_v4.reserve(prior)
                    sw.endpoint_v4_pooled = True
                    return ipaddress.IPv4Address(prior)
                except (KeyError, NoPrefixAvailable):
                    pass
            addr = self.endpoint_pool_v4.allocate()
            sw.endpoint_v4_pooled = True
            return addr
        except NoPrefixAvailable:
            return None

    def _commit(self, sw: ScSoftwire, now: int) -> None:
        rec = sw.record
        a = Assignment(
            link_prefix_v6=str(sw.link_prefix) if sw.link_prefix else None,
            endpoint_v4=str(rec.endpoint_v4) if rec.endpoint_v4 else None,
            delegated_v6=str(rec.delegated_v6) if rec.delegated_v6 else None,
            delegated_v4=str(rec.delegated_v4) if rec.delegated_v4 else None,
            interface_id=sw.link.remote_iid if self.cfg.payload_af is Af.IPV6 else None,
        )
        self.store.commit(sw.user, self.name, a, now / 1e6)

    def _route(self, sw: ScSoftwire, prefix, origin: Origin) -> bool:
        net = ipaddress.ip_network(prefix)
        try:
            self.rib.inject(net, sw.id, origin)
        except Conflict as exc:
            self.emit("route_conflict", softwire=sw.id, detail=str(exc))
            return False
        sw.record.routes.append((str(net), sw.id))
        self.emit("route", rib="sc", op="add", prefix=str(net), next_hop=sw.id, origin=origin.value)
        return True

    # --- hooks ------------------------------------------------------------------------

    def session_up(self, sw: ScSoftwire, now: int) -> None:
        # Start as soon as the session exists; PPP has not named the user yet, so the Host Name stands in
        t = sw.tunnel
        info = aaa.SessionInfo(
            t.peer_host_name,
            sw.id,
            t.local_tunnel_id,
            t.remote_tunnel_id,
            t.local_session_id,
            t.remote_session_id,
            self.cfg.transport_af,
        )
        rec = self.accounting.start(info, now)
        if rec is not None:
            self.emit("accounting", softwire=sw.id, record=rec.to_dict())

    def ppp_up(self, sw: ScSoftwire, now: int) -> None:
        if self.cfg.payload_af is Af.IPV4:
            addr = sw.link.remote_ipv4
            sw.record.endpoint_v4 = addr
            self.emit("provision", softwire=sw.id, item="endpoint_v4", value=str(addr))
            self._route(sw, ipaddress.IPv4Network(addr), Origin.Connected)
            self._commit(sw, now)
        else:
            self.emit("provision", softwire=sw.id, item="interface_id", value=f"{sw.link.remote_iid:016x}")

    def tunnel_down(self, sw: ScSoftwire, down: TunnelDown, now: int) -> None:
        rec = self.accounting.stop(sw.id, sw.tunnel.stats.snapshot(), now)
        if rec is not None:
            self.emit("accounting", softwire=sw.id, record=rec.to_dict())
        for r in self.rib.withdraw_next_hop(sw.id):
            self.emit("route", rib="sc", op="del", prefix=str(r.prefix), next_hop=r.next_hop, origin=r.origin.value)
        self.dhcp6.release(sw.id)
        if sw.link_prefix_pool is not None:
            sw.link_prefix_pool.release(sw.link_prefix)
        if sw.offer_v6_pooled:
            self.delegation_v6.release(sw.offer_v6)
        if sw.offer_v4_pool is not None:
            sw.offer_v4_pool.release(sw.offer_v4)
        if sw.endpoint_v4_pooled and sw.endpoint_v4 is not None:
            self.endpoint_pool_v4.release(sw.endpoint_v4)
        sw.link_prefix_pool = sw.offer_v4_pool = None
        sw.offer_v6_pooled = sw.endpoint_v4_pooled = False

    def payload(self, sw: ScSoftwire, af: Af, packet: bytes, now: int) -> None:
        if _experiment(packet):
            sw.received.append(packet)
            return
        try:
            if af is Af.IPV6:
                self._payload_v6(sw, packet, now)
            else:
                self._payload_v4(sw, packet, now)
        except l2tp.CodecError as exc:
            self.emit("drop", softwire=sw.id, reason="malformed", detail=str(exc))

    # --- IPv6 --------------------------------------------------------------------------

    def _own_v6(self, sw: ScSoftwire) -> set[ipaddress.IPv6Address]:
        iid = sw.link.local_iid
        own = {nd.link_local(iid)}
        if sw.link_prefix is not None:
            own.add(nd.slaac_address(sw.link_prefix, iid))
        return own

    def _ra_prefix(self, sw: ScSoftwire) -> ipaddress.IPv6Network:
        d = sw.directives or aaa.Directives()
        prior = sw.prior.link_prefix_v6 if sw.prior else None
        if d.link_prefix_v6 is None and d.link_pool_v6 is None and prior and self.link_pool.contains(prior):
            try:
                prefix = self.link_pool.reserve(prior)
                sw.link_prefix_pool = self.link_pool
                return prefix
            except NoPrefixAvailable:
                pass
        prefix = nd.choose_ra_prefix(d.link_prefix_v6, d.link_pool_v6, self.named_pools, self.link_pool)
        if d.link_prefix_v6 is None:
            sw.link_prefix_pool = self.named_pools[d.link_pool_v6] if d.link_pool_v6 else self.link_pool
        return prefix

    def _payload_v6(self, sw: ScSoftwire, packet: bytes, now: int) -> None:
        if sw.link.local_iid is None:
            # IPV6CP not open on this side yet (the peer's ack overtook ours); the peer retries
            self.emit("drop", softwire=sw.id, reason="ncp-not-open")
            return
        icmp = nd.parse_icmpv6(packet)
        if icmp is not None:
            pkt, typ, body = icmp
            if typ == nd.ROUTER_SOLICITATION:
                self._on_rs(sw, now)
            elif typ == nd.NEIGHBOR_SOLICITATION:
                target = nd.decode_neighbor(typ, body).target
                if target in self._own_v6(sw):
                    sw.try_payload(nd.neighbor_message(nd.NEIGHBOR_ADVERTISEMENT, target, target))
                elif sw.link_prefix is not None and target in sw.link_prefix:
                    sw.record.endpoint_v6 = target
                    self.emit("provision", softwire=sw.id, item="endpoint_v6", value=str(target))
            return
        m = dhcpv6.unwrap(packet)
        if m is not None:
            self._on_dhcp6(sw, decode_ip(packet).src, m, now)

    def _on_rs(self, sw: ScSoftwire, now: int) -> None:
        if sw.link_prefix is None:
            try:
                sw.link_prefix = self._ra_prefix(sw)
            except NoPrefixAvailable as exc:
                self.emit("provision_error", softwire=sw.id, detail=str(exc))
                return
            sw.record.link_prefix_v6 = sw.link_prefix
            self._route(sw, sw.link_prefix, Origin.Connected)
            self._commit(sw, now)
        sc = self.cfg.sc
        sw.record.dns = self.dhcp6.dns
        ra = nd.sc_handle_rs(sw.link_prefix, dhcpv6_addresses=sc.dhcpv6_addresses, dhcpv6_info=bool(self.dhcp6.dns))
        sw.try_payload(nd.encode_ra(nd.link_local(sw.link.local_iid), ra))

    def _lease(self, sw: ScSoftwire, want_pd: bool, want_na: bool) -> Lease:
        lease = Lease()
        if want_pd:
            if sw.offer_v6 is None:
                d = sw.directives or aaa.Directives()
                if d.delegated_v6 is not None:
                    sw.offer_v6 = d.delegated_v6
                else:
                    prior = sw.prior.delegated_v6 if sw.prior else None
                    sw.offer_v6 = self._take(self.delegation_v6, prior)
                    sw.offer_v6_pooled = True
            lease.prefix = sw.offer_v6
        if want_na and sw.link_prefix is not None:
            lease.address = ipaddress.IPv6Address(int(sw.link_prefix.network_address) | 0x1000)
        return lease

    @staticmethod
    def _take(pool: PrefixPool, prior: str | None):
        if prior is not None and pool.contains(prior):
            try:
                return pool.reserve(prior)
            except NoPrefixAvailable:
                pass
        return pool.allocate()

    def _on_dhcp6(self, sw: ScSoftwire, src: IpAddress, m: dhcpv6.Dhcpv6Message, now: int) -> None:
        client = m.get(dhcpv6.OPT_CLIENTID)
        try:
            reply, lease = self.dhcp6.handle(m, sw.id, lambda pd, na: self._lease(sw, pd, na))
        except DuidMismatch as exc:
            self.emit("provision_error", softwire=sw.id, detail=str(exc))
            return
        self.emit("dhcp", softwire=sw.id, msg=m.msg_type.name, xid=m.xid)
        if client is not None and sw.record.duid is None:
            sw.record.duid = client
            self.emit("provision", softwire=sw.id, item="duid", value=client.hex(), user=sw.user)
        if lease is not None:
            if lease.prefix is not None and sw.record.delegated_v6 is None:
                sw.record.delegated_v6 = lease.prefix
                self.emit("provision", softwire=sw.id, item="delegated_v6", value=str(lease.prefix))
                self._route(sw, lease.prefix, Origin.Delegated)
            self._commit(sw, now)
        if reply is not None:
            self.emit("dhcp", softwire=sw.id, msg=reply.msg_type.name, xid=reply.xid)
            sw.try_payload(dhcpv6.wrap(nd.link_local(sw.link.local_iid), src, reply, to_server=False))

    # --- IPv4 --------------------------------------------------------------------------

    def _v4_prefix(self, sw: ScSoftwire, plen: int, prior) -> ipaddress.IPv4Network:
        if sw.offer_v4 is not None:
            return sw.offer_v4
        d = sw.directives or aaa.Directives()
        if d.delegated_v4 is not None:
            sw.offer_v4 = d.delegated_v4
            return sw.offer_v4
        if plen < self.delegation_net_v4.prefixlen:
            raise NoPrefixAvailable(f"/{plen} is larger than the delegation pool {self.delegation_net_v4}")
        pool = self.delegation_v4.get(plen)
        if pool is None:
            pool = self.delegation_v4[plen] = PrefixPool(self.delegation_net_v4, plen, name=f"delegation-v4/{plen}")
        if prior is None and sw.prior is not None and sw.prior.delegated_v4:
            prior = ipaddress.IPv4Network(sw.prior.delegated_v4)
        taken = [
            p for other in self.delegation_v4.values() if other is not pool for p in other
        ]
        choice = None
        if prior is not None and pool.contains(prior) and not any(prior.overlaps(t) for t in taken):
            try:
                choice = pool.reserve(prior)
            except NoPrefixAvailable:
                choice = None
        while choice is None:
            cand = pool.allocate()
            if not any(cand.overlaps(t) for t in taken):
                choice = cand
        sw.offer_v4, sw.offer_v4_pool = choice, pool
        return choice

    def _payload_v4(self, sw: ScSoftwire, packet: bytes, now: int) -> None:
        pkt = decode_ip(packet)
        if pkt.proto != PROTO_UDP:
            return
        _, dport, data = decode_udp(pkt.payload)
        if dport != dhcpv4.SERVER_PORT:
            return
        m = dhcpv4.decode_dhcpv4(data)
        self.emit("dhcp", softwire=sw.id, msg=m.op.name, xid=m.xid)
        reply: Dhcpv4Message
        if m.op is Op.DISCOVER and m.subnet_request is not None:
            try:
                info = dhcpv4.sc_handle_subnet_request(
                    m.subnet_request, lambda plen, prior: self._v4_prefix(sw, plen, prior), self.cfg.sc.delegation_len_v4
                )
                reply = Dhcpv4Message(Op.OFFER, m.xid, subnet_info=info)
            except (NoPrefixAvailable, InvalidPrefixLength, l2tp.CodecError) as exc:
                self.emit("provision_error", softwire=sw.id, detail=str(exc))
                reply = Dhcpv4Message(Op.NAK, m.xid)
        elif m.op is Op.REQUEST and (asked := _requested_info(m)) is not None and asked.prefix == sw.offer_v4:
            reply = Dhcpv4Message(Op.ACK, m.xid, subnet_info=asked)
            if sw.record.delegated_v4 is None:
                sw.record.delegated_v4 = sw.offer_v4
                self.emit("provision", softwire=sw.id, item="delegated_v4", value=str(sw.offer_v4))
                self._route(sw, sw.offer_v4, Origin.Delegated)
                self._commit(sw, now)
        else:
            reply = Dhcpv4Message(Op.NAK, m.xid)
        self.emit("dhcp", softwire=sw.id, msg=reply.op.name, xid=reply.xid)
        out = udp_packet(self.link_ipv4, pkt.src, dhcpv4.SERVER_PORT, dhcpv4.CLIENT_PORT, dhcpv4.encode_dhcpv4(reply))
        sw.try_payload(out)
