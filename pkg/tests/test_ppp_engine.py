from __future__ import annotations

import hashlib
import ipaddress
import random
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swforge.ppp import (
    AuthFailed,
    Credentials,
    IidExhausted,
    LinkDead,
    LinkFailed,
    MtuTooSmall,
    Ncp,
    NcpParams,
    NegotiationDiverged,
    Phase,
    PoolExhausted,
    PppConfig,
    PppLink,
    chap_digest,
    compute_ppp_mtu,
    next_iid,
    verify_chap,
)
from swforge.trace import seconds
from swforge.tunnel.config import KeepaliveConfig
from swforge.wire import ppp as w
from swforge.wire.ip import Af
from swforge.wire.ppp import Code, ControlPacket, PppFrame, PppProtocol

# independent header ledger: outer IP, UDP, L2TP data header (flags+ver,
# length, tunnel id, session id), PPP protocol field + address/control
HEADER_LEDGER = {
    Af.IPV4: [20, 8, 2 + 2 + 2 + 2, 2 + 2],
    Af.IPV6: [40, 8, 2 + 2 + 2 + 2, 2 + 2],
}


class TestMtu:
    def test_anchor(self):
        assert compute_ppp_mtu(1500, Af.IPV4, False) == 1460

    def test_ipv6_transport_matches_ledger(self):
        assert compute_ppp_mtu(1500, Af.IPV6, False) == 1500 - sum(HEADER_LEDGER[Af.IPV6]) == 1440

    def test_acfc_saves_two(self):
        assert compute_ppp_mtu(1500, Af.IPV4, True) == 1462

    def test_too_small(self):
        with pytest.raises(MtuTooSmall):
            compute_ppp_mtu(100, Af.IPV4, False)

    @given(link=st.integers(min_value=576, max_value=9000), af=st.sampled_from([Af.IPV4, Af.IPV6]), acfc=st.booleans())
    def test_monotone(self, link, af, acfc):
        m = compute_ppp_mtu(link, af, acfc)
        assert compute_ppp_mtu(link + 1, af, acfc) == m + 1
        assert compute_ppp_mtu(link, Af.IPV4, acfc) > compute_ppp_mtu(link, Af.IPV6, acfc)
        assert compute_ppp_mtu(link, af, True) > compute_ppp_mtu(link, af, False)


class Pair:
    """Two links joined back to back; frames are delivered in order."""

    def __init__(self, si_cfg: PppConfig, sc_cfg: PppConfig, *, users=None, params=None, seed=11):
        rng = random.Random(seed)
        self.users = users or {}
        self.params = params
        self.verified: list[str] = []
        self.si = PppLink(si_cfg, rng, is_sc=False)
        self.sc = PppLink(sc_cfg, rng, is_sc=True, verify=self._verify, ncp_params=self._params)
        self.log: list[tuple[str, PppFrame]] = []
        self.failures: list[tuple[str, LinkFailed]] = []
        self.now = 0

    def _verify(self, name, ident, challenge, response):
        self.verified.append(name)
        secret = self.users.get(name)
        return secret is not None and verify_chap(secret, ident, challenge, response)

    def _params(self, user):
        if callable(self.params):
            return self.params(user)
        return self.params or NcpParams()

    def _pump(self, src: str, outs):
        queue = [(src, o) for o in outs]
        while queue:
            origin, o = queue.pop(0)
            if isinstance(o, LinkFailed):
                self.failures.append((origin, o))
                continue
            if not isinstance(o, PppFrame):
                continue
            self.log.append((origin, o))
            dst, name = (self.sc, "sc") if origin == "si" else (self.si, "si")
            queue += [(name, x) for x in dst.receive(o, self.now)]

    def run(self, until=seconds(200)):
        first, second = self.si.open(self.now), self.sc.open(self.now)
        self._pump("si", first)
        self._pump("sc", second)
        while self.now < until:
            deadlines = [d for d in (self.si.next_deadline(), self.sc.next_deadline()) if d is not None]
            if not deadlines or min(deadlines) > until:
                break
            self.now = min(deadlines)
            self._pump("si", self.si.on_timer(self.now))
            self._pump("sc", self.sc.on_timer(self.now))
        return self

    def packets(self, who, proto):
        return [w.decode_cp(f.payload) for o, f in self.log if o == who and f.protocol is proto]


def v6(**kw):
    return PppConfig(payload_af=Af.IPV6, **kw)


def v4(**kw):
    return PppConfig(payload_af=Af.IPV4, **kw)


class TestLcp:
    def test_one_exchange_per_direction(self):
        p = Pair(v6(), v6()).run(until=0)
        for who in ("si", "sc"):
            lcp = p.packets(who, PppProtocol.LCP)
            assert sorted(c.code for c in lcp) == [Code.CONFIGURE_REQUEST, Code.CONFIGURE_ACK]
        assert p.si.phase is Phase.Up and p.sc.phase is Phase.Up
        assert p.si.mtu == p.sc.mtu == 1460

    def test_acfc_rejected_by_policy(self):
        p = Pair(v6(propose_acfc=True), v6(accept_acfc=False)).run(until=0)
        rej = [c for c in p.packets("sc", PppProtocol.LCP) if c.code == Code.CONFIGURE_REJECT]
        assert rej and w.decode_options(rej[0].data) == [(w.LCP_ACFC, b"")]
        assert p.si.phase is Phase.Up and not p.si.acfc_accepted and not p.sc.acfc_accepted
        assert p.si.mtu == 1460

    def test_acfc_both_ways(self):
        p = Pair(v6(propose_acfc=True), v6(propose_acfc=True)).run(until=0)
        assert p.si.acfc_accepted and p.sc.acfc_accepted
        assert p.si.mtu == p.sc.mtu == 1462

    def test_unknown_option_rejected(self):
        link = PppLink(v6(), random.Random(1), is_sc=True)
        link.open(0)
        req = ControlPacket(Code.CONFIGURE_REQUEST, 9, w.encode_options([(w.LCP_PFC, b""), (w.LCP_MRU, b"\x05\xb4")]))
        (reply,) = [o for o in link.receive(w.frame(PppProtocol.LCP, req), 0) if isinstance(o, PppFrame)]
        pkt = w.decode_cp(reply.payload)
        assert pkt.code == Code.CONFIGURE_REJECT and pkt.identifier == 9
        assert w.decode_options(pkt.data) == [(w.LCP_PFC, b"")]

    def test_diverges_without_peer(self):
        link = PppLink(v6(max_configure=10), random.Random(1), is_sc=False)
        outs = link.open(0)
        now = 0
        while link.next_deadline() is not None:
            now = link.next_deadline()
            outs += link.on_timer(now)
        fails = [o for o in outs if isinstance(o, LinkFailed)]
        assert isinstance(fails[0].error, NegotiationDiverged)
        assert sum(isinstance(o, PppFrame) for o in outs) == 10
        assert now == seconds(30)

    def test_chap_option_carried_and_acked(self):
        creds = Credentials("alice", b"pw")
        p = Pair(v6(credentials=creds), v6(require_chap=True), users={"alice": b"pw"}).run(until=0)
        sc_req = [c for c in p.packets("sc", PppProtocol.LCP) if c.code == Code.CONFIGURE_REQUEST][0]
        assert (w.LCP_AUTH_PROTOCOL, b"\xc2\x23\x05") in w.decode_options(sc_req.data)
        si_ack = [c for c in p.packets("si", PppProtocol.LCP) if c.code == Code.CONFIGURE_ACK]
        assert si_ack and si_ack[0].data == sc_req.data


class TestChap:
    def test_success(self):
        creds = Credentials("alice", b"pw")
        p = Pair(v6(credentials=creds), v6(require_chap=True), users={"alice": b"pw"}).run(until=0)
        assert p.verified == ["alice"]
        assert p.si.history == [Phase.Dead, Phase.LcpNegotiating, Phase.Authenticating, Phase.NcpNegotiating, Phase.Up]
        assert p.sc.peer_name == "alice"
        (challenge,) = p.packets("sc", PppProtocol.CHAP)[:1]
        (response,) = p.packets("si", PppProtocol.CHAP)
        chal, _ = w.parse_chap_value(challenge)
        value, name = w.parse_chap_value(response)
        oracle = hashlib.md5(struct.pack("B", response.identifier) + b"pw" + chal).digest()
        assert value == oracle and name == "alice"

    def test_wrong_secret(self):
        creds = Credentials("alice", b"nope")
        p = Pair(v6(credentials=creds), v6(require_chap=True), users={"alice": b"pw"}).run(until=0)
        codes = [c.code for c in p.packets("sc", PppProtocol.CHAP)]
        assert codes == [w.CHAP_CHALLENGE, w.CHAP_FAILURE]
        assert {type(f.error) for _, f in p.failures} == {AuthFailed}
        assert p.si.phase is Phase.Dead and p.sc.phase is Phase.Dead

    def test_no_auth_skips_phase(self):
        p = Pair(v6(), v6()).run(until=0)
        assert Phase.Authenticating not in p.si.history
        assert p.packets("sc", PppProtocol.CHAP) == []

    def test_si_without_credentials_rejects_auth(self):
        p = Pair(v6(), v6(require_chap=True)).run(until=0)
        assert p.failures and isinstance(p.failures[0][1].error, AuthFailed)

    def test_digest_oracle(self):
        assert chap_digest(7, b"s", b"c") == hashlib.md5(b"\x07sc").digest()


class TestIpv6cp:
    def test_distinct_iids(self):
        p = Pair(v6(), v6()).run(until=0)
        assert p.si.ncp is Ncp.IPV6CP
        assert p.si.local_iid == p.sc.remote_iid
        assert p.sc.local_iid == p.si.remote_iid
        assert p.si.local_iid != p.si.remote_iid
        assert p.packets("si", PppProtocol.IPCP) == []

    def test_collision_resolved(self):
        p = Pair(v6(), v6(), params=NcpParams(interface_id=0x1111))
        p.si.rng = random.Random(0)
        # force the initiator to propose the same identifier
        p.si.rng.getrandbits = lambda n: 0x1111
        p.run(until=0)
        naks = [c for c in p.packets("sc", PppProtocol.IPV6CP) if c.code == Code.CONFIGURE_NAK]
        assert naks and w.decode_options(naks[0].data) == [(w.IPV6CP_INTERFACE_ID, (0x1112).to_bytes(8, "big"))]
        assert p.si.local_iid == 0x1112 and p.sc.local_iid == 0x1111
        assert p.si.phase is Phase.Up

    def test_framed_interface_id_in_sc_request(self):
        p = Pair(v6(), v6(), params=NcpParams(interface_id=0x0200_5EFF_FE00_5301)).run(until=0)
        req = p.packets("sc", PppProtocol.IPV6CP)[0]
        assert req.code == Code.CONFIGURE_REQUEST
        assert w.decode_options(req.data) == [(w.IPV6CP_INTERFACE_ID, (0x0200_5EFF_FE00_5301).to_bytes(8, "big"))]
        assert p.si.remote_iid == 0x0200_5EFF_FE00_5301

    def test_exhausted(self):
        link = PppLink(v6(), random.Random(1), is_sc=True, ncp_params=lambda u: NcpParams(interface_id=5))
        link.open(0)
        link.lcp.opened = True
        link.auth_done = True
        link._advance(0)
        outs = []
        for i in range(4):
            req = ControlPacket(Code.CONFIGURE_REQUEST, 50 + i, w.encode_options([(w.IPV6CP_INTERFACE_ID, (5).to_bytes(8, "big"))]))
            outs += link.receive(w.frame(PppProtocol.IPV6CP, req), 0)
        fails = [o for o in outs if isinstance(o, LinkFailed)]
        assert len(fails) == 1 and isinstance(fails[0].error, IidExhausted)

    def test_next_iid(self):
        assert next_iid(1) == 2
        assert next_iid((1 << 64) - 1) == 1

    @settings(max_examples=40)
    @given(seed=st.integers(0, 10_000), clash=st.booleans())
    def test_post_up_uniqueness(self, seed, clash):
        p = Pair(v6(), v6(), seed=seed)
        if clash:
            p.si.rng.getrandbits = lambda n: 42
            p.params = NcpParams(interface_id=42)
        p.run(until=0)
        for link in (p.si, p.sc):
            if link.phase is Phase.Up:
                assert link.local_iid != link.remote_iid
        assert p.si.phase is Phase.Up


class TestIpcp:
    def test_framed_ip_address(self):
        addr = ipaddress.IPv4Address("192.0.2.10")
        p = Pair(v4(), v4(local_ipv4=ipaddress.IPv4Address("192.0.2.1")), params=NcpParams(ipv4_address=addr)).run(until=0)
        assert p.si.local_ipv4 == addr
        assert p.sc.remote_ipv4 == addr
        assert p.si.phase is Phase.Up and p.si.ncp is Ncp.IPCP
        first = p.packets("si", PppProtocol.IPCP)[0]
        assert dict(w.decode_options(first.data))[w.IPCP_ADDRESS] == b"\x00\x00\x00\x00"

    def test_dns_served(self):
        dns = (ipaddress.ip_address("198.51.100.53"), ipaddress.ip_address("198.51.100.54"))
        params = NcpParams(ipv4_address=ipaddress.IPv4Address("198.51.100.1"), dns=dns)
        p = Pair(v4(), v4(), params=params).run(until=0)
        nak = [c for c in p.packets("sc", PppProtocol.IPCP) if c.code == Code.CONFIGURE_NAK][0]
        got = dict(w.decode_options(nak.data))
        assert got[w.IPCP_PRIMARY_DNS] == dns[0].packed and got[w.IPCP_SECONDARY_DNS] == dns[1].packed
        assert p.si.dns == dns

    def test_dns_rejected_when_unconfigured(self):
        p = Pair(v4(), v4(), params=NcpParams(ipv4_address=ipaddress.IPv4Address("198.51.100.1"))).run(until=0)
        assert p.si.phase is Phase.Up and p.si.dns == ()

    def test_pool_exhausted(self):
        p = Pair(v4(), v4(), params=NcpParams()).run(until=0)
        assert any(isinstance(f.error, PoolExhausted) for _, f in p.failures)

    def test_wrong_ncp_protocol_rejected(self):
        p = Pair(v4(), v4(), params=NcpParams(ipv4_address=ipaddress.IPv4Address("198.51.100.1"))).run(until=0)
        stray = w.frame(PppProtocol.IPV6CP, ControlPacket(Code.CONFIGURE_REQUEST, 1, b""))
        (out,) = p.sc.receive(stray, 0)
        pkt = w.decode_cp(out.payload)
        assert out.protocol is PppProtocol.LCP and pkt.code == Code.PROTOCOL_REJECT
        assert pkt.data[:2] == b"\x80\x57"


class TestEcho:
    def cfg(self, **kw):
        ka = KeepaliveConfig(lcp_echo_enabled=True, lcp_echo_interval=30)
        return v6(keepalive=ka, **kw)

    def test_replies_keep_link_up(self):
        p = Pair(self.cfg(), self.cfg()).run(until=seconds(300))
        assert p.si.phase is Phase.Up and not p.failures
        reqs = [c for c in p.packets("si", PppProtocol.LCP) if c.code == Code.ECHO_REQUEST]
        assert len(reqs) == 10

    def test_silent_peer(self):
        link = Pair(self.cfg(), v6()).run(until=0).si
        assert link.phase is Phase.Up
        fails = []
        t = 0
        while link.next_deadline() is not None:
            t = link.next_deadline()
            fails += [o for o in link.on_timer(t) if isinstance(o, LinkFailed)]
        assert isinstance(fails[0].error, LinkDead) and t == seconds(120)

    def test_echo_reply_carries_magic(self):
        p = Pair(self.cfg(), self.cfg()).run(until=seconds(30))
        rep = [c for c in p.packets("sc", PppProtocol.LCP) if c.code == Code.ECHO_REPLY][0]
        assert struct.unpack("!I", rep.data[:4])[0] == p.sc.lcp.magic


@settings(max_examples=30)
@given(
    payload=st.sampled_from([Af.IPV4, Af.IPV6]),
    chap=st.booleans(),
    acfc=st.booleans(),
    seed=st.integers(0, 1000),
)
def test_exactly_one_ncp(payload, chap, acfc, seed):
    creds = Credentials("u", b"k") if chap else None
    params = NcpParams(ipv4_address=ipaddress.IPv4Address("198.51.100.7"))
    p = Pair(
        PppConfig(payload_af=payload, credentials=creds, propose_acfc=acfc),
        PppConfig(payload_af=payload, require_chap=chap),
        users={"u": b"k"},
        params=params,
        seed=seed,
    ).run(until=0)
    protos = {f.protocol for _, f in p.log if f.protocol in (PppProtocol.IPCP, PppProtocol.IPV6CP)}
    assert len(protos) == 1
    assert p.si.phase is Phase.Up
    phases = p.si.history
    assert phases == sorted(phases)
