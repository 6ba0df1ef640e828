"""Build the topology for a scenario, drive it through the three steps and check the outcome."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .. import aaa
from ..netsim import LinkConfig, NatBox, SimNetwork
from ..provisioning.rib import Origin
from ..provisioning.stable import StableStore
from ..trace import Trace, seconds
from ..tunnel.engine import DownReason, WrongAddressFamily
from ..wire.ip import Af, synthetic_packet
from .config import ScenarioConfig
from .nodes import ALTERNATE_PORT, L2TP_PORT, SoftwireConcentrator, SoftwireInitiator, default_route

EXIT_OK = 0
EXIT_PROTOCOL = 1
EXIT_USAGE = 2

STEPS = ("l2tp", "ppp", "provisioning", "traffic", "maintenance")
# the extra LAN hop when the initiator sits behind a CPE
CPE_HOP_DELAY = 0.002
TEARDOWN_GRACE = 10.0


class StepFailed(Exception):
    def __init__(self, step: str, detail: str):
        super().__init__(f"{step}: {detail}")
        self.step = step
        self.detail = detail


@dataclass
class ExitReport:
    scenario: str
    exit_code: int
    step: str | None = None
    detail: str = ""
    trace_path: str | None = None
    stats: dict[str, dict[str, int]] = field(default_factory=dict)
    records: list[dict] = field(default_factory=list)
    routes: dict[str, list[dict]] = field(default_factory=dict)
    accounting: list[dict] = field(default_factory=list)
    wrong_af: dict[str, Any] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.exit_code == EXIT_OK

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario,
            "exit_code": self.exit_code,
            "step": self.step,
            "detail": self.detail,
            "trace_path": self.trace_path,
            "stats": self.stats,
            "records": self.records,
            "routes": self.routes,
            "accounting": self.accounting,
            "wrong_af": self.wrong_af,
        }


class Simulation:
    """One scenario instance: network, AAA, both nodes. ``run`` drives it."""

    def __init__(self, cfg: ScenarioConfig, *, store: StableStore | None = None, accounting_path: str | Path | None = None):
        self.cfg = cfg
        self.trace = Trace()
        self.net = SimNetwork(cfg.seed, self.trace)
        addrs = cfg.transport_addresses()
        self.addrs = addrs
        if cfg.aaa.get("users"):
            self.directory = aaa.Directory.from_dict(cfg.aaa)
        else:
            self.directory = aaa.Directory()
            self.directory.add(cfg.user.name, cfg.user.secret)
        self.accounting = aaa.Accounting(accounting_path)
        if store is None:
            store = StableStore(cfg.sc.stable_store, cfg.sc.stable_policy)
        self.store = store

        primary = (addrs["sc"], L2TP_PORT)
        alternate = (addrs["sc_alternate"], ALTERNATE_PORT)
        self.sc = SoftwireConcentrator(
            cfg, self.net, random.Random(f"{cfg.seed}/sc"), primary, alternate, self.directory, self.accounting, store
        )
        link = LinkConfig(delay=seconds(cfg.delay), loss_rate=cfg.loss_rate, jitter=seconds(cfg.jitter))
        self.net.attach(self.sc, addrs["sc"], addrs["sc_alternate"], link=link)

        si_delay = cfg.delay + (CPE_HOP_DELAY if cfg.behind_cpe else 0.0)
        si_link = LinkConfig(delay=seconds(si_delay), loss_rate=cfg.loss_rate, jitter=seconds(cfg.jitter))
        self.nat: NatBox | None = None
        if cfg.nat is not None:
            self.nat = NatBox("nat", addrs["nat"], cfg.nat, seconds(cfg.binding_ttl))
            self.net.add_nat(self.nat)
            si_addr = addrs["si_inside"]
        else:
            si_addr = addrs["si"]
        self.si = SoftwireInitiator(cfg, self.net, random.Random(f"{cfg.seed}/si"), si_addr, primary)
        self.net.attach(self.si, si_addr, link=si_link, nat=self.nat)
        self.traffic_rng = random.Random(f"{cfg.seed}/traffic")

    # --- helpers ------------------------------------------------------------------

    def emit(self, event: str, **fields: Any) -> None:
        self.trace.emit(self.net.clock, event, **fields)

    @property
    def si_softwire(self):
        return self.si.softwire

    @property
    def sc_softwire(self):
        # the concentrator side of the initiator's tunnel
        sw = self.si.softwire
        if sw is None:
            return None
        return self.sc.softwires.get(sw.tunnel.remote_tunnel_id)

    def run_for(self, duration: float, stop=None) -> None:
        self.net.run_until(self.net.clock + seconds(duration), stop=stop)

    # --- steps --------------------------------------------------------------------

    def establish(self) -> None:
        cfg = self.cfg
        self.emit("run_start", scenario=cfg.id, seed=cfg.seed, summary=cfg.title or None)
        self.si.start(self.net.clock)
        self.run_for(cfg.setup_timeout, stop=lambda: self._both_up() or self.si.failure is not None)
        self.check_setup()

    def _both_up(self) -> bool:
        # with jitter the initiator can finish before the concentrator sees its final ack
        sc_sw = self.sc_softwire
        return self.si.ready and sc_sw is not None and sc_sw.ppp_up_at is not None

    def check_setup(self) -> None:
        si, cfg = self.si, self.cfg
        if si.failure is not None:
            raise StepFailed(*si.failure)
        sw = si.softwire
        if not si.ready:
            if sw.session_up_at is None:
                raise StepFailed("l2tp", f"no session after {cfg.setup_timeout:g} s")
            if sw.ppp_up_at is None:
                raise StepFailed("ppp", f"PPP not up after {cfg.setup_timeout:g} s")
            raise StepFailed("provisioning", f"not provisioned after {cfg.setup_timeout:g} s")
        problems: list[str] = []
        routes = {(str(r["prefix"]), r["origin"]) for r in si.rib.dump()}
        if (str(default_route(cfg.payload_af)), Origin.Default.value) not in routes:
            problems.append("initiator has no default route")
        if si.payload_address is None:
            problems.append("initiator has no payload address")
        sc_routes = {r["prefix"] for r in self.sc.rib.dump()}
        delegated = si.delegated_v6 if cfg.payload_af is Af.IPV6 else si.delegated_v4
        if cfg.router:
            if delegated is None:
                problems.append("router initiator got no delegated prefix")
            elif str(delegated) not in sc_routes:
                problems.append(f"concentrator RIB lacks {delegated}")
        elif delegated is not None:
            problems.append("host initiator received a delegated prefix")
        if cfg.payload_af is Af.IPV4 and si.address_v4 is not None and f"{si.address_v4}/32" not in sc_routes:
            problems.append(f"concentrator RIB lacks {si.address_v4}/32")
        if problems:
            raise StepFailed("provisioning", "; ".join(problems))

    def traffic(self) -> None:
        cfg, t = self.cfg, self.cfg.traffic
        si_sw, sc_sw = self.si_softwire, self.sc_softwire
        local, remote = self.si.payload_address, cfg.remote_host()
        mtu = si_sw.tunnel.mtu or cfg.link_mtu
        floor = max(t.min_size, cfg.payload_af.header_len)
        sizes = []
        for _ in range(2 * t.packets):
            sizes.append(self.traffic_rng.randint(floor, max(floor, mtu)) if t.random_sizes else t.size)
        want_si = len(self.si.received) + t.packets
        want_sc = len(sc_sw.received) + t.packets
        for i in range(t.packets):
            si_sw.try_payload(synthetic_packet(local, remote, sizes[2 * i]))
            sc_sw.try_payload(synthetic_packet(remote, local, sizes[2 * i + 1]))
            self.run_for(t.spacing)
        self.run_for(max(4 * cfg.delay + cfg.jitter, t.spacing))
        self.emit(
            "traffic",
            sent=2 * t.packets,
            si_received=len(self.si.received) - want_si + t.packets,
            sc_received=len(sc_sw.received) - want_sc + t.packets,
        )
        if cfg.loss_rate == 0 and (len(self.si.received) != want_si or len(sc_sw.received) != want_sc):
            raise StepFailed(
                "traffic",
                f"delivered {len(sc_sw.received)}/{want_sc} upstream, {len(self.si.received)}/{want_si} downstream",
            )

    def wrong_af_check(self) -> dict[str, Any]:
        """Push a transport-family packet into the softwire; it must be refused and counted."""
        cfg = self.cfg
        wrong = Af.IPV4 if cfg.payload_af is Af.IPV6 else Af.IPV6
        tunnel = self.si_softwire.tunnel
        before = tunnel.stats.wrong_af_drops
        src = self.addrs["si"] if cfg.transport_af is wrong else ("192.0.2.99" if wrong is Af.IPV4 else "2001:db8::99")
        dst = self.addrs["sc"] if cfg.transport_af is wrong else ("192.0.2.98" if wrong is Af.IPV4 else "2001:db8::98")
        packet = synthetic_packet(src, dst, 64)
        try:
            tunnel.encapsulate(packet)
            rejected = False
        except WrongAddressFamily:
            rejected = True
        counted = tunnel.stats.wrong_af_drops - before
        self.emit("wrong_af", node="si", af=wrong.label, rejected=rejected, counted=counted)
        return {"af": wrong.label, "rejected": rejected, "counted": counted}

    def hold(self) -> None:
        if self.cfg.hold <= 0:
            return
        sw = self.si_softwire
        self.run_for(self.cfg.hold, stop=lambda: sw.down is not None)
        if sw.down is not None:
            raise StepFailed("maintenance", f"softwire lost: {sw.down.reason.value} {sw.down.detail}".strip())

    def teardown(self) -> None:
        sw = self.si_softwire
        sw.run(sw.tunnel.teardown(DownReason.ADMIN, self.net.clock, detail="administrative teardown"), self.net.clock)
        self.si.reschedule()
        self.run_for(TEARDOWN_GRACE)

    # --- report -------------------------------------------------------------------

    def finish(self, code: int, step: str | None, detail: str, wrong_af: dict, trace_path: str | Path | None) -> ExitReport:
        for name, rib in (("si", self.si.rib), (self.sc.name, self.sc.rib)):
            self.emit("rib", node=name, routes=rib.dump())
        records = self.sc.records()
        for rec in records:
            self.emit("record", node=self.sc.name, record=rec)
        stats = {}
        if self.si_softwire is not None:
            stats["si"] = self.si_softwire.tunnel.stats.snapshot()
        sc_sw = self.sc_softwire
        if sc_sw is not None:
            stats[self.sc.name] = sc_sw.tunnel.stats.snapshot()
        self.emit("run_end", scenario=self.cfg.id, exit_code=code, step=step, detail=detail or None)
        if trace_path is not None:
            self.trace.write(trace_path)
        return ExitReport(
            scenario=self.cfg.id,
            exit_code=code,
            step=step,
            detail=detail,
            trace_path=str(trace_path) if trace_path is not None else None,
            stats=stats,
            records=records,
            routes={"si": self.si.rib.dump(), self.sc.name: self.sc.rib.dump()},
            accounting=[r.to_dict() for r in self.accounting.records],
            wrong_af=wrong_af,
        )

    def run(self, trace_path: str | Path | None = None) -> ExitReport:
        wrong_af: dict[str, Any] = {}
        code, step, detail = EXIT_OK, None, ""
        try:
            self.establish()
            self.traffic()
            wrong_af = self.wrong_af_check()
            self.hold()
            if self.cfg.teardown:
                self.teardown()
        except StepFailed as exc:
            code, step, detail = EXIT_PROTOCOL, exc.step, exc.detail
            self.emit("step_failed", step=step, detail=detail)
        return self.finish(code, step, detail, wrong_af, trace_path)


def run(cfg: ScenarioConfig, trace_path: str | Path | None = None, **kwargs: Any) -> ExitReport:
    return Simulation(cfg, **kwargs).run(trace_path)
