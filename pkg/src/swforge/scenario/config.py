"""Scenario configuration: one JSON file per deployment scenario, plus overrides."""

from __future__ import annotations

import copy
import dataclasses
import ipaddress
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from ..netsim import Filtering
from ..tunnel.config import ConfigError, KeepaliveConfig
from ..wire.ip import Af

NAMED = ("3.1.1", "3.1.2", "3.1.3", "3.1.4", "3.2.1", "3.2.2", "3.2.3", "3.2.4")
ROLES = ("host", "router")


class UsageError(ValueError):
    """Bad scenario name, file or override; maps to exit code 2."""


@dataclass
class UserConfig:
    name: str = "cpe"
    secret: str = "softwire"


@dataclass
class TrafficConfig:
    packets: int = 10
    size: int = 100
    # draw each size uniformly from [min_size, PPP MTU] with the run's RNG
    random_sizes: bool = False
    min_size: int = 60
    spacing: float = 0.01


@dataclass
class ScConfig:
    name: str = "lns"
    link_pool_v6: str = "2001:db8:1::/48"
    named_pools_v6: dict[str, str] = field(default_factory=lambda: {"north": "2001:db8:2::/48"})
    delegation_pool_v6: str = "2001:db8:8000::/40"
    delegation_len_v6: int = 48
    link_ipv4: str = "192.0.2.1"
    endpoint_pool_v4: str = "192.0.2.0/25"
    delegation_pool_v4: str = "203.0.113.128/25"
    delegation_len_v4: int = 28
    dns_v6: list[str] = field(default_factory=lambda: ["2001:db8:53::53"])
    dns_v4: list[str] = field(default_factory=lambda: ["192.0.2.53"])
    # RA M flag: addresses from DHCPv6 instead of SLAAC alone
    dhcpv6_addresses: bool = False
    stable_policy: str = "stable"
    stable_store: str | None = None
    require_chap: bool = True


@dataclass
class ScenarioConfig:
    id: str = "custom"
    title: str = ""
    seed: int = 0
    transport_af: Af = Af.IPV4
    payload_af: Af = Af.IPV6
    si_role: str = "host"
    behind_cpe: bool = False
    nat: Filtering | None = None
    binding_ttl: float = 120.0
    respond_from_alternate: bool = False
    link_mtu: int = 1500
    delay: float = 0.01
    loss_rate: float = 0.0
    jitter: float = 0.0
    keepalive: KeepaliveConfig = field(default_factory=KeepaliveConfig)
    tunnel_secret: str | None = None
    user: UserConfig = field(default_factory=UserConfig)
    aaa: dict[str, Any] = field(default_factory=dict)
    sc: ScConfig = field(default_factory=ScConfig)
    # host-role IPv6 initiator: "info" (Information-Request) or "host" (Solicit, no IA)
    dhcpv6_mode: str = "info"
    supported_min_len_v4: int | None = None
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    setup_timeout: float = 60.0
    hold: float = 0.0
    teardown: bool = False

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        try:
            self.transport_af = Af.parse(self.transport_af)
            self.payload_af = Af.parse(self.payload_af)
        except (ValueError, KeyError) as exc:
            raise UsageError(f"bad address family: {exc}") from None
        if self.id != "custom" and self.id not in NAMED:
            raise UsageError(f"unknown scenario id {self.id!r}; expected one of {', '.join(NAMED)} or custom")
        if self.id in NAMED and self.payload_af is self.transport_af:
            raise UsageError(f"scenario {self.id} needs different payload and transport families")
        if self.si_role not in ROLES:
            raise UsageError(f"si_role must be host or router, not {self.si_role!r}")
        if self.dhcpv6_mode not in ("info", "host"):
            raise UsageError(f"dhcpv6_mode must be info or host, not {self.dhcpv6_mode!r}")
        if self.nat is not None and not isinstance(self.nat, Filtering):
            try:
                self.nat = Filtering.parse(self.nat)
            except ValueError:
                raise UsageError(f"nat must be eif, adf or apdf, not {self.nat!r}") from None
        if not 0.0 <= self.loss_rate <= 1.0:
            raise UsageError("loss_rate must be in [0, 1]")
        if self.traffic.packets < 0 or self.traffic.size < 0:
            raise UsageError("traffic counts must be non-negative")

    @property
    def router(self) -> bool:
        return self.si_role == "router"

    @property
    def wants_delegation(self) -> bool:
        return self.router

    # --- addressing -------------------------------------------------------------

    def transport_addresses(self) -> dict[str, ipaddress.IPv4Address | ipaddress.IPv6Address]:
        """Outer addresses: SC, its alternate, the SI and (with NAT) the NAT's outside."""
        if self.transport_af is Af.IPV4:
            plan = {"sc": "203.0.113.1", "sc_alternate": "203.0.113.2", "si": "198.51.100.10", "si_inside": "10.0.0.10", "nat": "198.51.100.2"}
            if self.behind_cpe:
                plan["si"] = "198.51.100.20"
                plan["si_inside"] = "192.168.1.10"
        else:
            plan = {"sc": "2001:db8:5c::1", "sc_alternate": "2001:db8:5c::2", "si": "2001:db8:a::10", "si_inside": "fd00:a::10", "nat": "2001:db8:a::2"}
            if self.behind_cpe:
                plan["si"] = "2001:db8:a:1::10"
                plan["si_inside"] = "fd00:a:1::10"
        return {k: ipaddress.ip_address(v) for k, v in plan.items()}

    def remote_host(self) -> ipaddress.IPv4Address | ipaddress.IPv6Address:
        """A payload-side host beyond the SC, used as the traffic peer."""
        return ipaddress.ip_address("2001:db8:ffff::1" if self.payload_af is Af.IPV6 else "192.0.2.200")


# --- loading ------------------------------------------------------------------------


def _build(cls, data: dict[str, Any], where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    stray = sorted(set(data) - names)
    if stray:
        raise UsageError(f"{where}: unknown field(s) {', '.join(stray)}")
    return cls(**data)


def from_dict(data: dict[str, Any]) -> ScenarioConfig:
    data = dict(data)
    try:
        if "keepalive" in data:
            data["keepalive"] = _build(KeepaliveConfig, data["keepalive"], "keepalive")
        if "user" in data:
            data["user"] = _build(UserConfig, data["user"], "user")
        if "sc" in data:
            data["sc"] = _build(ScConfig, data["sc"], "sc")
        if "traffic" in data:
            data["traffic"] = _build(TrafficConfig, data["traffic"], "traffic")
        return _build(ScenarioConfig, data, "scenario")
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    except TypeError as exc:
        raise UsageError(f"bad scenario value: {exc}") from None


def builtin_path(scenario_id: str):
    return resources.files("swforge.scenario").joinpath("scenarios", f"{scenario_id}.json")


def load(name_or_path: str | Path) -> ScenarioConfig:
    """A named scenario (``3.1.2``) or a path to a JSON scenario file."""
    text = str(name_or_path)
    if text in NAMED:
        raw = builtin_path(text).read_text(encoding="utf-8")
        where = text
    else:
        path = Path(text)
        if not path.is_file():
            raise UsageError(f"no scenario named {text!r} and no such file")
        raw = path.read_text(encoding="utf-8")
        where = str(path)
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{where}: {exc}") from None
    if "seed" not in data:
        raise UsageError(f"{where}: scenario files must set a seed")
    return from_dict(data)


def override(cfg: ScenarioConfig, **changes: Any) -> ScenarioConfig:
    """Copy of ``cfg`` with top-level fields replaced; None values are skipped."""
    changes = {k: v for k, v in changes.items() if v is not None}
    return dataclasses.replace(copy.deepcopy(cfg), **changes)
