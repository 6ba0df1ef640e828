from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field

from .combos import V4Scope, V6Scope


def v6_scope(addr: ipaddress.IPv6Address | ipaddress.IPv6Network) -> V6Scope:
    net = addr if isinstance(addr, ipaddress.IPv6Network) else ipaddress.IPv6Network(addr)
    if net.subnet_of(ipaddress.IPv6Network("fe80::/10")):
        return V6Scope.LinkLocal
    if net.subnet_of(ipaddress.IPv6Network("fc00::/7")):
        return V6Scope.ULA
    return V6Scope.Global


def v4_scope(addr: ipaddress.IPv4Address | ipaddress.IPv4Network) -> V4Scope:
    net = addr if isinstance(addr, ipaddress.IPv4Network) else ipaddress.IPv4Network(addr)
    private = ipaddress.IPv4Network("10.0.0.0/8"), ipaddress.IPv4Network("172.16.0.0/12"), ipaddress.IPv4Network("192.168.0.0/16")
    return V4Scope.Private if any(net.subnet_of(p) for p in private) else V4Scope.Public


@dataclass
class ProvisioningRecord:
    """Everything one softwire user was given."""

    user: str
    softwire: str
    endpoint_v6: ipaddress.IPv6Address | None = None
    link_prefix_v6: ipaddress.IPv6Network | None = None
    endpoint_v4: ipaddress.IPv4Address | None = None
    delegated_v6: ipaddress.IPv6Network | None = None
    delegated_v4: ipaddress.IPv4Network | None = None
    duid: bytes | None = None
    dns: tuple = ()
    routes: list[tuple[str, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        out: dict = {"user": self.user, "softwire": self.softwire}
        if self.endpoint_v6 is not None:
            out["endpoint_v6"] = {"address": str(self.endpoint_v6), "scope": v6_scope(self.endpoint_v6).value}
        if self.link_prefix_v6 is not None:
            out["link_prefix_v6"] = str(self.link_prefix_v6)
        if self.endpoint_v4 is not None:
            out["endpoint_v4"] = {"address": str(self.endpoint_v4), "scope": v4_scope(self.endpoint_v4).value}
        if self.delegated_v6 is not None:
            out["delegated_v6"] = {"prefix": str(self.delegated_v6), "scope": v6_scope(self.delegated_v6).value}
        if self.delegated_v4 is not None:
            out["delegated_v4"] = {"prefix": str(self.delegated_v4), "scope": v4_scope(self.delegated_v4).value}
        if self.duid is not None:
            out["duid"] = self.duid.hex()
        if self.dns:
            out["dns"] = [str(d) for d in self.dns]
        out["routes"] = [{"prefix": p, "next_hop": n} for p, n in self.routes]
        return out
