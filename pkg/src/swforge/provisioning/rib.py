"""Simulated routing table keyed by prefix, pointing at softwires."""

from __future__ import annotations

import enum
import ipaddress
from dataclasses import dataclass

from .pools import IpNetwork


class Origin(enum.Enum):
    Default = "default"
    Delegated = "delegated"
    Connected = "connected"


class Conflict(Exception):
    pass


@dataclass(frozen=True)
class Route:
    prefix: IpNetwork
    next_hop: str
    origin: Origin


class Rib:
    def __init__(self, name: str = "rib"):
        self.name = name
        self.routes: dict[IpNetwork, Route] = {}

    def inject(self, prefix: str | IpNetwork, next_hop: str, origin: Origin = Origin.Delegated) -> Route:
        net = ipaddress.ip_network(prefix)
        for other in self.routes.values():
            if other.prefix.version != net.version or other.origin is Origin.Default:
                continue
            if other.prefix.overlaps(net) and other.next_hop != next_hop:
                raise Conflict(f"{net} overlaps {other.prefix} via {other.next_hop}")
        route = Route(net, next_hop, origin)
        self.routes[net] = route
        return route

    def withdraw(self, prefix: str | IpNetwork) -> None:
        self.routes.pop(ipaddress.ip_network(prefix), None)

    def withdraw_next_hop(self, next_hop: str) -> list[Route]:
        gone = [r for r in self.routes.values() if r.next_hop == next_hop]
        for r in gone:
            del self.routes[r.prefix]
        return gone

    def lookup(self, address) -> Route | None:
        addr = ipaddress.ip_address(address)
        best = None
        for r in self.routes.values():
            if r.prefix.version == addr.version and addr in r.prefix:
                if best is None or r.prefix.prefixlen > best.prefix.prefixlen:
                    best = r
        return best

    def via(self, next_hop: str) -> list[Route]:
        return [r for r in self.routes.values() if r.next_hop == next_hop]

    def dump(self) -> list[dict[str, str]]:
        ordered = sorted(self.routes.values(), key=lambda r: (r.prefix.version, r.prefix))
        return [{"prefix": str(r.prefix), "next_hop": r.next_hop, "origin": r.origin.value} for r in ordered]
