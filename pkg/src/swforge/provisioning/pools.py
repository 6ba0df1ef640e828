"""Deterministic address and prefix pools.

Allocation is ascending first-fit over never-used slots. Released slots go
to a quarantine queue and are handed out again only once fresh slots run
out, so a "temporary" user reconnecting gets a different assignment.
"""

from __future__ import annotations

import ipaddress
from collections import deque
from typing import Iterator

from ..wire.ip import Af

IpNetwork = ipaddress.IPv4Network | ipaddress.IPv6Network

DELEGATED_LENGTHS = {Af.IPV6: (48, 64), Af.IPV4: (8, 30)}


class NoPrefixAvailable(Exception):
    pass


class InvalidPrefixLength(ValueError):
    pass


def check_delegated_length(af: Af, length: int) -> None:
    lo, hi = DELEGATED_LENGTHS[Af(af)]
    if not lo <= length <= hi:
        raise InvalidPrefixLength(f"delegated IP{Af(af).label} prefix /{length} outside /{lo}../{hi}")


class PrefixPool:
    """Carves ``length``-sized prefixes out of ``network``."""

    def __init__(self, network: str | IpNetwork, length: int, *, delegated: bool = True, name: str = ""):
        self.network = ipaddress.ip_network(network)
        self.af = Af(self.network.version)
        if length < self.network.prefixlen or length > self.network.max_prefixlen:
            raise InvalidPrefixLength(f"/{length} does not fit in {self.network}")
        if delegated:
            check_delegated_length(self.af, length)
        self.length = length
        self.name = name or str(self.network)
        self.size = 1 << (length - self.network.prefixlen)
        self._next = 0
        self._used: set[int] = set()
        self._quarantine: deque[int] = deque()

    def _at(self, index: int) -> IpNetwork:
        step = 1 << (self.network.max_prefixlen - self.length)
        base = int(self.network.network_address) + index * step
        return ipaddress.ip_network((base, self.length))

    def _index(self, prefix: IpNetwork) -> int:
        if prefix.prefixlen != self.length or not prefix.subnet_of(self.network):
            raise KeyError(f"{prefix} is not a /{self.length} of {self.network}")
        step = 1 << (self.network.max_prefixlen - self.length)
        return (int(prefix.network_address) - int(self.network.network_address)) // step

    def allocate(self) -> IpNetwork:
        while self._next < self.size:
            idx = self._next
            self._next += 1
            if idx not in self._used:
                self._used.add(idx)
                return self._at(idx)
        while self._quarantine:
            idx = self._quarantine.popleft()
            if idx not in self._used:
                self._used.add(idx)
                return self._at(idx)
        raise NoPrefixAvailable(f"pool {self.name} exhausted")

    def reserve(self, prefix: str | IpNetwork) -> IpNetwork:
        net = ipaddress.ip_network(prefix)
        idx = self._index(net)
        if idx in self._used:
            raise NoPrefixAvailable(f"{net} already assigned")
        self._used.add(idx)
        return net

    def contains(self, prefix: str | IpNetwork) -> bool:
        try:
            self._index(ipaddress.ip_network(prefix))
        except (KeyError, TypeError):
            return False
        return True

    def release(self, prefix: str | IpNetwork) -> None:
        idx = self._index(ipaddress.ip_network(prefix))
        if idx in self._used:
            self._used.discard(idx)
            self._quarantine.append(idx)

    def __iter__(self) -> Iterator[IpNetwork]:
        return (self._at(i) for i in sorted(self._used))


class AddressPool:
    """Host addresses of a network, skipping network/broadcast for IPv4."""

    def __init__(self, network: str | IpNetwork, *, exclude: tuple = ()):
        self.network = ipaddress.ip_network(network)
        skip_edges = self.network.version == 4 and self.network.prefixlen < 31
        first = int(self.network.network_address) + (1 if skip_edges else 0)
        last = int(self.network.broadcast_address) - (1 if skip_edges else 0)
        self._first = first
        self.size = last - first + 1
        self._next = 0
        self._used: set[int] = {int(ipaddress.ip_address(a)) - first for a in exclude}
        self._quarantine: deque[int] = deque()

    def _addr(self, idx: int):
        return ipaddress.ip_address(self._first + idx)

    def allocate(self):
        while self._next < self.size:
            idx = self._next
            self._next += 1
            if idx not in self._used:
                self._used.add(idx)
                return self._addr(idx)
        while self._quarantine:
            idx = self._quarantine.popleft()
            if idx not in self._used:
                self._used.add(idx)
                return self._addr(idx)
        raise NoPrefixAvailable(f"address pool {self.network} exhausted")

    def reserve(self, addr) -> None:
        idx = int(ipaddress.ip_address(addr)) - self._first
        if not 0 <= idx < self.size:
            raise KeyError(f"{addr} not in {self.network}")
        if idx in self._used:
            raise NoPrefixAvailable(f"{addr} already assigned")
        self._used.add(idx)

    def contains(self, addr) -> bool:
        return 0 <= int(ipaddress.ip_address(addr)) - self._first < self.size

    def release(self, addr) -> None:
        idx = int(ipaddress.ip_address(addr)) - self._first
        if idx in self._used:
            self._used.discard(idx)
            self._quarantine.append(idx)
