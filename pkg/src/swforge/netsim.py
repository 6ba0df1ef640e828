"""Deterministic discrete-event UDP fabric with NAT middleboxes.

Time is an integer count of microseconds. Events run in (time, insertion
sequence) order, so equal seeds and configurations replay identically.
"""

from __future__ import annotations

import enum
import heapq
import ipaddress
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol

from .trace import Trace, seconds
from .wire.ip import IpAddress

Endpoint = tuple[IpAddress, int]

DEFAULT_BINDING_TTL = seconds(120)


def fmt_endpoint(ep: Endpoint) -> str:
    ip, port = ep
    return f"[{ip}]:{port}" if ip.version == 6 else f"{ip}:{port}"


def endpoint(ip: str | IpAddress, port: int) -> Endpoint:
    return ipaddress.ip_address(ip), port


@dataclass(frozen=True)
class Datagram:
    src: Endpoint
    dst: Endpoint
    payload: bytes
    summary: str = ""


class Filtering(enum.Enum):
    EndpointIndependent = "eif"
    AddressDependent = "adf"
    AddressAndPortDependent = "apdf"

    @classmethod
    def parse(cls, text: str | Filtering) -> Filtering:
        if isinstance(text, Filtering):
            return text
        return cls(text.lower())


class Filtered(Exception):
    """Inbound datagram refused by a NAT."""


@dataclass
class Binding:
    internal: Endpoint
    external: Endpoint
    last_activity: int
    remotes: set[Endpoint] = field(default_factory=set)


class NatBox:
    """Endpoint-independent mapping with configurable filtering."""

    def __init__(
        self,
        name: str,
        external_ip: str | IpAddress,
        filtering: Filtering | str = Filtering.EndpointIndependent,
        binding_ttl: int = DEFAULT_BINDING_TTL,
        first_port: int = 40000,
    ):
        self.name = name
        self.external_ip = ipaddress.ip_address(external_ip)
        self.filtering = Filtering.parse(filtering)
        self.binding_ttl = binding_ttl
        self._next_port = first_port
        self.by_internal: dict[Endpoint, Binding] = {}
        self.by_external: dict[Endpoint, Binding] = {}

    def _alive(self, b: Binding, now: int) -> bool:
        return now - b.last_activity <= self.binding_ttl

    def outbound(self, src: Endpoint, dst: Endpoint, now: int) -> Endpoint:
        """Translate an outbound source, creating or refreshing its binding."""
        b = self.by_internal.get(src)
        if b is not None and not self._alive(b, now):
            self._drop(b)
            b = None
        if b is None:
            ext = (self.external_ip, self._next_port)
            self._next_port += 1
            b = Binding(src, ext, now)
            self.by_internal[src] = b
            self.by_external[ext] = b
        b.last_activity = now
        b.remotes.add(dst)
        return b.external

    def nat_inbound(self, external: Endpoint, remote: Endpoint, now: int) -> Endpoint:
        b = self.by_external.get(external)
        if b is None or not self._alive(b, now):
            raise Filtered(f"{self.name}: no binding for {fmt_endpoint(external)}")
        if self.filtering is Filtering.AddressDependent:
            if remote[0] not in {r[0] for r in b.remotes}:
                raise Filtered(f"{self.name}: {remote[0]} never contacted")
        elif self.filtering is Filtering.AddressAndPortDependent:
            if remote not in b.remotes:
                raise Filtered(f"{self.name}: {fmt_endpoint(remote)} never contacted")
        return b.internal

    def purge(self, now: int) -> list[Binding]:
        dead = [b for b in self.by_internal.values() if not self._alive(b, now)]
        for b in dead:
            self._drop(b)
        return dead

    def _drop(self, b: Binding) -> None:
        self.by_internal.pop(b.internal, None)
        self.by_external.pop(b.external, None)


@dataclass
class LinkConfig:
    delay: int = seconds(0.01)
    loss_rate: float = 0.0
    # extra uniform delay in [0, jitter]; non-zero allows reordering
    jitter: int = 0


class Host(Protocol):
    name: str

    def receive(self, dgram: Datagram, now: int) -> None: ...


class SimNetwork:
    def __init__(self, seed: int = 0, trace: Trace | None = None):
        self.clock = 0
        self.rng = random.Random(seed)
        self.trace = trace if trace is not None else Trace()
        self.hosts: dict[IpAddress, Host] = {}
        self.links: dict[IpAddress, LinkConfig] = {}
        self.nats: dict[IpAddress, NatBox] = {}
        # inner address -> the NAT that translates it on the way out
        self.behind: dict[IpAddress, NatBox] = {}
        self._queue: list[tuple[int, int, Callable[[], None]]] = []
        self._seq = 0

    # --- topology -------------------------------------------------------------

    def attach(self, host: Host, *ips: str | IpAddress, link: LinkConfig | None = None, nat: NatBox | None = None) -> None:
        for raw in ips:
            ip = ipaddress.ip_address(raw)
            self.hosts[ip] = host
            self.links[ip] = link or LinkConfig()
            if nat is not None:
                self.behind[ip] = nat

    def add_nat(self, nat: NatBox, behind: NatBox | None = None) -> None:
        self.nats[nat.external_ip] = nat
        if behind is not None:
            self.behind[nat.external_ip] = behind

    def link(self, ip: str | IpAddress) -> LinkConfig:
        return self.links[ipaddress.ip_address(ip)]

    # --- scheduling -----------------------------------------------------------

    def call_at(self, when: int, fn: Callable[[], None]) -> None:
        heapq.heappush(self._queue, (max(when, self.clock), self._seq, fn))
        self._seq += 1

    def next_time(self) -> int | None:
        return self._queue[0][0] if self._queue else None

    def advance(self, until: int) -> list[dict[str, Any]]:
        """Run every event due at or before ``until``; returns the delivery records."""
        if until < self.clock:
            raise ValueError("cannot run the clock backwards")
        mark = len(self.trace.events)
        while self._queue and self._queue[0][0] <= until:
            when, _, fn = heapq.heappop(self._queue)
            self.clock = when
            fn()
        self.clock = until
        self._purge()
        return [e for e in self.trace.events[mark:] if e["event"] == "deliver"]

    def run_until(self, until: int, stop: Callable[[], bool] | None = None) -> None:
        while self._queue and self._queue[0][0] <= until:
            self.advance(self._queue[0][0])
            if stop is not None and stop():
                return
        self.advance(until)

    def _purge(self) -> None:
        for nat in self.nats.values():
            for b in nat.purge(self.clock):
                self.trace.emit(
                    self.clock,
                    "nat_expire",
                    node=nat.name,
                    summary=f"{fmt_endpoint(b.internal)} <-> {fmt_endpoint(b.external)}",
                )

    # --- datagrams ------------------------------------------------------------

    def send(self, src: Endpoint, dst: Endpoint, payload: bytes, summary: str = "") -> None:
        now = self.clock
        src = (ipaddress.ip_address(src[0]), src[1])
        dst = (ipaddress.ip_address(dst[0]), dst[1])
        if src[0] not in self.hosts:
            raise KeyError(f"unregistered sender {src[0]}")
        link = self.links[src[0]]
        self.trace.emit(now, "send", **{"from": fmt_endpoint(src), "to": fmt_endpoint(dst)}, size=len(payload), summary=summary)
        if link.loss_rate > 0 and self.rng.random() < link.loss_rate:
            self.trace.emit(now, "loss", **{"from": fmt_endpoint(src), "to": fmt_endpoint(dst)}, summary=summary)
            return
        wire_src = src
        nat = self.behind.get(src[0])
        while nat is not None:
            wire_src = nat.outbound(wire_src, dst, now)
            nat = self.behind.get(nat.external_ip)
        delay = link.delay
        if link.jitter:
            delay += self.rng.randint(0, link.jitter)
        dgram = Datagram(wire_src, dst, payload, summary)
        self.call_at(now + delay, lambda: self._deliver(dgram))

    def _deliver(self, dgram: Datagram) -> None:
        now = self.clock
        dst = dgram.dst
        while dst[0] in self.nats:
            nat = self.nats[dst[0]]
            try:
                dst = nat.nat_inbound(dst, dgram.src, now)
            except Filtered as exc:
                self.trace.emit(
                    now,
                    "nat_filtered",
                    **{"from": fmt_endpoint(dgram.src), "to": fmt_endpoint(dgram.dst)},
                    node=nat.name,
                    summary=f"{dgram.summary}; {exc}",
                )
                return
        host = self.hosts.get(dst[0])
        if host is None:
            self.trace.emit(now, "unreachable", **{"from": fmt_endpoint(dgram.src), "to": fmt_endpoint(dst)}, summary=dgram.summary)
            return
        self.trace.emit(now, "deliver", **{"from": fmt_endpoint(dgram.src), "to": fmt_endpoint(dst)}, size=len(dgram.payload), summary=dgram.summary)
        host.receive(Datagram(dgram.src, dst, dgram.payload, dgram.summary), now)
