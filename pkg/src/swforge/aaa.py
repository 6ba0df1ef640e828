"""In-process AAA: user directory, attribute directives and accounting.

Nothing here speaks RADIUS on the wire. Attribute names and type numbers
follow RFC 2865, RFC 3162 and RFC 4818 so profiles read like the real thing.
"""

from __future__ import annotations

import enum
import ipaddress
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from .ppp.link import verify_chap
from .provisioning.pools import InvalidPrefixLength, check_delegated_length
from .trace import US_PER_S
from .wire.ip import Af


class AccessVerdict(enum.Enum):
    Accept = "Accept"
    Reject = "Reject"


class Attr(enum.IntEnum):
    """RADIUS attribute type numbers."""

    FRAMED_IP_ADDRESS = 8
    FRAMED_IP_NETMASK = 9
    TUNNEL_TYPE = 64
    TUNNEL_MEDIUM_TYPE = 65
    FRAMED_INTERFACE_ID = 96
    FRAMED_IPV6_PREFIX = 97
    FRAMED_IPV6_POOL = 100
    DELEGATED_IPV6_PREFIX = 123

    @property
    def radius_name(self) -> str:
        return _NAMES[self]

    @classmethod
    def parse(cls, text: str | int | Attr) -> Attr:
        if isinstance(text, (int, Attr)):
            return cls(text)
        key = text.strip().lower().replace("_", "-")
        for attr, name in _NAMES.items():
            if name.lower() == key:
                return attr
        raise KeyError(f"unknown attribute {text!r}")


_NAMES = {
    Attr.FRAMED_IP_ADDRESS: "Framed-IP-Address",
    Attr.FRAMED_IP_NETMASK: "Framed-IP-Netmask",
    Attr.TUNNEL_TYPE: "Tunnel-Type",
    Attr.TUNNEL_MEDIUM_TYPE: "Tunnel-Medium-Type",
    Attr.FRAMED_INTERFACE_ID: "Framed-Interface-Id",
    Attr.FRAMED_IPV6_PREFIX: "Framed-IPv6-Prefix",
    Attr.FRAMED_IPV6_POOL: "Framed-IPv6-Pool",
    Attr.DELEGATED_IPV6_PREFIX: "Delegated-IPv6-Prefix",
}

# Tunnel-Type value for L2TP and Tunnel-Medium-Type values (RFC 2868)
TUNNEL_TYPE_L2TP = 3
MEDIUM = {Af.IPV4: 1, Af.IPV6: 2}

# attributes a profile may hand back in an Access-Accept
PROFILE_ATTRS = frozenset(
    {
        Attr.FRAMED_IP_ADDRESS,
        Attr.FRAMED_IP_NETMASK,
        Attr.FRAMED_INTERFACE_ID,
        Attr.FRAMED_IPV6_PREFIX,
        Attr.FRAMED_IPV6_POOL,
        Attr.DELEGATED_IPV6_PREFIX,
    }
)


class AaaError(Exception):
    pass


class InconsistentAttributes(AaaError):
    pass


def parse_interface_id(value: int | str) -> int:
    """Accept an int or the ``xxxx:xxxx:xxxx:xxxx`` form."""
    if isinstance(value, int):
        iid = value
    else:
        groups = value.split(":")
        if len(groups) != 4:
            raise ValueError(f"interface id {value!r} is not four 16-bit groups")
        iid = 0
        for g in groups:
            iid = (iid << 16) | int(g, 16)
    if not 0 < iid < 1 << 64:
        raise ValueError(f"interface id {value!r} out of range")
    return iid


def format_interface_id(iid: int) -> str:
    return ":".join(f"{(iid >> s) & 0xFFFF:04x}" for s in (48, 32, 16, 0))


def _coerce(attr: Attr, value: Any) -> Any:
    if attr is Attr.FRAMED_INTERFACE_ID:
        return parse_interface_id(value)
    if attr in (Attr.FRAMED_IP_ADDRESS, Attr.FRAMED_IP_NETMASK):
        return ipaddress.IPv4Address(value)
    if attr in (Attr.FRAMED_IPV6_PREFIX, Attr.DELEGATED_IPV6_PREFIX):
        return ipaddress.IPv6Network(value)
    return str(value) if attr is Attr.FRAMED_IPV6_POOL else value


AttrList = tuple[tuple[Attr, Any], ...]


def attr_list(items: Mapping[Any, Any] | Iterable[tuple[Any, Any]]) -> AttrList:
    pairs = items.items() if isinstance(items, Mapping) else items
    out = []
    for k, v in pairs:
        a = Attr.parse(k)
        out.append((a, _coerce(a, v)))
    return tuple(out)


@dataclass(frozen=True)
class AccessResult:
    verdict: AccessVerdict
    attributes: AttrList = ()
    reason: str = ""

    def __post_init__(self) -> None:
        if self.verdict is AccessVerdict.Reject and self.attributes:
            raise ValueError("a Reject carries no attributes")

    @property
    def accepted(self) -> bool:
        return self.verdict is AccessVerdict.Accept


@dataclass(frozen=True)
class ChapResponse:
    identifier: int
    challenge: bytes
    response: bytes


@dataclass(frozen=True)
class Hint:
    tunnel_type: int = TUNNEL_TYPE_L2TP
    tunnel_medium: Af = Af.IPV4


@dataclass
class UserProfile:
    name: str
    secret: bytes
    attributes: AttrList = ()


class Directory:
    """Configuration-backed user store answering Access-Requests."""

    def __init__(self, users: Iterable[UserProfile] = ()):
        self.users = {u.name: u for u in users}
        self.decision_log: list[dict[str, Any]] = []

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Directory:
        users = []
        for name, body in data.get("users", {}).items():
            attrs = attr_list(body.get("attributes", {}))
            stray = [a for a, _ in attrs if a not in PROFILE_ATTRS]
            if stray:
                raise ValueError(f"user {name}: {stray[0].radius_name} is not a profile attribute")
            users.append(UserProfile(name, body["secret"].encode(), attrs))
        return cls(users)

    @classmethod
    def load(cls, path: str | Path) -> Directory:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def add(self, name: str, secret: bytes | str, attributes: Mapping[Any, Any] | Iterable = ()) -> UserProfile:
        if isinstance(secret, str):
            secret = secret.encode()
        user = UserProfile(name, secret, attr_list(attributes))
        self.users[name] = user
        return user

    def access_request(self, user: str, credentials: ChapResponse | bytes, hint: Hint | None = None) -> AccessResult:
        hint = hint or Hint()
        profile = self.users.get(user)
        if profile is None:
            result = AccessResult(AccessVerdict.Reject, reason="unknown user")
        elif isinstance(credentials, ChapResponse):
            ok = verify_chap(profile.secret, credentials.identifier, credentials.challenge, credentials.response)
            result = self._verdict(profile, ok)
        else:
            result = self._verdict(profile, bytes(credentials) == profile.secret)
        self.decision_log.append(
            {
                "user": user,
                "verdict": result.verdict.value,
                "tunnel_type": hint.tunnel_type,
                "tunnel_medium": Af(hint.tunnel_medium).label,
                "reason": result.reason,
            }
        )
        return result

    def authorize(self, user: str, hint: Hint | None = None) -> AccessResult:
        """Profile lookup for a link that ran without CHAP; unknown users get no attributes."""
        hint = hint or Hint()
        profile = self.users.get(user)
        result = AccessResult(AccessVerdict.Accept, profile.attributes if profile else (), "authorize only")
        self.decision_log.append(
            {
                "user": user,
                "verdict": result.verdict.value,
                "tunnel_type": hint.tunnel_type,
                "tunnel_medium": Af(hint.tunnel_medium).label,
                "reason": result.reason,
            }
        )
        return result

    @staticmethod
    def _verdict(profile: UserProfile, ok: bool) -> AccessResult:
        if not ok:
            return AccessResult(AccessVerdict.Reject, reason="bad credentials")
        return AccessResult(AccessVerdict.Accept, profile.attributes)


@dataclass(frozen=True)
class Directives:
    """What the concentrator does with an Access-Accept."""

    interface_id: int | None = None
    # on-link /64 for the RA; when both are None the local pool is used
    link_prefix_v6: ipaddress.IPv6Network | None = None
    link_pool_v6: str | None = None
    endpoint_v4: ipaddress.IPv4Address | None = None
    delegated_v4: ipaddress.IPv4Network | None = None
    delegated_v6: ipaddress.IPv6Network | None = None

    @property
    def route_v4_via_si(self) -> bool:
        return self.delegated_v4 is not None


def apply_attributes(result: AccessResult) -> Directives:
    """Turn an Accept's attributes into provisioning directives.

    Attribute order does not matter; a repeated attribute with two different
    values is refused rather than resolved by position.
    """
    if not result.accepted:
        raise AaaError("attributes are only applied on Accept")
    seen: dict[Attr, Any] = {}
    for attr, value in result.attributes:
        if attr in seen and seen[attr] != value:
            raise InconsistentAttributes(f"{attr.radius_name} given twice with different values")
        seen[attr] = value

    addr = seen.get(Attr.FRAMED_IP_ADDRESS)
    mask = seen.get(Attr.FRAMED_IP_NETMASK)
    endpoint_v4 = delegated_v4 = None
    if mask is not None:
        if addr is None:
            raise InconsistentAttributes("Framed-IP-Netmask without Framed-IP-Address")
        try:
            delegated_v4 = ipaddress.IPv4Network(f"{addr}/{mask}")
            check_delegated_length(Af.IPV4, delegated_v4.prefixlen)
        except (ValueError, InvalidPrefixLength) as exc:
            raise InconsistentAttributes(f"Framed-IP-Address {addr} with netmask {mask}: {exc}") from exc
    else:
        endpoint_v4 = addr

    link_prefix = seen.get(Attr.FRAMED_IPV6_PREFIX)
    if link_prefix is not None and link_prefix.prefixlen != 64:
        raise InconsistentAttributes(f"Framed-IPv6-Prefix {link_prefix} is not a /64")
    delegated_v6 = seen.get(Attr.DELEGATED_IPV6_PREFIX)
    if delegated_v6 is not None:
        try:
            check_delegated_length(Af.IPV6, delegated_v6.prefixlen)
        except InvalidPrefixLength as exc:
            raise InconsistentAttributes(str(exc)) from exc

    return Directives(
        interface_id=seen.get(Attr.FRAMED_INTERFACE_ID),
        link_prefix_v6=link_prefix,
        link_pool_v6=None if link_prefix is not None else seen.get(Attr.FRAMED_IPV6_POOL),
        endpoint_v4=endpoint_v4,
        delegated_v4=delegated_v4,
        delegated_v6=delegated_v6,
    )


# --- accounting -----------------------------------------------------------------


class RecordKind(enum.Enum):
    Start = "Start"
    Stop = "Stop"


@dataclass(frozen=True)
class AccountingRecord:
    kind: RecordKind
    user: str
    softwire: str
    local_tunnel_id: int
    remote_tunnel_id: int
    local_session_id: int
    remote_session_id: int
    tunnel_medium: Af
    time: float
    counters: Mapping[str, int] = field(default_factory=dict)
    duration: float | None = None
    tunnel_type: str = "L2TP"

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "kind": self.kind.value,
            "user": self.user,
            "softwire": self.softwire,
            "tunnel_type": self.tunnel_type,
            "tunnel_medium": "IPv4" if self.tunnel_medium is Af.IPV4 else "IPv6",
            "local_tunnel_id": self.local_tunnel_id,
            "remote_tunnel_id": self.remote_tunnel_id,
            "local_session_id": self.local_session_id,
            "remote_session_id": self.remote_session_id,
            "time": self.time,
        }
        if self.kind is RecordKind.Stop:
            out.update(self.counters)
            out["duration"] = self.duration
        return out


@dataclass(frozen=True)
class SessionInfo:
    user: str
    softwire: str
    local_tunnel_id: int
    remote_tunnel_id: int
    local_session_id: int
    remote_session_id: int
    tunnel_medium: Af


class Accounting:
    """Start/Stop records, one pair per session, optionally mirrored to JSONL."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.records: list[AccountingRecord] = []
        self._open: dict[str, tuple[SessionInfo, int]] = {}

    def _write(self, rec: AccountingRecord) -> None:
        self.records.append(rec)
        if self.path is not None:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")

    def start(self, info: SessionInfo, now_us: int) -> AccountingRecord | None:
        if info.softwire in self._open:
            return None
        self._open[info.softwire] = (info, now_us)
        rec = AccountingRecord(
            RecordKind.Start,
            info.user,
            info.softwire,
            info.local_tunnel_id,
            info.remote_tunnel_id,
            info.local_session_id,
            info.remote_session_id,
            Af(info.tunnel_medium),
            now_us / US_PER_S,
        )
        self._write(rec)
        return rec

    def stop(self, softwire: str, stats: Mapping[str, int], now_us: int) -> AccountingRecord | None:
        """Close a session; ``stats`` is the tunnel stats snapshot at teardown."""
        entry = self._open.pop(softwire, None)
        if entry is None:
            return None
        info, started = entry
        counters = {k: v for k, v in stats.items() if k.startswith(("v4_", "v6_"))}
        if any(v < 0 for v in counters.values()):
            raise AaaError("negative traffic counter")
        rec = AccountingRecord(
            RecordKind.Stop,
            info.user,
            info.softwire,
            info.local_tunnel_id,
            info.remote_tunnel_id,
            info.local_session_id,
            info.remote_session_id,
            Af(info.tunnel_medium),
            now_us / US_PER_S,
            counters,
            (now_us - started) / US_PER_S,
        )
        self._write(rec)
        return rec

    def account(self, event: str, info: SessionInfo, stats: Mapping[str, int] | None, now_us: int) -> AccountingRecord | None:
        if event == "session-up":
            return self.start(info, now_us)
        if event == "session-down":
            return self.stop(info.softwire, stats or {}, now_us)
        raise ValueError(f"unknown accounting event {event!r}")

    @property
    def open_sessions(self) -> list[str]:
        return sorted(self._open)


def load_records(path: str | Path) -> list[dict[str, Any]]:
    text = Path(path).read_text(encoding="utf-8")
    return [json.loads(line) for line in text.splitlines() if line.strip()]


__all__ = [
    "AaaError",
    "Accounting",
    "AccountingRecord",
    "AccessResult",
    "AccessVerdict",
    "Attr",
    "ChapResponse",
    "Directives",
    "Directory",
    "Hint",
    "InconsistentAttributes",
    "MEDIUM",
    "RecordKind",
    "SessionInfo",
    "TUNNEL_TYPE_L2TP",
    "UserProfile",
    "apply_attributes",
    "attr_list",
    "format_interface_id",
    "load_records",
    "parse_interface_id",
]
