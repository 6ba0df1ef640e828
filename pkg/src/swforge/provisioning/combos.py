"""Which endpoint-address / delegated-prefix scope pairs make sense together."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from ..wire.ip import Af


class V6Scope(enum.Enum):
    LinkLocal = "link-local"
    ULA = "ula"
    Global = "global"


class V4Scope(enum.Enum):
    Private = "private"
    Public = "public"


class Verdict(enum.Enum):
    Possible = "Possible"
    PossibleNotRecommended = "PossibleNotRecommended"

    @property
    def text(self) -> str:
        return "Possible" if self is Verdict.Possible else "Possible, but Not Recommended"


@dataclass(frozen=True)
class ComboVerdict:
    verdict: Verdict
    note: str = ""


class InvalidCombo(ValueError):
    pass


_V6: dict[tuple[V6Scope, V6Scope], ComboVerdict] = {
    (V6Scope.LinkLocal, V6Scope.Global): ComboVerdict(Verdict.Possible),
    (V6Scope.LinkLocal, V6Scope.ULA): ComboVerdict(Verdict.Possible),
    (V6Scope.ULA, V6Scope.Global): ComboVerdict(Verdict.Possible),
    (V6Scope.ULA, V6Scope.ULA): ComboVerdict(Verdict.Possible),
    (V6Scope.Global, V6Scope.Global): ComboVerdict(Verdict.Possible),
    (V6Scope.Global, V6Scope.ULA): ComboVerdict(Verdict.PossibleNotRecommended),
}

_V4: dict[tuple[V4Scope, V4Scope], ComboVerdict] = {
    (V4Scope.Private, V4Scope.Public): ComboVerdict(Verdict.Possible),
    (V4Scope.Private, V4Scope.Private): ComboVerdict(
        Verdict.PossibleNotRecommended, "when the SI translates: risk of nested NAT"
    ),
    (V4Scope.Public, V4Scope.Public): ComboVerdict(Verdict.Possible),
    (V4Scope.Public, V4Scope.Private): ComboVerdict(Verdict.Possible, "address translation on the SI advised"),
}


def _scope(kind: type[enum.Enum], value: str | enum.Enum) -> enum.Enum:
    if isinstance(value, kind):
        return value
    key = str(value).lower().replace("_", "-")
    for member in kind:
        if key in (member.value, member.name.lower()):
            return member
    raise InvalidCombo(f"unknown {kind.__name__} {value!r}")


def validate_combo(af: Af | str | int, endpoint_scope, delegated_scope) -> ComboVerdict:
    """Verdict for a (family, endpoint scope, delegated prefix scope) triple."""
    af = Af.parse(af)
    if af is Af.IPV6:
        ep = _scope(V6Scope, endpoint_scope)
        dl = _scope(V6Scope, delegated_scope)
        if dl is V6Scope.LinkLocal:
            raise InvalidCombo("link-local prefixes are never delegated")
        return _V6[(ep, dl)]
    return _V4[(_scope(V4Scope, endpoint_scope), _scope(V4Scope, delegated_scope))]


def all_cells() -> list[tuple[Af, enum.Enum, enum.Enum, ComboVerdict]]:
    cells: list[tuple[Af, enum.Enum, enum.Enum, ComboVerdict]] = [(Af.IPV6, e, d, v) for (e, d), v in _V6.items()]
    cells += [(Af.IPV4, e, d, v) for (e, d), v in _V4.items()]
    return cells
