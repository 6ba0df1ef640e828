"""PPP over the softwire session: LCP, CHAP, IPV6CP or IPCP, LCP echo."""

from .link import (
    AuthFailed,
    Credentials,
    IidExhausted,
    LinkDead,
    LinkFailed,
    NcpParams,
    Ncp,
    NegotiationDiverged,
    Phase,
    PhaseChange,
    PoolExhausted,
    PppConfig,
    PppError,
    PppLink,
    chap_digest,
    next_iid,
    verify_chap,
)
from .mtu import MtuTooSmall, compute_ppp_mtu

__all__ = [
    "AuthFailed",
    "Credentials",
    "IidExhausted",
    "LinkDead",
    "LinkFailed",
    "MtuTooSmall",
    "Ncp",
    "NcpParams",
    "NegotiationDiverged",
    "Phase",
    "PhaseChange",
    "PoolExhausted",
    "PppConfig",
    "PppError",
    "PppLink",
    "chap_digest",
    "compute_ppp_mtu",
    "next_iid",
    "verify_chap",
]
