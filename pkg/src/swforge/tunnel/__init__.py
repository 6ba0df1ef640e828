"""LCCE state machines for the Softwire initiator (SI) and concentrator (SC)."""

from .config import ConfigError, KeepaliveConfig, TunnelConfig
from .engine import (
    Action,
    AuthFailure,
    CcState,
    DeliverFrame,
    DeliverPayload,
    DownReason,
    PacketTooBig,
    ProtocolViolation,
    Role,
    Send,
    SendData,
    SessionNotUp,
    SessionState,
    SessionUp,
    StartTimer,
    TunnelDown,
    TunnelEndpointState,
    WrongAddressFamily,
    compute_response,
    sc_accept,
    si_start,
)

__all__ = [
    "Action",
    "AuthFailure",
    "CcState",
    "ConfigError",
    "DeliverFrame",
    "DeliverPayload",
    "DownReason",
    "KeepaliveConfig",
    "PacketTooBig",
    "ProtocolViolation",
    "Role",
    "Send",
    "SendData",
    "SessionNotUp",
    "SessionState",
    "SessionUp",
    "StartTimer",
    "TunnelConfig",
    "TunnelDown",
    "TunnelEndpointState",
    "WrongAddressFamily",
    "compute_response",
    "sc_accept",
    "si_start",
]
