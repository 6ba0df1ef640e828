"""Which AVPs a Softwire sends on each control message.

Control-connection messages use the required/optional lists of the Softwire
profile. Session messages carry only the RFC 2661 "MUST be present" AVPs.
StopCCN and CDN follow the RFC 2661 baseline unchanged. Anything not listed
for a message is not relevant: never sent, ignored on receipt.
"""

from __future__ import annotations

import enum

from .l2tp import AvpType as A
from .l2tp import ControlMessage, MessageType as M


class AvpRelevance(enum.Enum):
    Required = "Required"
    Optional = "Optional"
    NotRelevant = "NotRelevant"


# message type -> (required, optional)
RELEVANCE: dict[M, tuple[frozenset[A], frozenset[A]]] = {
    M.SCCRQ: (
        frozenset({A.MESSAGE_TYPE, A.PROTOCOL_VERSION, A.HOST_NAME, A.FRAMING_CAPABILITIES, A.ASSIGNED_TUNNEL_ID}),
        frozenset({A.RECEIVE_WINDOW_SIZE, A.CHALLENGE, A.FIRMWARE_REVISION, A.VENDOR_NAME}),
    ),
    M.SCCRP: (
        frozenset({A.MESSAGE_TYPE, A.PROTOCOL_VERSION, A.FRAMING_CAPABILITIES, A.HOST_NAME, A.ASSIGNED_TUNNEL_ID}),
        frozenset({A.FIRMWARE_REVISION, A.VENDOR_NAME, A.RECEIVE_WINDOW_SIZE, A.CHALLENGE, A.CHALLENGE_RESPONSE}),
    ),
    M.SCCCN: (
        frozenset({A.MESSAGE_TYPE}),
        frozenset({A.CHALLENGE_RESPONSE}),
    ),
    M.ICRQ: (
        frozenset({A.MESSAGE_TYPE, A.ASSIGNED_SESSION_ID, A.CALL_SERIAL_NUMBER}),
        frozenset(),
    ),
    M.ICRP: (
        frozenset({A.MESSAGE_TYPE, A.ASSIGNED_SESSION_ID}),
        frozenset(),
    ),
    M.ICCN: (
        frozenset({A.MESSAGE_TYPE, A.FRAMING_TYPE, A.TX_CONNECT_SPEED}),
        frozenset(),
    ),
    M.HELLO: (frozenset({A.MESSAGE_TYPE}), frozenset()),
    M.StopCCN: (
        frozenset({A.MESSAGE_TYPE, A.ASSIGNED_TUNNEL_ID, A.RESULT_CODE}),
        frozenset(),
    ),
    M.CDN: (
        frozenset({A.MESSAGE_TYPE, A.RESULT_CODE, A.ASSIGNED_SESSION_ID}),
        frozenset({A.Q931_CAUSE_CODE}),
    ),
}


def classify_avp(message_type: M | int, attribute_type: A | int, vendor_id: int = 0) -> AvpRelevance:
    if vendor_id != 0:
        return AvpRelevance.NotRelevant
    try:
        mt = M(message_type)
        attr = A(attribute_type)
    except ValueError:
        return AvpRelevance.NotRelevant
    required, optional = RELEVANCE.get(mt, (frozenset(), frozenset()))
    if attr in required:
        return AvpRelevance.Required
    if attr in optional:
        return AvpRelevance.Optional
    return AvpRelevance.NotRelevant


def required_avps(message_type: M) -> frozenset[A]:
    return RELEVANCE.get(message_type, (frozenset(), frozenset()))[0]


def ignorable_avps(msg: ControlMessage) -> list:
    """AVPs of ``msg`` that a Softwire endpoint drops on receipt."""
    return [
        a for a in msg.avps if classify_avp(msg.message_type, a.attribute_type, a.vendor_id) is AvpRelevance.NotRelevant
    ]


def missing_required(msg: ControlMessage) -> set[A]:
    present = {a.attribute_type for a in msg.avps if a.vendor_id == 0}
    return {a for a in required_avps(msg.message_type) if int(a) not in present}


def check_emitted(msg: ControlMessage) -> None:
    """Raise ValueError if ``msg`` violates the Softwire sending rules."""
    for a in msg.avps:
        if a.hidden:
            raise ValueError(f"{msg.name}: hidden AVP {a.name}")
    bad = ignorable_avps(msg)
    if bad:
        raise ValueError(f"{msg.name}: not-relevant AVPs {[a.name for a in bad]}")
    missing = missing_required(msg)
    if missing:
        raise ValueError(f"{msg.name}: missing required AVPs {sorted(m.name for m in missing)}")
