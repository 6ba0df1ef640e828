from __future__ import annotations

from ..wire.ip import Af

UDP_HEADER = 8
# L2TP data header with the L bit set and no sequence or offset fields
L2TP_DATA_HEADER = 8
PPP_OVERHEAD = 4
PPP_OVERHEAD_ACFC = 2
MIN_IPV4_MTU = 68


class MtuTooSmall(ValueError):
    pass


def encapsulation_overhead(transport_af: Af, acfc_accepted: bool) -> int:
    ppp = PPP_OVERHEAD_ACFC if acfc_accepted else PPP_OVERHEAD
    return Af(transport_af).header_len + UDP_HEADER + L2TP_DATA_HEADER + ppp


def compute_ppp_mtu(link_mtu: int, transport_af: Af | str | int, acfc_accepted: bool = False) -> int:
    """Largest payload packet that fits one transport-link frame.

    >>> compute_ppp_mtu(1500, Af.IPV4)
    1460
    """
    af = Af.parse(transport_af)
    mtu = link_mtu - encapsulation_overhead(af, acfc_accepted)
    if mtu < MIN_IPV4_MTU:
        raise MtuTooSmall(f"link MTU {link_mtu} leaves {mtu} bytes for payload (minimum {MIN_IPV4_MTU})")
    return mtu
