"""Addresses and prefixes handed out once the PPP link is up."""

from .combos import ComboVerdict, InvalidCombo, V4Scope, V6Scope, Verdict, all_cells, validate_combo
from .dhcpv4 import SubnetInformation, SubnetRequest, UnsupportedLength, dhcpv4_subnet_request, sc_handle_subnet_request
from .dhcpv6 import ClientMode, Dhcpv6Client, Dhcpv6Server, DuidMismatch, Lease
from .nd import DadFailed, RouterAdvertisement, choose_ra_prefix, sc_handle_rs, slaac_address
from .pools import AddressPool, InvalidPrefixLength, NoPrefixAvailable, PrefixPool, check_delegated_length
from .record import ProvisioningRecord, v4_scope, v6_scope
from .rib import Conflict, Origin, Rib, Route
from .stable import Assignment, StablePolicy, StableStore

__all__ = [
    "AddressPool",
    "Assignment",
    "ClientMode",
    "ComboVerdict",
    "Conflict",
    "DadFailed",
    "Dhcpv6Client",
    "Dhcpv6Server",
    "DuidMismatch",
    "InvalidCombo",
    "InvalidPrefixLength",
    "Lease",
    "NoPrefixAvailable",
    "Origin",
    "PrefixPool",
    "ProvisioningRecord",
    "Rib",
    "Route",
    "RouterAdvertisement",
    "StablePolicy",
    "StableStore",
    "SubnetInformation",
    "SubnetRequest",
    "UnsupportedLength",
    "V4Scope",
    "V6Scope",
    "Verdict",
    "all_cells",
    "check_delegated_length",
    "choose_ra_prefix",
    "dhcpv4_subnet_request",
    "sc_handle_rs",
    "sc_handle_subnet_request",
    "slaac_address",
    "v4_scope",
    "v6_scope",
    "validate_combo",
]
