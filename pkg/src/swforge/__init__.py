"""Softwire hub-and-spoke (L2TPv2/PPP) initiator and concentrator over a simulated network."""

__version__ = "0.1.0"
