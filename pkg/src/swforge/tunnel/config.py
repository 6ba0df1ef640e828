from __future__ import annotations

from dataclasses import dataclass, field

from ..trace import seconds
from ..wire.ip import Af

ECHO_MIN_INTERVAL = 10.0
ECHO_CAP = 60.0


class ConfigError(ValueError):
    pass


@dataclass
class KeepaliveConfig:
    """Keepalive and retransmission timers, in seconds.

    ``max_retransmits`` counts retransmission timeouts; the last one declares
    the peer dead instead of sending again. With the defaults a silent peer is
    detected 60 + 1 + 2 + 4 + 8 + 8 = 83 s after the last message received.
    ``hello_interval=None`` disables HELLO.
    """

    hello_interval: float | None = 60.0
    retransmit_base: float = 1.0
    retransmit_max: float = 8.0
    max_retransmits: int = 5
    lcp_echo_enabled: bool = False
    lcp_echo_interval: float = 30.0
    lcp_echo_max_missed: int = 3

    def __post_init__(self) -> None:
        if self.hello_interval is not None and self.hello_interval <= 0:
            raise ConfigError("hello_interval must be positive")
        if self.retransmit_base <= 0 or self.retransmit_max < self.retransmit_base:
            raise ConfigError("retransmit_base must be positive and <= retransmit_max")
        if self.max_retransmits < 1:
            raise ConfigError("max_retransmits must be >= 1")
        if self.lcp_echo_enabled:
            hi = self.max_echo_interval
            if not ECHO_MIN_INTERVAL <= self.lcp_echo_interval <= hi:
                raise ConfigError(
                    f"lcp_echo_interval {self.lcp_echo_interval} outside [{ECHO_MIN_INTERVAL:g}, {hi:g}]"
                )

    @property
    def max_echo_interval(self) -> float:
        if self.hello_interval is None:
            return ECHO_CAP
        return min(self.hello_interval, ECHO_CAP)

    def backoff(self, attempt: int) -> int:
        """Timeout in microseconds after the ``attempt``-th transmission (0-based)."""
        return seconds(min(self.retransmit_base * 2**attempt, self.retransmit_max))

    @property
    def dead_end_time(self) -> float:
        """Silence needed before a keepalive-driven teardown."""
        total = sum(min(self.retransmit_base * 2**k, self.retransmit_max) for k in range(self.max_retransmits))
        return (self.hello_interval or 0.0) + total


@dataclass
class TunnelConfig:
    host_name: str = "si"
    payload_af: Af = Af.IPV6
    transport_af: Af = Af.IPV4
    # shared secret for tunnel authentication; None disables it
    secret: bytes | None = None
    # advertised receive window; None omits the AVP (peer assumes 4)
    receive_window: int | None = None
    firmware_revision: int | None = None
    vendor_name: str | None = None
    keepalive: KeepaliveConfig = field(default_factory=KeepaliveConfig)
    challenge_len: int = 16
    # test-only: SC answers SCCRQ from its alternate endpoint
    respond_from_alternate: bool = False

    def __post_init__(self) -> None:
        self.payload_af = Af.parse(self.payload_af)
        self.transport_af = Af.parse(self.transport_af)
        if self.receive_window is not None and not 1 <= self.receive_window <= 0xFFFF:
            raise ConfigError("receive_window must be in 1..65535")
        if self.secret is not None and not self.secret:
            raise ConfigError("tunnel secret must be non-empty")
