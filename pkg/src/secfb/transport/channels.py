"""Channel identifiers, statistics and the transport interface."""

from __future__ import annotations

import enum
import ipaddress
import threading
from dataclasses import dataclass
from typing import Callable, Protocol

from secfb.transport.frame import WireFrame

__all__ = [
    "ChannelId",
    "ChannelMode",
    "ChannelStats",
    "ChannelFault",
    "SubscriptionError",
    "FrameHandler",
    "Transport",
]

# a handler returns False when it filters the frame out (counted as dropped)
FrameHandler = Callable[[WireFrame], bool]


@dataclass(frozen=True, order=True)
class ChannelId:
    group: str
    port: int

    def __post_init__(self):
        addr = ipaddress.IPv4Address(self.group)
        if not addr.is_multicast:
            raise ValueError(f"{self.group} is not an IPv4 multicast address")
        if not 1024 <= self.port <= 65535:
            raise ValueError(f"port {self.port} outside 1024-65535")

    @classmethod
    def parse(cls, text: str) -> "ChannelId":
        group, sep, port = text.strip().rpartition(":")
        if not sep:
            raise ValueError(f"channel id {text!r} must be GROUP:PORT")
        return cls(group, int(port))

    def __str__(self) -> str:
        return f"{self.group}:{self.port}"


class ChannelMode(enum.Enum):
    MULTICAST = "multicast"
    LOOPBACK = "loopback"


class ChannelStats:
    """Monotone counters, safe to bump from several threads."""

    __slots__ = ("sent", "received", "dropped", "decode_errors", "_lock")

    def __init__(self):
        self.sent = self.received = self.dropped = self.decode_errors = 0
        self._lock = threading.Lock()

    def bump(self, name: str, n: int = 1) -> None:
        with self._lock:
            setattr(self, name, getattr(self, name) + n)

    def as_dict(self) -> dict[str, int]:
        return {k: getattr(self, k) for k in ("sent", "received", "dropped", "decode_errors")}

    def __repr__(self) -> str:
        return f"ChannelStats({self.as_dict()})"


class ChannelFault(RuntimeError):
    """Publishing failed: closed channel or socket error."""


class SubscriptionError(RuntimeError):
    pass


class Transport(Protocol):
    """What a device runtime needs from the network."""

    device: str

    def publish(self, channel: str, frame: WireFrame) -> None: ...

    def subscribe(self, channel: str, handler: FrameHandler, owner: str) -> object: ...

    def unsubscribe(self, handle: object) -> None: ...
