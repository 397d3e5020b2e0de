"""Deterministic in-process fabric for simulations and tests."""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

from secfb.clock import Clock, VirtualClock
from secfb.transport.channels import ChannelFault, ChannelStats, FrameHandler, SubscriptionError
from secfb.transport.frame import DecodeError, WireFrame, decode_frame, encode_frame

__all__ = ["LatencyModel", "LoopbackFabric", "LoopbackTransport", "loopback_network"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LatencyModel:
    """One-way delay between distinct devices; same-device delivery is immediate.

    Attributes:
        default_ms: Delay for any device pair without an override.
        per_pair: Overrides keyed by ``(source_device, target_device)``.
        jitter_ms: Upper bound of a uniform extra delay.
        seed: Seed of the jitter stream.
    """

    default_ms: float = 0.0
    per_pair: Mapping[tuple[str, str], float] = field(default_factory=dict)
    jitter_ms: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.default_ms < 0 or self.jitter_ms < 0 or any(v < 0 for v in self.per_pair.values()):
            raise ValueError("latencies must be non-negative")

    def base(self, source: str, target: str) -> float:
        if source == target:
            return 0.0
        return self.per_pair.get((source, target), self.default_ms)


@dataclass
class _Subscription:
    channel: str
    device: str
    owner: str
    handler: FrameHandler
    active: bool = True


class LoopbackFabric:
    """Shared medium connecting the per-device :class:`LoopbackTransport` handles."""

    def __init__(self, clock: Optional[Clock] = None, latency: Optional[LatencyModel] = None):
        self.clock = clock or VirtualClock()
        self.latency = latency or LatencyModel()
        self._rng = random.Random(self.latency.seed)
        self._subs: dict[str, list[_Subscription]] = {}
        self._stats: dict[str, ChannelStats] = {}
        self._closed: set[str] = set()
        self._last_delivery: dict[tuple[str, str], float] = {}
        self._devices: list[str] = []

    def attach(self, device: str) -> "LoopbackTransport":
        if device not in self._devices:
            self._devices.append(device)
        return LoopbackTransport(self, device)

    def stats(self, channel: str) -> ChannelStats:
        return self._stats.setdefault(channel, ChannelStats())

    def all_stats(self) -> dict[str, ChannelStats]:
        return dict(self._stats)

    def close(self, channel: str) -> None:
        self._closed.add(channel)

    def reopen(self, channel: str) -> None:
        self._closed.discard(channel)

    def subscribe(self, channel: str, device: str, handler: FrameHandler, owner: str) -> _Subscription:
        subs = self._subs.setdefault(channel, [])
        if any(s.active and s.owner == owner and s.device == device for s in subs):
            raise SubscriptionError(f"{device}/{owner} is already subscribed to {channel}")
        sub = _Subscription(channel, device, owner, handler)
        subs.append(sub)
        self.stats(channel)
        return sub

    def unsubscribe(self, sub: _Subscription) -> None:
        sub.active = False
        subs = self._subs.get(sub.channel, [])
        if sub in subs:
            subs.remove(sub)

    def publish_raw(self, channel: str, data: bytes, source: str, at: Optional[float] = None) -> None:
        """Schedule delivery to every attached device.

        Like a multicast group join, a subscription counts if it exists when
        the frame arrives, not when it was sent.
        """
        if channel in self._closed:
            raise ChannelFault(f"channel {channel} is closed")
        stats = self.stats(channel)
        stats.bump("sent")
        now = self.clock.now() if at is None else max(at, self.clock.now())
        for device in self._devices:
            delay = self.latency.base(source, device)
            if delay and self.latency.jitter_ms:
                delay += self._rng.uniform(0.0, self.latency.jitter_ms)
            key = (channel, device)
            # never overtake an earlier frame to the same device
            due = max(now + delay, self._last_delivery.get(key, now))
            self._last_delivery[key] = due
            # even zero-delay frames land after the current run-to-completion step
            self.clock.call_at(due, lambda d=device: self._deliver(channel, d, data, stats))

    def _deliver(self, channel: str, device: str, data: bytes, stats: ChannelStats) -> None:
        subs = [s for s in self._subs.get(channel, ()) if s.device == device and s.active]
        if not subs:
            return
        try:
            frame = decode_frame(data)
        except DecodeError as exc:
            log.debug("decode error on %s: %s", channel, exc)
            stats.bump("decode_errors")
            return
        for sub in subs:
            stats.bump("received" if sub.handler(frame) else "dropped")


class LoopbackTransport:
    """One device's view of a :class:`LoopbackFabric`."""

    def __init__(self, fabric: LoopbackFabric, device: str):
        self.fabric = fabric
        self.device = device
        # set by a runtime with a cost model: frames leave at its local time
        self.time_source: Optional[Callable[[], float]] = None

    def publish(self, channel: str, frame: WireFrame) -> None:
        at = self.time_source() if self.time_source is not None else None
        self.fabric.publish_raw(channel, encode_frame(frame), self.device, at)

    def subscribe(self, channel: str, handler: FrameHandler, owner: str):
        return self.fabric.subscribe(channel, self.device, handler, owner)

    def unsubscribe(self, handle) -> None:
        self.fabric.unsubscribe(handle)


def loopback_network(latency: LatencyModel | float = 0.0, clock: Optional[Clock] = None, *, jitter_ms: float = 0.0, seed: int = 0) -> LoopbackFabric:
    """Build a fabric from a latency model or a fixed one-way delay in ms."""
    if not isinstance(latency, LatencyModel):
        latency = LatencyModel(float(latency), jitter_ms=jitter_ms, seed=seed)
    return LoopbackFabric(clock, latency)
