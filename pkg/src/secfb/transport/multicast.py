"""IPv4 UDP multicast transport for wall-clock runs (TTL 1)."""

from __future__ import annotations

import logging
import socket
import struct
import threading
from dataclasses import dataclass, field

from secfb.transport.channels import ChannelFault, ChannelId, ChannelStats, FrameHandler, SubscriptionError
from secfb.transport.frame import DecodeError, WireFrame, decode_frame, encode_frame

__all__ = ["MulticastTransport"]

log = logging.getLogger(__name__)

_MAX_DATAGRAM = 65535


@dataclass
class _Receiver:
    channel: ChannelId
    sock: socket.socket
    handlers: dict = field(default_factory=dict)
    thread: threading.Thread | None = None


class MulticastTransport:
    """One socket per joined group:port, each drained by a daemon thread.

    Handlers run on the receiver thread and must hand frames to the device
    queue through a thread-safe post.
    """

    def __init__(self, device: str, interface: str = "0.0.0.0", ttl: int = 1, loop: bool = True):
        self.device = device
        self.interface = interface
        self._send = socket.socket(socket.AF_INET, socket.SOCK_DGRAM, socket.IPPROTO_UDP)
        self._send.setsockopt(socket.IPPROTO_IP, socket.IP_MULTICAST_TTL, ttl)
        self._send.setsockopt(socket.IPPROTO_IP, socket.IP_MULTICAST_LOOP, 1 if loop else 0)
        self._receivers: dict[ChannelId, _Receiver] = {}
        self._stats: dict[str, ChannelStats] = {}
        self._lock = threading.Lock()
        self._closed = False

    def stats(self, channel: str) -> ChannelStats:
        return self._stats.setdefault(str(ChannelId.parse(channel)), ChannelStats())

    def publish(self, channel: str, frame: WireFrame) -> None:
        cid = ChannelId.parse(channel)
        if self._closed:
            raise ChannelFault("transport is closed")
        try:
            self._send.sendto(encode_frame(frame), (cid.group, cid.port))
        except OSError as exc:
            raise ChannelFault(f"send to {cid} failed: {exc}") from exc
        self.stats(channel).bump("sent")

    def _open(self, cid: ChannelId) -> _Receiver:
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM, socket.IPPROTO_UDP)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        if hasattr(socket, "SO_REUSEPORT"):
            sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEPORT, 1)
        sock.bind(("", cid.port))
        mreq = struct.pack("4s4s", socket.inet_aton(cid.group), socket.inet_aton(self.interface))
        sock.setsockopt(socket.IPPROTO_IP, socket.IP_ADD_MEMBERSHIP, mreq)
        sock.settimeout(0.2)
        rx = _Receiver(cid, sock)
        rx.thread = threading.Thread(target=self._drain, args=(rx,), name=f"mcast-{cid}", daemon=True)
        rx.thread.start()
        return rx

    def _drain(self, rx: _Receiver) -> None:
        stats = self.stats(str(rx.channel))
        while not self._closed:
            try:
                data, _ = rx.sock.recvfrom(_MAX_DATAGRAM)
            except socket.timeout:
                continue
            except OSError:
                break
            try:
                frame = decode_frame(data)
            except DecodeError as exc:
                log.debug("decode error on %s: %s", rx.channel, exc)
                stats.bump("decode_errors")
                continue
            with self._lock:
                handlers = list(rx.handlers.values())
            for handler in handlers:
                stats.bump("received" if handler(frame) else "dropped")

    def subscribe(self, channel: str, handler: FrameHandler, owner: str):
        cid = ChannelId.parse(channel)
        with self._lock:
            rx = self._receivers.get(cid)
            if rx is None:
                try:
                    rx = self._receivers[cid] = self._open(cid)
                except OSError as exc:
                    raise ChannelFault(f"cannot join {cid}: {exc}") from exc
            if owner in rx.handlers:
                raise SubscriptionError(f"{owner} is already subscribed to {cid}")
            rx.handlers[owner] = handler
        return (cid, owner)

    def unsubscribe(self, handle) -> None:
        cid, owner = handle
        with self._lock:
            rx = self._receivers.get(cid)
            if rx is not None:
                rx.handlers.pop(owner, None)

    def close(self) -> None:
        self._closed = True
        with self._lock:
            for rx in self._receivers.values():
                rx.sock.close()
            self._receivers.clear()
        self._send.close()
