"""Service bindings behind the standard SIFB types.

A service object is created per SIFB instance with an
:class:`~secfb.runtime.engine.FBContext`.  ``handle(event, payload)`` runs on
the device loop for interface input events (payload ``None``) and for events
the service posted to itself (network receipts, timer ticks).
"""

from __future__ import annotations

import logging
import math
from typing import Optional

from secfb.core import DataKind
from secfb.crypto.dh import MODP_2048, TOY_GROUP, DhError, DhGroup, derive_session_key, dh_keypair, dh_shared_secret
from secfb.runtime.costs import DH_COST
from secfb.runtime.codec import CodecError, decode_value, encode_value
from secfb.runtime.engine import LatencySample
from secfb.transport.frame import MsgType, WireFrame, ts_from_payload, ts_payload

__all__ = [
    "Service",
    "service",
    "default_services",
    "KeStatus",
    "DH_GROUPS",
    "DEFAULT_KE_TIMEOUT_MS",
]

log = logging.getLogger(__name__)

_SERVICES: dict[str, type] = {}

DH_GROUPS: dict[str, DhGroup] = {"modp2048": MODP_2048, "toy23": TOY_GROUP}
DEFAULT_KE_TIMEOUT_MS = 200


class KeStatus:
    IDLE = "IDLE"
    ESTABLISHED = "ESTABLISHED"
    TIMEOUT = "TIMEOUT"
    PROTOCOL_ERROR = "PROTOCOL_ERROR"


def service(name: str):
    def deco(cls):
        cls.binding = name
        _SERVICES[name] = cls
        return cls

    return deco


def default_services() -> dict[str, type]:
    return dict(_SERVICES)


def _split(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _links(text: str) -> set[int]:
    return {int(part) for part in _split(text)}


class Service:
    binding = ""

    def __init__(self, ctx):
        self.ctx = ctx
        self._subs: list = []

    def start(self) -> None:
        pass

    def stop(self) -> None:
        for handle in self._subs:
            self.ctx.transport.unsubscribe(handle)
        self._subs.clear()

    def handle(self, event: str, payload) -> None:
        raise NotImplementedError

    def subscribe(self, channel: str, handler) -> None:
        self._subs.append(self.ctx.transport.subscribe(channel, handler, self.ctx.path))


@service("restart")
class RestartService(Service):
    def start(self) -> None:
        self.ctx.post("_cold")

    def handle(self, event, payload):
        if event == "_cold":
            self.ctx.emit("COLD")


@service("cycle")
class CycleService(Service):
    """E_CYCLE: EO at every multiple of DT after START until STOP."""

    def __init__(self, ctx):
        super().__init__(ctx)
        self.generation = 0
        self.timer = None

    def _arm(self) -> None:
        due = self.base + self.k * self.dt
        gen = self.generation
        self.timer = self.ctx.clock.call_at(due, lambda: self.ctx.post("_tick", gen))

    def handle(self, event, payload):
        if event == "START":
            dt = self.ctx.vars["DT"]
            if dt <= 0:
                self.ctx.count("rejected")
                self.ctx.warn(f"E_CYCLE DT must be positive, got {dt}")
                return
            self.generation += 1
            if self.timer is not None:
                self.timer.cancel()
            self.dt, self.base, self.k = dt, self.ctx.now(), 1
            self._arm()
        elif event == "STOP":
            self.generation += 1
            if self.timer is not None:
                self.timer.cancel()
        elif event == "_tick" and payload == self.generation:
            self.ctx.emit("EO")
            self.k += 1
            self._arm()


@service("delay")
class DelayService(Service):
    """E_DELAY: one EO DT ms after START; a new START restarts the delay."""

    def __init__(self, ctx):
        super().__init__(ctx)
        self.generation = 0
        self.timer = None

    def handle(self, event, payload):
        if event in ("START", "STOP"):
            self.generation += 1
            if self.timer is not None:
                self.timer.cancel()
                self.timer = None
            if event == "START":
                dt = self.ctx.vars["DT"]
                if dt < 0:
                    self.ctx.count("rejected")
                    self.ctx.warn(f"E_DELAY DT must be non-negative, got {dt}")
                    return
                self.timer = self.ctx.schedule(dt, "_fire", self.generation)
        elif event == "_fire" and payload == self.generation:
            self.timer = None
            self.ctx.emit("EO")


@service("timestamp")
class TimestampService(Service):
    def handle(self, event, payload):
        if event == "REQ":
            self.ctx.write("TS", int(math.floor(self.ctx.now())))
            self.ctx.emit("CNF")


@service("ke")
class KeyExchangeService(Service):
    """Diffie-Hellman over KE_INIT / KE_RESP frames.

    The initiator (QI=true) starts an exchange on every REQ with a fresh key
    pair and the next epoch, and retries after a timeout until its first
    session exists.  The responder answers every KE_INIT for its links; REQ
    only arms a timeout watch.
    """

    def __init__(self, ctx):
        super().__init__(ctx)
        self.ready = False
        self.keypair: Optional[tuple[int, int]] = None
        self.pending = None
        self.attempt = 0
        self.next_epoch = 0
        self.sessions = 0
        self.timer = None
        self.replies: dict[int, tuple] = {}

    def handle(self, event, payload):
        if event == "INIT":
            self._init()
        elif event == "REQ":
            if not self.ready:
                self.ctx.warn("KE REQ before INIT ignored")
            elif self.initiator:
                self._request()
            else:
                gen = self.sessions
                self.ctx.schedule(self.timeout, "_watch", gen)
        elif event == "_ke":
            if self.initiator:
                self._on_response(payload)
            else:
                self._on_init(payload)
        elif event == "_timeout":
            self._on_timeout(payload)
        elif event == "_watch" and payload == self.sessions:
            self._finish(KeStatus.TIMEOUT)

    def _init(self) -> None:
        v = self.ctx.vars
        self.initiator = bool(v["QI"])
        self.group = DH_GROUPS.get(v["GROUP"] or "modp2048")
        if self.group is None:
            raise ValueError(f"unknown DH group {v['GROUP']!r}")
        self.ksize = v["ksize"] or 128
        self.timeout = v["TIMEOUT"] if v["TIMEOUT"] > 0 else DEFAULT_KE_TIMEOUT_MS
        self.sender = v["SENDER"]
        channels = _split(v["ID"])
        if not channels:
            raise ValueError("KE service needs a channel ID")
        self.stop()
        if self.initiator:
            self.link = v["LINK"]
            self.channel = channels[0]
            self.subscribe(self.channel, self._accept)
        else:
            links = [int(x) for x in _split(v["LINKS"])] or [v["LINK"]]
            if len(channels) == 1:
                channels = channels * len(links)
            if len(channels) != len(links):
                raise ValueError(f"{len(channels)} KE channels for {len(links)} links")
            self.channel_of = dict(zip(links, channels))
            for channel in dict.fromkeys(channels):
                self.subscribe(channel, self._accept)
        self.keypair = dh_keypair(self.group, self.ctx.rng)
        self.ctx.charge(DH_COST)
        self.ready = True
        self.ctx.write("STATUS", KeStatus.IDLE)
        self.ctx.emit("INITO")

    def _accept(self, frame: WireFrame) -> bool:
        if self.initiator:
            wanted = frame.msg_type == MsgType.KE_RESP and frame.link_id == self.link
        else:
            wanted = frame.msg_type == MsgType.KE_INIT and frame.link_id in self.channel_of
        if wanted:
            self.ctx.post("_ke", frame)
        return wanted

    def _fresh_pair(self) -> tuple[int, int]:
        pair, self.keypair = self.keypair, None
        if pair is None:
            pair = dh_keypair(self.group, self.ctx.rng)
            self.ctx.charge(DH_COST)
        return pair

    def _public_bytes(self, public: int) -> bytes:
        return public.to_bytes(self.group.byte_length, "big")

    def _peer_public(self, frame: WireFrame) -> int:
        if len(frame.payload) != self.group.byte_length:
            raise DhError(f"public value of {len(frame.payload)} bytes, expected {self.group.byte_length}")
        return int.from_bytes(frame.payload, "big")

    def _request(self) -> None:
        self.attempt += 1
        private, public = self._fresh_pair()
        epoch = self.next_epoch
        self.pending = (epoch, private, self.attempt)
        frame = WireFrame(MsgType.KE_INIT, self.link, self.sender, epoch, self.attempt & 0xFFFFFFFF, self._public_bytes(public))
        if self.timer is not None:
            self.timer.cancel()
        self.timer = self.ctx.schedule(self.timeout, "_timeout", self.attempt)
        self.ctx.count("ke_init_sent")
        self.ctx.transport.publish(self.channel, frame)

    def _on_response(self, frame: WireFrame) -> None:
        # a late answer to an earlier attempt would pair with the wrong private key
        if self.pending is None or (frame.key_epoch, frame.seq) != (self.pending[0], self.pending[2] & 0xFFFFFFFF):
            self.ctx.count("stale_responses")
            return
        epoch, private, _ = self.pending
        try:
            secret = dh_shared_secret(private, self._peer_public(frame), self.group)
            self.ctx.charge(DH_COST)
        except DhError as exc:
            self.ctx.warn(f"rejected KE_RESP: {exc}")
            self._finish(KeStatus.PROTOCOL_ERROR)
            return
        self.pending = None
        if self.timer is not None:
            self.timer.cancel()
        self.next_epoch = (epoch + 1) % 256
        self._established(secret, self.link, epoch)

    def _on_init(self, frame: WireFrame) -> None:
        link, epoch = frame.link_id, frame.key_epoch
        cached = self.replies.get(link)
        if cached is not None and cached[0] == epoch and cached[1] == frame.payload:
            # duplicate request: repeat the answer, keep the installed key
            self.ctx.transport.publish(self.channel_of[link], cached[2])
            return
        try:
            peer = self._peer_public(frame)
            private, public = self._fresh_pair()
            secret = dh_shared_secret(private, peer, self.group)
            self.ctx.charge(DH_COST)
        except DhError as exc:
            self.ctx.warn(f"rejected KE_INIT: {exc}")
            self._finish(KeStatus.PROTOCOL_ERROR)
            return
        reply = WireFrame(MsgType.KE_RESP, link, self.sender, epoch, frame.seq, self._public_bytes(public))
        self.replies[link] = (epoch, frame.payload, reply)
        self.ctx.transport.publish(self.channel_of[link], reply)
        self._established(secret, link, epoch)

    def _established(self, secret: int, link: int, epoch: int) -> None:
        key = derive_session_key(secret, self.ksize, link, epoch, self.ctx.now())
        self.sessions += 1
        self.ctx.count("sessions")
        self.ctx.write("Key", key.key)
        self.ctx.write("EPOCH", key.epoch)
        self.ctx.write("LINKO", link)
        self.ctx.write("STATUS", KeStatus.ESTABLISHED)
        self.ctx.emit("CNF")

    def _finish(self, status: str) -> None:
        self.ctx.count(status.lower())
        self.ctx.write("Key", b"")
        self.ctx.write("STATUS", status)
        self.ctx.emit("CNF")

    def _on_timeout(self, attempt: int) -> None:
        if self.pending is None or self.pending[2] != attempt:
            return
        self.pending = None
        self._finish(KeStatus.TIMEOUT)
        if self.sessions == 0:
            self._request()


@service("publisher")
class PublisherService(Service):
    def handle(self, event, payload):
        v = self.ctx.vars
        if event == "INIT":
            self.channel, self.seq = v["ID"], 0
            self.ctx.emit("INITO")
        elif event == "REQ":
            frame = WireFrame(MsgType.DATA, v["LINK"], v["SENDER"], v["EPOCH"], self.seq, v["DATA"])
            self.ctx.transport.publish(self.channel, frame)
            self.ctx.write("SEQ", self.seq)
            self.seq = (self.seq + 1) & 0xFFFFFFFF
            self.ctx.emit("CNF")


class _FilteredSubscriber(Service):
    msg_type = MsgType.DATA

    def _subscribe_all(self) -> None:
        v = self.ctx.vars
        self.stop()
        self.links = _links(v["LINKS"])
        for channel in dict.fromkeys(_split(v["ID"])):
            self.subscribe(channel, self._accept)
        self.ctx.emit("INITO")

    def _accept(self, frame: WireFrame) -> bool:
        if frame.msg_type != self.msg_type or (self.links and frame.link_id not in self.links):
            self.ctx.count("dropped")
            return False
        self.ctx.post("_frame", frame)
        return True


@service("subscriber")
class SubscriberService(_FilteredSubscriber):
    def handle(self, event, payload):
        if event == "INIT":
            self._subscribe_all()
        elif event == "_frame":
            if len(payload.payload) != 16:
                self.ctx.count("dropped")
                return
            self.ctx.write("DATA", payload.payload)
            self.ctx.write("LINK", payload.link_id)
            self.ctx.write("SEQ", payload.seq)
            self.ctx.write("EPOCH", payload.key_epoch)
            self.ctx.write("SENDER", payload.sender_id)
            self.ctx.emit("IND")


@service("ts_publisher")
class TSPublisherService(Service):
    def handle(self, event, payload):
        v = self.ctx.vars
        if event == "INIT":
            self.channel = v["ID"]
            self.ctx.emit("INITO")
        elif event == "REQ":
            frame = WireFrame(MsgType.TS, v["LINK"], v["SENDER"], 0, v["SEQ"], ts_payload(max(0, v["TS"])))
            self.ctx.transport.publish(self.channel, frame)
            self.ctx.emit("CNF")


@service("ts_subscriber")
class TSSubscriberService(_FilteredSubscriber):
    msg_type = MsgType.TS

    def handle(self, event, payload):
        if event == "INIT":
            self._subscribe_all()
        elif event == "_frame":
            self.ctx.write("TS", ts_from_payload(payload.payload))
            self.ctx.write("LINK", payload.link_id)
            self.ctx.write("SEQ", payload.seq)
            self.ctx.emit("IND")


@service("latency")
class LatencyRecorderService(Service):
    """Pairs t1 and t2 by (link, seq) in whichever order they arrive."""

    def __init__(self, ctx):
        super().__init__(ctx)
        self.t1: dict[tuple[int, int], int] = {}
        self.t2: dict[tuple[int, int], tuple[int, int]] = {}

    def handle(self, event, payload):
        v = self.ctx.vars
        if event == "T1":
            key = (v["LINK1"], v["SEQ1"])
            if key in self.t2:
                t2, epoch = self.t2.pop(key)
                self._record(key, v["TS1"], t2, epoch)
            else:
                self.t1[key] = v["TS1"]
        elif event == "T2":
            key = (v["LINK2"], v["SEQ2"])
            if key in self.t1:
                self._record(key, self.t1.pop(key), v["TS2"], v["EPOCH2"])
            else:
                self.t2[key] = (v["TS2"], v["EPOCH2"])

    def _record(self, key, t1: int, t2: int, epoch: int) -> None:
        self.ctx.record_sample(LatencySample(key[0], key[1], epoch, t1, t2, self.ctx.device))
        self.ctx.emit("CNF")


@service("plain_publisher")
class PlainPublisherService(Service):
    def handle(self, event, payload):
        v = self.ctx.vars
        if event == "INIT":
            self.channel, self.seq = v["ID"], 0
            self.kind = self.ctx.fbtype.interface.input_kind("SD_1")
            self.ctx.emit("INITO")
        elif event == "REQ":
            frame = WireFrame(MsgType.DATA, v["LINK"], v["SENDER"], 0, self.seq, encode_value(self.kind, v["SD_1"]))
            self.ctx.transport.publish(self.channel, frame)
            self.seq = (self.seq + 1) & 0xFFFFFFFF
            self.ctx.emit("CNF")


@service("plain_subscriber")
class PlainSubscriberService(_FilteredSubscriber):
    def handle(self, event, payload):
        if event == "INIT":
            self.kind: DataKind = self.ctx.fbtype.interface.output_kind("RD_1")
            self._subscribe_all()
        elif event == "_frame":
            try:
                value = decode_value(self.kind, payload.payload)
            except CodecError:
                self.ctx.count("decode_errors")
                return
            self.ctx.write("RD_1", value)
            self.ctx.write("LINK", payload.link_id)
            self.ctx.emit("IND")
