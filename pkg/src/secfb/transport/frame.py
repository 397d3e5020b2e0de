"""Bit-exact wire frames for data, key-exchange and timestamp messages.

Layout (big-endian, 17-byte header)::

    0  magic       2  0xFB 0x5E
    2  version     1  0x01
    3  msg_type    1  0x01 DATA, 0x02 KE_INIT, 0x03 KE_RESP, 0x04 TS
    4  link_id     4
    8  sender_id   2
    10 key_epoch   1
    11 seq         4
    15 payload_len 2
    17 payload
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

__all__ = [
    "MAGIC",
    "VERSION",
    "HEADER_SIZE",
    "MsgType",
    "WireFrame",
    "FrameError",
    "DecodeError",
    "DecodeReason",
    "encode_frame",
    "decode_frame",
    "ts_payload",
    "ts_from_payload",
]

MAGIC = b"\xfb\x5e"
VERSION = 0x01
_HEADER = struct.Struct(">2sBBIHBIH")
HEADER_SIZE = _HEADER.size
_MAX_PAYLOAD = 0xFFFF


class MsgType(enum.IntEnum):
    DATA = 0x01
    KE_INIT = 0x02
    KE_RESP = 0x03
    TS = 0x04


@dataclass(frozen=True)
class WireFrame:
    msg_type: MsgType
    link_id: int
    sender_id: int = 0
    key_epoch: int = 0
    seq: int = 0
    payload: bytes = b""


class FrameError(ValueError):
    """A frame violates the layout invariants and cannot be encoded."""


class DecodeReason(enum.Enum):
    BAD_MAGIC = "BAD_MAGIC"
    BAD_VERSION = "BAD_VERSION"
    TRUNCATED = "TRUNCATED"
    BAD_LENGTH = "BAD_LENGTH"
    BAD_TYPE = "BAD_TYPE"


class DecodeError(ValueError):
    def __init__(self, reason: DecodeReason, detail: str = ""):
        super().__init__(f"{reason.value}: {detail}" if detail else reason.value)
        self.reason = reason


def _check(frame: WireFrame) -> None:
    for name, value, bits in (
        ("link_id", frame.link_id, 32),
        ("sender_id", frame.sender_id, 16),
        ("key_epoch", frame.key_epoch, 8),
        ("seq", frame.seq, 32),
    ):
        if not 0 <= value < (1 << bits):
            raise FrameError(f"{name}={value} does not fit in {bits} bits")
    n = len(frame.payload)
    if n > _MAX_PAYLOAD:
        raise FrameError(f"payload of {n} bytes exceeds {_MAX_PAYLOAD}")
    if frame.msg_type == MsgType.DATA and n % 16:
        raise FrameError(f"DATA payload must be whole 16-byte blocks, got {n} bytes")
    if frame.msg_type == MsgType.TS and n != 8:
        raise FrameError(f"TS payload must be 8 bytes, got {n}")


def encode_frame(frame: WireFrame) -> bytes:
    """Serialize ``frame``; the result is ``17 + len(payload)`` bytes."""
    try:
        msg_type = MsgType(frame.msg_type)
    except ValueError:
        raise FrameError(f"unknown message type {frame.msg_type!r}") from None
    _check(frame)
    header = _HEADER.pack(
        MAGIC, VERSION, msg_type, frame.link_id, frame.sender_id, frame.key_epoch, frame.seq, len(frame.payload)
    )
    return header + bytes(frame.payload)


def decode_frame(data: bytes) -> WireFrame:
    """Parse one frame strictly.

    Raises:
        DecodeError: with reason BAD_MAGIC, BAD_VERSION, TRUNCATED,
            BAD_LENGTH (trailing bytes or a payload breaking the per-type
            length rule) or BAD_TYPE.
    """
    data = bytes(data)
    if len(data) >= 2 and data[:2] != MAGIC:
        raise DecodeError(DecodeReason.BAD_MAGIC, data[:2].hex())
    if len(data) < HEADER_SIZE:
        raise DecodeError(DecodeReason.TRUNCATED, f"{len(data)} bytes is shorter than the header")
    magic, version, msg_type, link, sender, epoch, seq, length = _HEADER.unpack_from(data)
    if version != VERSION:
        raise DecodeError(DecodeReason.BAD_VERSION, str(version))
    try:
        msg_type = MsgType(msg_type)
    except ValueError:
        raise DecodeError(DecodeReason.BAD_TYPE, str(msg_type)) from None
    available = len(data) - HEADER_SIZE
    if length > available:
        raise DecodeError(DecodeReason.TRUNCATED, f"payload_len {length} exceeds {available} available bytes")
    if length < available:
        raise DecodeError(DecodeReason.BAD_LENGTH, f"{available - length} trailing bytes")
    if (msg_type == MsgType.DATA and length % 16) or (msg_type == MsgType.TS and length != 8):
        raise DecodeError(DecodeReason.BAD_LENGTH, f"{msg_type.name} payload of {length} bytes")
    return WireFrame(msg_type, link, sender, epoch, seq, data[HEADER_SIZE:])


def ts_payload(ms: int) -> bytes:
    return struct.pack(">Q", ms)


def ts_from_payload(payload: bytes) -> int:
    return struct.unpack(">Q", payload)[0]
