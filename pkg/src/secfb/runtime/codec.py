"""Value encodings carried inside DATA frame payloads."""

from __future__ import annotations

import struct

from secfb.core import DataKind
from secfb.crypto.entropy import Entropy

__all__ = ["bool_to_block", "block_to_bool", "encode_value", "decode_value", "CodecError"]


class CodecError(ValueError):
    pass


def bool_to_block(value: bool, rng: Entropy) -> bytes:
    """Byte 0 carries the value, bytes 1-15 are random so repeated values encrypt differently."""
    return (b"\x01" if value else b"\x00") + rng.randbytes(15)


def block_to_bool(block: bytes) -> bool:
    if len(block) != 16:
        raise CodecError(f"expected a 16-byte block, got {len(block)} bytes")
    if block[0] not in (0, 1):
        raise CodecError(f"byte 0 is 0x{block[0]:02x}, not a boolean alias")
    return block[0] == 1


def _pad(data: bytes) -> bytes:
    return data + bytes(-len(data) % 16)


def encode_value(kind: DataKind, value) -> bytes:
    """Encode for a plain (unencrypted) DATA frame; the result is whole 16-byte blocks."""
    value = kind.coerce(value)
    if kind is DataKind.BOOL:
        raw = b"\x01" if value else b"\x00"
    elif kind is DataKind.INT:
        raw = struct.pack(">q", value)
    elif kind is DataKind.UINT:
        raw = struct.pack(">Q", value)
    elif kind is DataKind.LREAL:
        raw = struct.pack(">d", value)
    elif kind is DataKind.BYTE:
        raw = bytes([value])
    elif kind is DataKind.BYTES16:
        return value
    else:
        body = value.encode("utf-8") if kind is DataKind.STRING else value
        raw = struct.pack(">I", len(body)) + body
    return _pad(raw)


def decode_value(kind: DataKind, payload: bytes):
    try:
        if kind is DataKind.BOOL:
            if payload[0] not in (0, 1):
                raise CodecError("bad BOOL byte")
            return payload[0] == 1
        if kind is DataKind.INT:
            return struct.unpack_from(">q", payload)[0]
        if kind is DataKind.UINT:
            return struct.unpack_from(">Q", payload)[0]
        if kind is DataKind.LREAL:
            return struct.unpack_from(">d", payload)[0]
        if kind is DataKind.BYTE:
            return payload[0]
        if kind is DataKind.BYTES16:
            return kind.coerce(payload[:16])
        (n,) = struct.unpack_from(">I", payload)
        body = payload[4 : 4 + n]
        if len(body) != n:
            raise CodecError("truncated value")
        return body.decode("utf-8") if kind is DataKind.STRING else body
    except (IndexError, struct.error, UnicodeDecodeError, ValueError) as exc:
        raise CodecError(f"cannot decode {kind.value}: {exc}") from exc
