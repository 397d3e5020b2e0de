"""Host-registered algorithms run by basic FBs.

An algorithm is ``fn(vars, ctx)``: ``vars`` is the instance's mutable data
(inputs, outputs and internal variables) and ``ctx`` offers ``rng``,
``state`` (per-instance scratch), ``count`` and ``now``.
"""

from __future__ import annotations

from typing import Callable

from secfb.crypto.aes import KeySchedule, aes_decrypt_block, aes_encrypt_block, aes_key_expansion
from secfb.runtime.codec import CodecError, block_to_bool, bool_to_block

__all__ = ["algorithm", "get_algorithm", "registered_algorithms", "KEYRING_DEPTH"]

_REGISTRY: dict[str, Callable] = {}

# current and previous epoch
KEYRING_DEPTH = 2


def algorithm(name: str):
    """Register ``fn`` under ``name``; re-registering replaces the old entry."""

    def deco(fn):
        _REGISTRY[name] = fn
        return fn

    return deco


def get_algorithm(name: str) -> Callable | None:
    return _REGISTRY.get(name)


def registered_algorithms() -> list[str]:
    return sorted(_REGISTRY)


def _schedule(ctx, expkey: bytes) -> KeySchedule:
    cached = ctx.state.get("sched")
    if cached is None or cached[0] != expkey:
        cached = (expkey, KeySchedule.from_bytes(expkey))
        ctx.state["sched"] = cached
    return cached[1]


@algorithm("aes_key_expansion")
def _aes_key_expansion(v, ctx):
    key = v["Key"]
    v["OK"] = False
    if not key:
        ctx.count("empty_key")
        return
    bits = v["ksize"] or 8 * len(key)
    if bits != 8 * len(key):
        ctx.count("key_size_mismatch")
        return
    v["expkey"] = aes_key_expansion(key, bits).expanded
    v["EPOCHO"] = v["EPOCH"]
    v["LINKO"] = v["LINK"]
    v["OK"] = True


@algorithm("aes_encrypt")
def _aes_encrypt(v, ctx):
    if not v["expkey"]:
        v["OK"] = False
        ctx.count("dropped_no_key")
        return
    v["ct"] = aes_encrypt_block(v["pt"], _schedule(ctx, v["expkey"]))
    v["EPOCHO"] = v["EPOCH"]
    v["OK"] = True


@algorithm("aes_install_key")
def _aes_install_key(v, ctx):
    expkey = v["expkey"]
    if not expkey:
        return
    ring = ctx.state.setdefault("keyring", {}).setdefault(v["KLINK"], [])
    ring[:] = [entry for entry in ring if entry[0] != v["KEPOCH"]]
    ring.append((v["KEPOCH"], KeySchedule.from_bytes(expkey)))
    del ring[:-KEYRING_DEPTH]
    ctx.count("keys_installed")


@algorithm("aes_decrypt")
def _aes_decrypt(v, ctx):
    ring = ctx.state.get("keyring", {}).get(v["LINK"], ())
    for epoch, sched in ring:
        if epoch == v["EPOCH"]:
            v["pt"] = aes_decrypt_block(v["ct"], sched)
            v["EPOCHO"] = v["EPOCH"]
            v["LINKO"] = v["LINK"]
            v["OK"] = True
            return
    v["OK"] = False
    ctx.count("undecryptable")


@algorithm("bool_to_block")
def _bool_to_block(v, ctx):
    v["OUT"] = bool_to_block(v["IN"], ctx.rng)


@algorithm("block_to_bool")
def _block_to_bool(v, ctx):
    try:
        v["OUT"] = block_to_bool(v["IN"])
        v["OK"] = True
    except CodecError:
        v["OK"] = False
        ctx.count("decode_errors")


@algorithm("copy_in_out")
def _copy_in_out(v, ctx):
    v["OUT"] = v["IN"]
