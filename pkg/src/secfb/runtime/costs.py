"""Virtual processing time charged per algorithm or service call.

Without a cost model every reaction takes zero virtual time, so measured
latency is pure transport delay.  With one, each device keeps a busy-until
mark: work queued behind it starts late, timestamps read the device's local
time and frames leave when the work that produced them is done.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Any, Mapping

from secfb.crypto.aes import KeySize, aes_encrypt_block, aes_key_expansion
from secfb.crypto.dh import MODP_2048, dh_keypair, dh_shared_secret

__all__ = ["CostModel", "DH_COST", "rounds_for"]

# one modular exponentiation in the key exchange
DH_COST = "dh_modexp"
_ROUNDS = {16: 10, 24: 12, 32: 14}


def rounds_for(values: Mapping[str, Any]) -> int:
    """AES round count implied by an instance's variables, 0 if none applies."""
    expkey = values.get("expkey")
    if isinstance(expkey, (bytes, bytearray)) and expkey:
        return len(expkey) // 16 - 1
    key = values.get("Key")
    if isinstance(key, (bytes, bytearray)):
        return _ROUNDS.get(len(key), 0)
    return 0


@dataclass(frozen=True)
class CostModel:
    """Milliseconds charged per call.

    Attributes:
        fixed: Flat cost keyed by algorithm name or ``dh_modexp``.
        per_round: Cost per AES round for the AES algorithms; the round
            count comes from the instance's key material.
    """

    fixed: Mapping[str, float] = field(default_factory=dict)
    per_round: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if any(v < 0 for v in (*self.fixed.values(), *self.per_round.values())):
            raise ValueError("costs must be non-negative")

    def cost(self, name: str, values: Mapping[str, Any]) -> float:
        total = self.fixed.get(name, 0.0)
        per_round = self.per_round.get(name)
        if per_round:
            total += per_round * rounds_for(values)
        return total

    def scaled(self, factor: float) -> "CostModel":
        if factor < 0:
            raise ValueError("scale must be non-negative")
        return CostModel(
            {k: v * factor for k, v in self.fixed.items()},
            {k: v * factor for k, v in self.per_round.items()},
        )

    @classmethod
    def calibrate(cls, repeats: int = 50) -> "CostModel":
        """Measure this host's AES and Diffie-Hellman speed.

        Results vary between runs and machines; use for indicative numbers only.
        """

        def timed(fn) -> float:
            start = time.perf_counter()
            for _ in range(repeats):
                fn()
            return (time.perf_counter() - start) * 1000.0 / repeats

        key = bytes(range(32))
        block = bytes(16)
        per_round_enc = []
        per_round_exp = []
        for bits in (128, 192, 256):
            size = KeySize(bits)
            k = key[: size.key_bytes]
            sched = aes_key_expansion(k)
            per_round_enc.append(timed(lambda: aes_encrypt_block(block, sched)) / size.rounds)
            per_round_exp.append(timed(lambda: aes_key_expansion(k)) / size.rounds)
        priv, pub = dh_keypair(MODP_2048, private=2**200 + 1)
        dh_ms = timed(lambda: dh_shared_secret(priv, pub, MODP_2048))
        enc = sum(per_round_enc) / len(per_round_enc)
        exp = sum(per_round_exp) / len(per_round_exp)
        return cls(
            fixed={DH_COST: dh_ms},
            per_round={"aes_encrypt": enc, "aes_decrypt": enc, "aes_key_expansion": exp},
        )
