"""Finite-field Diffie-Hellman and session-key derivation."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import gmpy2

from secfb.crypto.aes import KeySize
from secfb.crypto.entropy import Entropy, SystemEntropy

__all__ = [
    "DhGroup",
    "DhError",
    "MODP_2048",
    "TOY_GROUP",
    "SessionKey",
    "dh_keypair",
    "dh_shared_secret",
    "derive_session_key",
]


class DhError(ValueError):
    """Raised for out-of-range peer values (possible tampering)."""


@dataclass(frozen=True)
class DhGroup:
    p: int
    g: int
    name: str = ""

    def __post_init__(self):
        if self.p % 2 == 0 or self.p < 5:
            raise ValueError("DH modulus must be an odd prime > 3")
        if not 2 <= self.g < self.p:
            raise ValueError("DH generator must satisfy 2 <= g < p")

    @property
    def byte_length(self) -> int:
        return (self.p.bit_length() + 7) // 8


# RFC 3526, 2048-bit MODP group (group 14)
MODP_2048 = DhGroup(
    int(
        "FFFFFFFF FFFFFFFF C90FDAA2 2168C234 C4C6628B 80DC1CD1"
        "29024E08 8A67CC74 020BBEA6 3B139B22 514A0879 8E3404DD"
        "EF9519B3 CD3A431B 302B0A6D F25F1437 4FE1356D 6D51C245"
        "E485B576 625E7EC6 F44C42E9 A637ED6B 0BFF5CB6 F406B7ED"
        "EE386BFB 5A899FA5 AE9F2411 7C4B1FE6 49286651 ECE45B3D"
        "C2007CB8 A163BF05 98DA4836 1C55D39A 69163FA8 FD24CF5F"
        "83655D23 DCA3AD96 1C62F356 208552BB 9ED52907 7096966D"
        "670C354E 4ABC9804 F1746C08 CA18217C 32905E46 2E36CE3B"
        "E39E772C 180E8603 9B2783A2 EC07A28F B5C55DF0 6F4C52C9"
        "DE2BCBF6 95581718 3995497C EA956AE5 15D22618 98FA0510"
        "15728E5A 8AACAA68 FFFFFFFF FFFFFFFF".replace(" ", ""),
        16,
    ),
    2,
    "modp2048",
)

# textbook group; only for tests and demonstrations
TOY_GROUP = DhGroup(23, 5, "toy23")


@dataclass(frozen=True)
class SessionKey:
    key: bytes
    epoch: int
    established_at: float = 0.0

    def __post_init__(self):
        if not 0 <= self.epoch <= 255:
            raise ValueError("key epoch is an 8-bit counter")


def dh_keypair(group: DhGroup, rng: Entropy | None = None, private: int | None = None) -> tuple[int, int]:
    """Return ``(private, public)`` with private drawn from [2, p-2]."""
    if private is None:
        rng = rng or SystemEntropy()
        private = 2 + rng.randbelow(group.p - 3)
    elif not 2 <= private <= group.p - 2:
        raise DhError("private exponent outside [2, p-2]")
    return private, int(gmpy2.powmod(group.g, private, group.p))


def dh_shared_secret(private: int, peer_public: int, group: DhGroup) -> int:
    if not 1 < peer_public < group.p:
        raise DhError(f"peer public value out of range (1, p): {peer_public}")
    # GMP is several times faster than pow() at 2048 bits
    return int(gmpy2.powmod(peer_public, private, group.p))


def derive_session_key(
    secret: int, ksize: KeySize | int, link_id: int, epoch: int, established_at: float = 0.0
) -> SessionKey:
    """SHA-256 over the big-endian secret, link id and epoch, truncated to the key size."""
    if secret <= 0:
        raise DhError("shared secret must be positive")
    if isinstance(ksize, int):
        ksize = KeySize(ksize)
    secret_bytes = secret.to_bytes((secret.bit_length() + 7) // 8, "big")
    context = link_id.to_bytes(4, "big") + bytes([epoch & 0xFF])
    digest = hashlib.sha256(secret_bytes + context).digest()
    return SessionKey(digest[: ksize.key_bytes], epoch & 0xFF, established_at)
