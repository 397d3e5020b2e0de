"""AES block cipher (Rijndael, 128-bit block) with a separate key schedule.

Key expansion is its own step so a session pays for it once and every
block afterwards only runs the round transform.  The round functions use
the usual 32-bit lookup tables; the S-box itself is derived from the field
inverse and the affine map at import time rather than pasted in.

Only ECB is offered.  ECB encrypts equal blocks to equal ciphertexts, so
callers that send low-entropy values (a boolean trip signal, say) must fill
the rest of the block with fresh random bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

__all__ = [
    "KeySize",
    "KeySchedule",
    "AESError",
    "SBOX",
    "INV_SBOX",
    "aes_key_expansion",
    "aes_encrypt_block",
    "aes_decrypt_block",
    "ecb_encrypt",
    "ecb_decrypt",
    "MODES",
]

MODES = ("ECB",)


class AESError(ValueError):
    pass


def _xtime(a: int) -> int:
    a <<= 1
    return (a ^ 0x11B) if a & 0x100 else a


def _gmul(a: int, b: int) -> int:
    p = 0
    while b:
        if b & 1:
            p ^= a
        a = _xtime(a)
        b >>= 1
    return p


def _build_sbox() -> tuple[list[int], list[int]]:
    # multiplicative inverse via exp/log tables over generator 3
    exp = [0] * 510
    log = [0] * 256
    x = 1
    for i in range(255):
        exp[i] = exp[i + 255] = x
        log[x] = i
        x ^= _xtime(x)
    sbox = [0] * 256
    for a in range(256):
        inv = 0 if a == 0 else exp[255 - log[a]]
        s = inv
        for shift in range(1, 5):
            s ^= ((inv << shift) | (inv >> (8 - shift))) & 0xFF
        sbox[a] = s ^ 0x63
    inv_sbox = [0] * 256
    for a, s in enumerate(sbox):
        inv_sbox[s] = a
    return sbox, inv_sbox


SBOX, INV_SBOX = _build_sbox()


def _ror8(w: int) -> int:
    return ((w >> 8) | (w << 24)) & 0xFFFFFFFF


def _build_tables():
    te0, td0 = [], []
    for a in range(256):
        s = SBOX[a]
        te0.append((_gmul(s, 2) << 24) | (s << 16) | (s << 8) | _gmul(s, 3))
        i = INV_SBOX[a]
        td0.append((_gmul(i, 14) << 24) | (_gmul(i, 9) << 16) | (_gmul(i, 13) << 8) | _gmul(i, 11))
    te1 = [_ror8(w) for w in te0]
    te2 = [_ror8(w) for w in te1]
    te3 = [_ror8(w) for w in te2]
    td1 = [_ror8(w) for w in td0]
    td2 = [_ror8(w) for w in td1]
    td3 = [_ror8(w) for w in td2]
    return (te0, te1, te2, te3), (td0, td1, td2, td3)


(_TE0, _TE1, _TE2, _TE3), (_TD0, _TD1, _TD2, _TD3) = _build_tables()
# InvMixColumns of a round-key byte, one table per row position
_IMC = tuple([td[SBOX[b]] for b in range(256)] for td in (_TD0, _TD1, _TD2, _TD3))
_BLOCK = struct.Struct(">4I")
_RCON = [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1B, 0x36]


@dataclass(frozen=True)
class KeySize:
    bits: int

    def __post_init__(self):
        if self.bits not in (128, 192, 256):
            raise AESError(f"AES key size must be 128, 192 or 256 bits, got {self.bits}")

    @property
    def rounds(self) -> int:
        return {128: 10, 192: 12, 256: 14}[self.bits]

    @property
    def key_bytes(self) -> int:
        return self.bits // 8

    @property
    def schedule_bytes(self) -> int:
        return 16 * (self.rounds + 1)


@dataclass(frozen=True)
class KeySchedule:
    """Expanded key material.  ``expanded`` is the FIPS-197 byte schedule."""

    ksize: KeySize
    expanded: bytes
    _enc_words: tuple = field(default=(), repr=False, compare=False)
    _dec_words: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if len(self.expanded) != self.ksize.schedule_bytes:
            raise AESError(
                f"expanded key for AES-{self.ksize.bits} must be {self.ksize.schedule_bytes} bytes, "
                f"got {len(self.expanded)}"
            )
        if not self._enc_words:
            enc = struct.unpack(f">{len(self.expanded) // 4}I", self.expanded)
            object.__setattr__(self, "_enc_words", enc)

    @property
    def dec_words(self) -> tuple:
        if not self._dec_words:
            object.__setattr__(self, "_dec_words", _inverse_schedule(self._enc_words, self.ksize.rounds))
        return self._dec_words

    @classmethod
    def from_bytes(cls, expanded: bytes) -> "KeySchedule":
        sizes = {176: 128, 208: 192, 240: 256}
        if len(expanded) not in sizes:
            raise AESError(f"no AES key size has a {len(expanded)}-byte schedule")
        return cls(KeySize(sizes[len(expanded)]), bytes(expanded))


def _inverse_schedule(w: tuple, rounds: int) -> tuple:
    # equivalent inverse cipher: reverse round order, InvMixColumns on inner keys
    m0, m1, m2, m3 = _IMC
    inner = [m0[k >> 24] ^ m1[(k >> 16) & 0xFF] ^ m2[(k >> 8) & 0xFF] ^ m3[k & 0xFF] for k in w[4:4 * rounds]]
    out = list(w[4 * rounds:4 * rounds + 4])
    for r in range(rounds - 2, -1, -1):
        out += inner[4 * r:4 * r + 4]
    out += w[0:4]
    return tuple(out)


def aes_key_expansion(key: bytes, ksize: KeySize | int | None = None) -> KeySchedule:
    """Expand ``key`` into the round-key schedule.

    Args:
        key: raw key bytes, 16/24/32 long.
        ksize: expected key size; defaults to the size implied by ``key``.

    Raises:
        AESError: if the key length does not match ``ksize``.
    """
    if ksize is None:
        ksize = KeySize(len(key) * 8) if len(key) in (16, 24, 32) else None
        if ksize is None:
            raise AESError(f"AES key must be 16, 24 or 32 bytes, got {len(key)}")
    elif isinstance(ksize, int):
        ksize = KeySize(ksize)
    if len(key) != ksize.key_bytes:
        raise AESError(f"AES-{ksize.bits} needs a {ksize.key_bytes}-byte key, got {len(key)}")
    nk = ksize.key_bytes // 4
    total = 4 * (ksize.rounds + 1)
    w = list(struct.unpack(f">{nk}I", key))
    sb = SBOX
    append = w.append
    # whole nk-word chunks, truncated afterwards
    for rcon in _RCON[: -(-(total - nk) // nk)]:
        t = w[-1]
        # RotWord then SubWord, folded into one byte shuffle
        t = ((sb[(t >> 16) & 0xFF] << 24) | (sb[(t >> 8) & 0xFF] << 16) | (sb[t & 0xFF] << 8) | sb[t >> 24]) ^ (rcon << 24)
        t ^= w[-nk]
        append(t)
        for j in range(1, nk):
            if j == 4 and nk == 8:
                t = (sb[t >> 24] << 24) | (sb[(t >> 16) & 0xFF] << 16) | (sb[(t >> 8) & 0xFF] << 8) | sb[t & 0xFF]
            t ^= w[-nk]
            append(t)
    del w[total:]
    return KeySchedule(ksize, struct.pack(f">{total}I", *w), tuple(w))


def _check_block(block: bytes) -> None:
    if len(block) != 16:
        raise AESError(f"AES blocks are 16 bytes, got {len(block)}")


def aes_encrypt_block(pt: bytes, sched: KeySchedule) -> bytes:
    _check_block(pt)
    rk = sched._enc_words
    rounds = sched.ksize.rounds
    s0, s1, s2, s3 = _BLOCK.unpack(pt)
    s0 ^= rk[0]
    s1 ^= rk[1]
    s2 ^= rk[2]
    s3 ^= rk[3]
    te0, te1, te2, te3 = _TE0, _TE1, _TE2, _TE3
    k = 4
    for _ in range(rounds - 1):
        t0 = te0[s0 >> 24] ^ te1[(s1 >> 16) & 0xFF] ^ te2[(s2 >> 8) & 0xFF] ^ te3[s3 & 0xFF] ^ rk[k]
        t1 = te0[s1 >> 24] ^ te1[(s2 >> 16) & 0xFF] ^ te2[(s3 >> 8) & 0xFF] ^ te3[s0 & 0xFF] ^ rk[k + 1]
        t2 = te0[s2 >> 24] ^ te1[(s3 >> 16) & 0xFF] ^ te2[(s0 >> 8) & 0xFF] ^ te3[s1 & 0xFF] ^ rk[k + 2]
        t3 = te0[s3 >> 24] ^ te1[(s0 >> 16) & 0xFF] ^ te2[(s1 >> 8) & 0xFF] ^ te3[s2 & 0xFF] ^ rk[k + 3]
        s0, s1, s2, s3 = t0, t1, t2, t3
        k += 4
    sb = SBOX
    return _BLOCK.pack(
        ((sb[s0 >> 24] << 24) | (sb[(s1 >> 16) & 0xFF] << 16) | (sb[(s2 >> 8) & 0xFF] << 8) | sb[s3 & 0xFF]) ^ rk[k],
        ((sb[s1 >> 24] << 24) | (sb[(s2 >> 16) & 0xFF] << 16) | (sb[(s3 >> 8) & 0xFF] << 8) | sb[s0 & 0xFF]) ^ rk[k + 1],
        ((sb[s2 >> 24] << 24) | (sb[(s3 >> 16) & 0xFF] << 16) | (sb[(s0 >> 8) & 0xFF] << 8) | sb[s1 & 0xFF]) ^ rk[k + 2],
        ((sb[s3 >> 24] << 24) | (sb[(s0 >> 16) & 0xFF] << 16) | (sb[(s1 >> 8) & 0xFF] << 8) | sb[s2 & 0xFF]) ^ rk[k + 3],
    )


def aes_decrypt_block(ct: bytes, sched: KeySchedule) -> bytes:
    _check_block(ct)
    rk = sched.dec_words
    rounds = sched.ksize.rounds
    s0, s1, s2, s3 = _BLOCK.unpack(ct)
    s0 ^= rk[0]
    s1 ^= rk[1]
    s2 ^= rk[2]
    s3 ^= rk[3]
    td0, td1, td2, td3 = _TD0, _TD1, _TD2, _TD3
    k = 4
    for _ in range(rounds - 1):
        t0 = td0[s0 >> 24] ^ td1[(s3 >> 16) & 0xFF] ^ td2[(s2 >> 8) & 0xFF] ^ td3[s1 & 0xFF] ^ rk[k]
        t1 = td0[s1 >> 24] ^ td1[(s0 >> 16) & 0xFF] ^ td2[(s3 >> 8) & 0xFF] ^ td3[s2 & 0xFF] ^ rk[k + 1]
        t2 = td0[s2 >> 24] ^ td1[(s1 >> 16) & 0xFF] ^ td2[(s0 >> 8) & 0xFF] ^ td3[s3 & 0xFF] ^ rk[k + 2]
        t3 = td0[s3 >> 24] ^ td1[(s2 >> 16) & 0xFF] ^ td2[(s1 >> 8) & 0xFF] ^ td3[s0 & 0xFF] ^ rk[k + 3]
        s0, s1, s2, s3 = t0, t1, t2, t3
        k += 4
    ib = INV_SBOX
    return _BLOCK.pack(
        ((ib[s0 >> 24] << 24) | (ib[(s3 >> 16) & 0xFF] << 16) | (ib[(s2 >> 8) & 0xFF] << 8) | ib[s1 & 0xFF]) ^ rk[k],
        ((ib[s1 >> 24] << 24) | (ib[(s0 >> 16) & 0xFF] << 16) | (ib[(s3 >> 8) & 0xFF] << 8) | ib[s2 & 0xFF]) ^ rk[k + 1],
        ((ib[s2 >> 24] << 24) | (ib[(s1 >> 16) & 0xFF] << 16) | (ib[(s0 >> 8) & 0xFF] << 8) | ib[s3 & 0xFF]) ^ rk[k + 2],
        ((ib[s3 >> 24] << 24) | (ib[(s2 >> 16) & 0xFF] << 16) | (ib[(s1 >> 8) & 0xFF] << 8) | ib[s0 & 0xFF]) ^ rk[k + 3],
    )


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise AESError(f"cipher mode {mode!r} is not available; supported: {', '.join(MODES)}")


def ecb_encrypt(data: bytes, sched: KeySchedule, mode: str = "ECB") -> bytes:
    """Encrypt whole blocks independently.  ``data`` must be a multiple of 16 bytes."""
    _check_mode(mode)
    if len(data) % 16:
        raise AESError("ECB input must be a whole number of 16-byte blocks")
    return b"".join(aes_encrypt_block(data[i:i + 16], sched) for i in range(0, len(data), 16))


def ecb_decrypt(data: bytes, sched: KeySchedule, mode: str = "ECB") -> bytes:
    _check_mode(mode)
    if len(data) % 16:
        raise AESError("ECB input must be a whole number of 16-byte blocks")
    return b"".join(aes_decrypt_block(data[i:i + 16], sched) for i in range(0, len(data), 16))
