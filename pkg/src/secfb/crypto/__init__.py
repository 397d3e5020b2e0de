"""Cryptographic core: AES-ECB with separate key expansion, DH, key derivation."""

from secfb.crypto.aes import (
    AESError,
    KeySchedule,
    KeySize,
    aes_decrypt_block,
    aes_encrypt_block,
    aes_key_expansion,
    ecb_decrypt,
    ecb_encrypt,
)
from secfb.crypto.dh import (
    MODP_2048,
    TOY_GROUP,
    DhError,
    DhGroup,
    SessionKey,
    derive_session_key,
    dh_keypair,
    dh_shared_secret,
)
from secfb.crypto.entropy import Entropy, EntropyError, SeededEntropy, SystemEntropy

__all__ = [
    "AESError",
    "KeySchedule",
    "KeySize",
    "aes_decrypt_block",
    "aes_encrypt_block",
    "aes_key_expansion",
    "ecb_decrypt",
    "ecb_encrypt",
    "MODP_2048",
    "TOY_GROUP",
    "DhError",
    "DhGroup",
    "SessionKey",
    "derive_session_key",
    "dh_keypair",
    "dh_shared_secret",
    "Entropy",
    "EntropyError",
    "SeededEntropy",
    "SystemEntropy",
]
