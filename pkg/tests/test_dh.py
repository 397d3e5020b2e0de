import hashlib
import random

import mpmath
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

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
from secfb.crypto.entropy import SeededEntropy


def brute_pow(base: int, exp: int, mod: int) -> int:
    r = 1
    for _ in range(exp):
        r = r * base % mod
    return r


def test_toy_exchange_matches_brute_force():
    a_priv, a_pub = dh_keypair(TOY_GROUP, private=6)
    b_priv, b_pub = dh_keypair(TOY_GROUP, private=15)
    assert (a_pub, b_pub) == (brute_pow(5, 6, 23), brute_pow(5, 15, 23)) == (8, 19)
    assert dh_shared_secret(a_priv, b_pub, TOY_GROUP) == dh_shared_secret(b_priv, a_pub, TOY_GROUP) == 2
    assert brute_pow(19, 6, 23) == 2


def test_toy_exchange_all_private_pairs():
    for a in range(2, 22):
        for b in range(2, 22):
            _, pa = dh_keypair(TOY_GROUP, private=a)
            _, pb = dh_keypair(TOY_GROUP, private=b)
            assert dh_shared_secret(a, pb, TOY_GROUP) == dh_shared_secret(b, pa, TOY_GROUP) == brute_pow(5, a * b, 23)


def test_modp_2048_follows_pi_formula():
    # p = 2^2048 - 2^1984 - 1 + 2^64 * (floor(2^1918 * pi) + 124476)
    with mpmath.workprec(2200):
        frac = int(mpmath.floor(mpmath.ldexp(mpmath.pi, 1918)))
    p = 2**2048 - 2**1984 - 1 + 2**64 * (frac + 124476)
    assert MODP_2048.p == p
    assert MODP_2048.g == 2
    assert MODP_2048.byte_length == 256


def test_modp_2048_is_safe_prime():
    p = MODP_2048.p
    assert sympy.isprime(p)
    assert sympy.isprime((p - 1) // 2)


def test_production_exchanges_agree():
    rng = SeededEntropy(7)
    for _ in range(5):
        a, pa = dh_keypair(MODP_2048, rng)
        b, pb = dh_keypair(MODP_2048, rng)
        assert dh_shared_secret(a, pb, MODP_2048) == dh_shared_secret(b, pa, MODP_2048)


@pytest.mark.parametrize("peer", [0, 1, 23, 24, -5])
def test_rejects_out_of_range_peer(peer):
    with pytest.raises(DhError):
        dh_shared_secret(6, peer, TOY_GROUP)


@pytest.mark.parametrize("private", [0, 1, 22, 100])
def test_rejects_out_of_range_private(private):
    with pytest.raises(DhError):
        dh_keypair(TOY_GROUP, private=private)


def test_keypair_private_range():
    rng = SeededEntropy(1)
    seen = {dh_keypair(TOY_GROUP, rng)[0] for _ in range(2000)}
    assert seen == set(range(2, 22))


@pytest.mark.parametrize("p, g", [(24, 5), (3, 2), (23, 1), (23, 23)])
def test_group_validation(p, g):
    with pytest.raises(ValueError):
        DhGroup(p, g)


def test_kdf_independent_oracle():
    secret, link, epoch = 0x1234ABCD, 7, 3
    want = hashlib.sha256(bytes.fromhex("1234abcd") + bytes([0, 0, 0, 7, 3])).digest()
    for bits in (128, 192, 256):
        key = derive_session_key(secret, bits, link, epoch)
        assert key.key == want[: bits // 8]
        assert key.epoch == epoch


@settings(max_examples=100, deadline=None)
@given(secret=st.integers(1, 2**2048), link=st.integers(0, 2**32 - 1), epoch=st.integers(0, 255))
def test_kdf_separates_links_and_epochs(secret, link, epoch):
    k = derive_session_key(secret, 256, link, epoch).key
    assert k != derive_session_key(secret, 256, link ^ 1, epoch).key
    assert k != derive_session_key(secret, 256, link, (epoch + 1) % 256).key


def test_kdf_epoch_wraps_and_validation():
    assert derive_session_key(5, 128, 1, 256).epoch == 0
    with pytest.raises(DhError):
        derive_session_key(0, 128, 1, 0)
    with pytest.raises(ValueError):
        SessionKey(bytes(16), 300)


def test_seeded_entropy_is_reproducible():
    assert SeededEntropy(3).randbytes(32) == SeededEntropy(3).randbytes(32)
    assert SeededEntropy(3).randbytes(32) != SeededEntropy(4).randbytes(32)
    r = random.Random(0)
    assert all(0 <= SeededEntropy(r.random()).randbelow(10) < 10 for _ in range(50))
