import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from qrbackup.entropy import SeededRandomness
from qrbackup.errors import (
    DuplicateIndexError,
    InsufficientSharesError,
    ParameterError,
    PayloadLengthMismatchError,
)
from qrbackup.gf256 import Share, combine, field_inv, field_mul, split


def peasant_mul(a, b):
    """Bitwise shift-and-add multiply mod 0x11B, independent of the log tables."""
    p = 0
    while b:
        if b & 1:
            p ^= a
        a <<= 1
        if a & 0x100:
            a ^= 0x11B
        b >>= 1
    return p


def test_zero_and_identity():
    assert field_mul(0x00, 0x57) == 0x00
    assert field_mul(0x01, 0xAB) == 0xAB


def test_known_answers_from_aes_field():
    assert field_mul(0x57, 0x83) == 0xC1
    assert field_mul(0x57, 0x13) == 0xFE


def test_mul_matches_peasant_exhaustively():
    for a in range(256):
        for b in range(256):
            assert field_mul(a, b) == peasant_mul(a, b)


def test_inverse_law_all_nonzero():
    for a in range(1, 256):
        assert field_mul(a, field_inv(a)) == 1


def test_zero_has_no_inverse():
    with pytest.raises(ZeroDivisionError):
        field_inv(0)


@given(st.integers(0, 255), st.integers(0, 255), st.integers(0, 255))
def test_field_laws(a, b, c):
    assert field_mul(a, b) == field_mul(b, a)
    assert field_mul(field_mul(a, b), c) == field_mul(a, field_mul(b, c))
    assert field_mul(a, b ^ c) == field_mul(a, b) ^ field_mul(a, c)


def test_k1_shares_equal_secret():
    secret = b"constant polynomial"
    for s in split(secret, 1, 3, SeededRandomness(0)):
        assert s.payload == secret


def test_split_shape():
    shares = split(bytes(range(32)), 2, 3, SeededRandomness(1))
    assert [s.index for s in shares] == [1, 2, 3]
    assert all(len(s.payload) == 32 for s in shares)


def test_every_3_of_5_subset_recovers():
    secret = SeededRandomness("s")(32)
    shares = split(secret, 3, 5, SeededRandomness(2))
    subsets = list(itertools.combinations(shares, 3))
    assert len(subsets) == 10
    for subset in subsets:
        assert combine(subset, 3) == secret


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6).flatmap(lambda n: st.tuples(st.integers(1, n), st.just(n))),
       st.binary(min_size=1, max_size=64), st.integers(0, 2**32))
def test_round_trip_all_subsets(kn, secret, seed):
    k, n = kn
    shares = split(secret, k, n, SeededRandomness(seed))
    for subset in itertools.combinations(shares, k):
        assert combine(subset, k) == secret
        assert combine(list(reversed(subset)), k) == secret


def test_extra_shares_are_fine():
    secret = b"\x00\xff" * 8
    shares = split(secret, 2, 5, SeededRandomness(3))
    assert combine(shares, 2) == secret


def test_hiding_one_share_of_one_byte_secret():
    # k=2: a single share plus any guess at a second share is consistent with
    # every secret, each exactly once.
    for secret in (0x00, 0x5A, 0xFF):
        known = split(bytes([secret]), 2, 3, SeededRandomness(secret))[0]
        recovered = [combine([known, Share(2, bytes([v]))], 2)[0] for v in range(256)]
        assert sorted(recovered) == list(range(256))


def test_split_deterministic_with_seed():
    assert split(b"abc", 2, 4, SeededRandomness(9)) == split(b"abc", 2, 4, SeededRandomness(9))


def test_split_random_coefficients_vary():
    a = split(b"abc", 2, 4, SeededRandomness(9))
    b = split(b"abc", 2, 4, SeededRandomness(10))
    assert a != b


@pytest.mark.parametrize("k,n", [(3, 2), (0, 3), (1, 256)])
def test_split_parameter_errors(k, n):
    with pytest.raises(ParameterError):
        split(b"x", k, n)


def test_split_empty_secret():
    with pytest.raises(ParameterError):
        split(b"", 1, 1)


def test_combine_errors():
    shares = split(b"hello", 3, 4, SeededRandomness(4))
    with pytest.raises(InsufficientSharesError):
        combine(shares[:2], 3)
    with pytest.raises(DuplicateIndexError):
        combine([shares[0], shares[0], shares[1]], 3)
    with pytest.raises(PayloadLengthMismatchError):
        combine([shares[0], shares[1], Share(3, b"toolong")], 3)


def test_share_index_zero_rejected():
    with pytest.raises(ParameterError):
        Share(0, b"x")


def test_combine_is_pure():
    shares = split(bytes(random.Random(5).randbytes(16)), 2, 3, SeededRandomness(5))
    assert combine(shares[1:], 2) == combine(shares[1:], 2)
