"""Shamir (k, n) threshold sharing over GF(2^8), byte-wise.

Each byte of the secret gets its own random polynomial of degree k-1; share
``i`` holds the evaluations of all those polynomials at ``x = i``.  Shares are
therefore exactly as long as the secret and no prime modulus is involved.

Field arithmetic uses the AES reduction polynomial x^8 + x^4 + x^3 + x + 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .entropy import Randomness, draw, system_randomness
from .errors import (
    DuplicateIndexError,
    InsufficientSharesError,
    ParameterError,
    PayloadLengthMismatchError,
)

REDUCTION_POLY = 0x11B
MAX_SHARES = 255


def _build_tables() -> tuple[list[int], list[int]]:
    exp = [0] * 512
    log = [0] * 256
    x = 1
    for i in range(255):
        exp[i] = x
        log[x] = i
        # multiply by the generator 0x03: x*2 xor x
        x2 = x << 1
        if x2 & 0x100:
            x2 ^= REDUCTION_POLY
        x = x2 ^ x
    for i in range(255, 512):
        exp[i] = exp[i - 255]
    return exp, log


_EXP, _LOG = _build_tables()


def field_add(a: int, b: int) -> int:
    return a ^ b


def field_mul(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return _EXP[_LOG[a] + _LOG[b]]


def field_inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("0 has no inverse in GF(2^8)")
    return _EXP[255 - _LOG[a]]


def field_div(a: int, b: int) -> int:
    if b == 0:
        raise ZeroDivisionError("division by zero in GF(2^8)")
    if a == 0:
        return 0
    return _EXP[_LOG[a] + 255 - _LOG[b]]


@dataclass(frozen=True)
class Share:
    """One fragment: evaluation point ``index`` and the per-byte evaluations."""

    index: int
    payload: bytes

    def __post_init__(self):
        if not 1 <= self.index <= MAX_SHARES:
            raise ParameterError(f"share index must be in [1, 255], got {self.index}")
        object.__setattr__(self, "payload", bytes(self.payload))

    def to_bytes(self) -> bytes:
        return bytes([self.index]) + self.payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "Share":
        if len(data) < 2:
            raise ParameterError("encoded share needs an index byte and a payload")
        return cls(data[0], data[1:])

    def __repr__(self) -> str:
        return f"Share(index={self.index}, payload=<{len(self.payload)} bytes>)"


def _eval(coeffs: Sequence[int], x: int) -> int:
    # Horner, highest degree first
    acc = 0
    for c in reversed(coeffs):
        acc = field_mul(acc, x) ^ c
    return acc


def split(secret: bytes, k: int, n: int, randomness: Randomness = system_randomness) -> list[Share]:
    """Split ``secret`` into ``n`` shares, any ``k`` of which reconstruct it.

    Shares are returned with indices 1..n in order.
    """
    if not secret:
        raise ParameterError("secret must be nonempty")
    if not 1 <= k <= n <= MAX_SHARES:
        raise ParameterError(f"need 1 <= k <= n <= {MAX_SHARES}, got k={k}, n={n}")
    size = len(secret)
    coeff_bytes = draw(randomness, size * (k - 1))
    payloads = [bytearray(size) for _ in range(n)]
    for pos, s in enumerate(secret):
        coeffs = [s, *coeff_bytes[pos * (k - 1):(pos + 1) * (k - 1)]]
        for x in range(1, n + 1):
            payloads[x - 1][pos] = _eval(coeffs, x)
    return [Share(x, bytes(p)) for x, p in zip(range(1, n + 1), payloads)]


def lagrange_weights_at_zero(xs: Sequence[int]) -> list[int]:
    """Basis values l_i(0) for the distinct nonzero points ``xs``."""
    weights = []
    for i, xi in enumerate(xs):
        num, den = 1, 1
        for j, xj in enumerate(xs):
            if i != j:
                num = field_mul(num, xj)
                den = field_mul(den, xi ^ xj)
        weights.append(field_div(num, den))
    return weights


def combine(shares: Iterable[Share], k: int) -> bytes:
    """Reconstruct the secret from at least ``k`` shares.

    Exactly the first ``k`` shares (in the order given) are interpolated.
    """
    shares = list(shares)
    if k < 1:
        raise ParameterError("k must be at least 1")
    seen: set[int] = set()
    for s in shares:
        if s.index in seen:
            raise DuplicateIndexError(f"share index {s.index} appears more than once")
        seen.add(s.index)
    if len(shares) < k:
        raise InsufficientSharesError(f"need {k} shares, got {len(shares)}")
    lengths = {len(s.payload) for s in shares}
    if len(lengths) != 1:
        raise PayloadLengthMismatchError(f"share payload lengths differ: {sorted(lengths)}")

    used = shares[:k]
    weights = lagrange_weights_at_zero([s.index for s in used])
    out = bytearray(len(used[0].payload))
    for w, s in zip(weights, used):
        if w == 0:
            continue
        for pos, y in enumerate(s.payload):
            out[pos] ^= field_mul(w, y)
    return bytes(out)
