"""Injectable randomness sources.

Every operation that needs randomness takes a ``randomness`` callable with the
signature ``randomness(n: int) -> bytes``.  Production code uses
:func:`system_randomness`; tests and fixtures pass a :class:`SeededRandomness`.
"""

from __future__ import annotations

import hashlib
import secrets
import threading
from typing import Callable

from .errors import EntropyError, ParameterError

Randomness = Callable[[int], bytes]


def system_randomness(n: int) -> bytes:
    return secrets.token_bytes(n)


class SeededRandomness:
    """Deterministic SHA-256 counter-mode byte stream.

    Reproducible for a given seed, which makes it suitable for golden fixtures
    and tests.  Never use it for real keys.
    """

    def __init__(self, seed: int | str | bytes):
        if isinstance(seed, int):
            seed = str(seed)
        if isinstance(seed, str):
            seed = seed.encode("utf-8")
        self._key = hashlib.sha256(b"qrbackup/seeded-randomness\x00" + seed).digest()
        self._counter = 0
        self._buffer = b""
        self._lock = threading.Lock()

    def __call__(self, n: int) -> bytes:
        if n < 0:
            raise ParameterError("negative byte count")
        with self._lock:
            while len(self._buffer) < n:
                block = hashlib.sha256(self._key + self._counter.to_bytes(8, "big")).digest()
                self._counter += 1
                self._buffer += block
            out, self._buffer = self._buffer[:n], self._buffer[n:]
        return out


def draw(randomness: Randomness, n: int) -> bytes:
    """Call ``randomness`` and check that it delivered exactly ``n`` bytes."""
    try:
        out = randomness(n)
    except EntropyError:
        raise
    except Exception as exc:  # noqa: BLE001 - any failure of the source is an entropy failure
        raise EntropyError(f"randomness source failed: {exc}") from exc
    if not isinstance(out, (bytes, bytearray)) or len(out) != n:
        raise EntropyError(f"randomness source returned {len(out) if out is not None else 0} bytes, wanted {n}")
    return bytes(out)


def random_below(randomness: Randomness, bound: int) -> int:
    """Uniform integer in ``[0, bound)`` by rejection sampling."""
    if bound <= 0:
        raise ParameterError("bound must be positive")
    if bound == 1:
        return 0
    limit = (1 << 32) - ((1 << 32) % bound)
    while True:
        v = int.from_bytes(draw(randomness, 4), "big")
        if v < limit:
            return v % bound


def shuffle(items: list, randomness: Randomness) -> None:
    """In-place Fisher-Yates shuffle driven by ``randomness``."""
    for i in range(len(items) - 1, 0, -1):
        j = random_below(randomness, i + 1)
        items[i], items[j] = items[j], items[i]
