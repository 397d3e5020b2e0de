"""Entropy sources behind one small interface so tests can seed them."""

from __future__ import annotations

import random
import secrets
import threading

__all__ = ["EntropyError", "Entropy", "SystemEntropy", "SeededEntropy"]


class EntropyError(RuntimeError):
    """The platform could not supply random bytes."""


class Entropy:
    """Base class.  Subclasses implement :meth:`_bytes` and :meth:`_below`."""

    def __init__(self):
        self._lock = threading.Lock()

    def randbytes(self, n: int) -> bytes:
        with self._lock:
            try:
                return self._bytes(n)
            except (OSError, NotImplementedError) as exc:
                raise EntropyError(f"entropy source failed: {exc}") from exc

    def randbelow(self, n: int) -> int:
        with self._lock:
            try:
                return self._below(n)
            except (OSError, NotImplementedError) as exc:
                raise EntropyError(f"entropy source failed: {exc}") from exc

    def _bytes(self, n: int) -> bytes:
        raise NotImplementedError

    def _below(self, n: int) -> int:
        raise NotImplementedError


class SystemEntropy(Entropy):
    """The operating system CSPRNG."""

    def _bytes(self, n: int) -> bytes:
        return secrets.token_bytes(n)

    def _below(self, n: int) -> int:
        return secrets.randbelow(n)


class SeededEntropy(Entropy):
    """Deterministic stream for simulations and tests.  Not for real keys."""

    def __init__(self, seed: int = 0):
        super().__init__()
        self._rng = random.Random(seed)

    def _bytes(self, n: int) -> bytes:
        return self._rng.randbytes(n)

    def _below(self, n: int) -> int:
        return self._rng.randrange(n)
