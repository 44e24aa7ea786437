"""Deterministic derivation of child seeds from a base seed.

``derive_seed(base, 0)`` is the identity, so a single run can be replayed
directly from its recorded seed; higher indices are decorrelated with a
splitmix64 mix of (base, index).
"""

from __future__ import annotations

__all__ = ["splitmix64", "derive_seed"]

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(base: int, index: int) -> int:
    """Child seed for stream ``index``; index 0 returns ``base`` unchanged."""
    if index < 0:
        raise ValueError("index must be >= 0")
    if index == 0:
        return int(base)
    return splitmix64((int(base) + index * _GOLDEN) & _MASK64)
