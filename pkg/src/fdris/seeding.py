"""Deterministic derivation of per-sample random seeds.

Every stochastic object in the package (channel draws, noise, dropout masks,
dataset shuffles) pulls its randomness from a ``numpy.random.Generator``
seeded through this module, so that any sample can be regenerated in
isolation from the master seed and its grid coordinates alone.
"""

from __future__ import annotations

import struct

MASK64 = (1 << 64) - 1

# SplitMix64 constants (Steele, Lea, Flood 2014).
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def splitmix64(state: int) -> int:
    """One SplitMix64 output for a 64-bit state."""
    z = (state + _GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return (z ^ (z >> 31)) & MASK64


def derive_seed(master_seed: int, *indices: int) -> int:
    """Mix a master seed with integer coordinates into a fresh 64-bit seed.

    The chain is order-sensitive: ``derive_seed(s, 1, 2)`` differs from
    ``derive_seed(s, 2, 1)``.  Negative coordinates are folded into the
    64-bit ring.
    """
    state = splitmix64(master_seed & MASK64)
    for index in indices:
        state = splitmix64(state ^ (index & MASK64))
    return state


def float_bits(value: float) -> int:
    """IEEE-754 bit pattern of a float, for seeding on real-valued coordinates."""
    return struct.unpack("<Q", struct.pack("<d", float(value)))[0]
