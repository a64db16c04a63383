"""SplitMix64, the fixture generator.

Reproducible across languages: 64-bit state, output ``k`` (k = 0, 1, ...) is
``mix(seed + (k + 1) * 0x9E3779B97F4A7C15)`` with::

    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z =  z ^ (z >> 31)

all arithmetic modulo 2^64.  Uniform doubles are ``(out >> 11) * 2^-53``.
"""

from __future__ import annotations

import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    def __init__(self, seed: int):
        self.state = np.uint64(seed % 2**64)

    def next_u64(self, size: int) -> np.ndarray:
        with np.errstate(over="ignore"):
            k = np.arange(1, size + 1, dtype=np.uint64)
            z = self.state + k * GAMMA
            self.state = self.state + np.uint64(size) * GAMMA
            return _mix(z)

    def uniform(self, size: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        u = (self.next_u64(size) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return low + (high - low) * u

    def normal(self, size: int) -> np.ndarray:
        """Box-Muller on consecutive uniform pairs."""
        m = (size + 1) // 2
        u1 = 1.0 - self.uniform(m)  # (0, 1]
        u2 = self.uniform(m)
        rad = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([rad * np.cos(2 * np.pi * u2), rad * np.sin(2 * np.pi * u2)])
        return z[:size]

    def integers(self, size: int, high: int) -> np.ndarray:
        return np.floor(self.uniform(size) * high).astype(np.int64)
