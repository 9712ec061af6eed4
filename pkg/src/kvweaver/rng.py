"""Deterministic pseudo-randomness for workloads and weights.

Everything random in this package flows through SplitMix64 so that arrival
streams, model weights and synthetic budgets are bit-reproducible across
runs and across implementations of the same algorithm.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """Vigna's splitmix64 generator.

    64-bit state, one 64-bit output per step. Chosen because the whole
    algorithm fits in a screenful and has published reference outputs,
    which keeps every downstream artifact checkable by hand.
    """

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        # 53 high bits -> [0, 1), the standard double conversion
        return (self.next_u64() >> 11) * 2.0**-53

    def below(self, n: int) -> int:
        """Integer in [0, n). Modulo reduction; exact when n divides 2^64."""
        if n <= 0:
            raise ValueError(f"below() needs a positive bound, got {n}")
        return self.next_u64() % n

    def poisson(self, lam: float) -> int:
        """Knuth's product method. Exact, intended for small lam."""
        if lam < 0:
            raise ValueError(f"poisson() rate must be nonnegative, got {lam}")
        if lam == 0:
            return 0
        threshold = math.exp(-lam)
        count = 0
        prod = 1.0
        while True:
            prod *= self.uniform()
            if prod <= threshold:
                return count
            count += 1
