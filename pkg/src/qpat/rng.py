"""Deterministic pseudo-random numbers for phantom generation.

Phantom synthesis must replay bit-identically across runs and languages, so
instead of a platform RNG we pin a tiny xorshift64* generator:

state update:   x ^= x >> 12;  x ^= (x << 25) & 2^64-1;  x ^= x >> 27
output:         (x * 0x2545F4914F6CDD1D) mod 2^64
double in [0,1): top 53 bits of the output, divided by 2^53

The raw seed is passed through one round of splitmix64 so that seed 0 (and
other small seeds) still yields a nonzero, well-mixed state.
"""

import numpy as np

_MASK64 = (1 << 64) - 1
_XS_MULT = 0x2545F4914F6CDD1D
_SM_GAMMA = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> int:
    x = (x + _SM_GAMMA) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


class XorShift64Star:
    """xorshift64* generator with splitmix64 seeding."""

    def __init__(self, seed: int):
        state = _splitmix64(int(seed) & _MASK64)
        if state == 0:  # xorshift state must never be zero
            state = _SM_GAMMA
        self._state = state

    def next_u64(self) -> int:
        x = self._state
        x ^= x >> 12
        x ^= (x << 25) & _MASK64
        x ^= x >> 27
        self._state = x
        return (x * _XS_MULT) & _MASK64

    def random(self) -> float:
        """Uniform double in [0, 1) from the top 53 output bits."""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def uniforms(self, n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        return np.array([self.uniform(lo, hi) for _ in range(n)], dtype=np.float64)
