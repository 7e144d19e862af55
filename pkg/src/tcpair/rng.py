"""SplitMix64 generator used for key material and sub-seed derivation.

Constants are the published SplitMix64 ones: golden-ratio increment
0x9E3779B97F4A7C15, then two multiply-xorshift rounds.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX_MUL_1 = 0xBF58476D1CE4E5B9
MIX_MUL_2 = 0x94D049BB133111EB


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * MIX_MUL_1) & MASK64
        z = ((z ^ (z >> 27)) * MIX_MUL_2) & MASK64
        return z ^ (z >> 31)

    def randbits(self, k: int) -> int:
        out = 0
        produced = 0
        while produced < k:
            out = (out << 64) | self.next_u64()
            produced += 64
        return out >> (produced - k)

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection; no modulo bias."""
        if n <= 0:
            raise ValueError("n must be positive")
        k = max(1, (n - 1).bit_length())
        while True:
            x = self.randbits(k)
            if x < n:
                return x

    def derive(self) -> int:
        """Draw a 64-bit sub-seed for an independent stream."""
        return self.next_u64()
