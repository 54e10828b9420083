"""PCG32: a tiny deterministic RNG shared by all samplers.

The compiled and pure sampling kernels advance the same generator, one draw
at a time in the same order, so training runs are bit-identical across
backends. State is two 64-bit words (state, stream increment).
"""

from __future__ import annotations

_M64 = (1 << 64) - 1
_MULT = 6364136223846793005


class Pcg32:
    __slots__ = ("state", "inc")

    def __init__(self, seed: int, stream: int = 54):
        self.state = 0
        self.inc = ((stream << 1) | 1) & _M64
        self.next32()
        self.state = (self.state + (seed & _M64)) & _M64
        self.next32()

    def next32(self) -> int:
        old = self.state
        self.state = (old * _MULT + self.inc) & _M64
        xorshifted = (((old >> 18) ^ old) >> 27) & 0xFFFFFFFF
        rot = old >> 59
        return ((xorshifted >> rot)
                | (xorshifted << ((32 - rot) & 31))) & 0xFFFFFFFF

    def below(self, n: int) -> int:
        """Uniform integer in [0, n). Plain modulo; our n are tiny."""

        if n <= 0:
            raise ValueError("below() needs n >= 1")
        return self.next32() % n

    def uniform(self) -> float:
        """Uniform double in [0, 1) with 32 bits of resolution."""

        return self.next32() * (1.0 / 4294967296.0)

    def uniform_symmetric(self) -> float:
        return self.uniform() * 2.0 - 1.0
