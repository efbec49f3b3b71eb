"""Self-contained deterministic random numbers for the simulator.

SplitMix64 (Steele, Lea & Flood 2014) with the usual constants. The
generator is a counter scrambled by a fixed mixing function, so a batch
of n draws can be produced with vectorized uint64 arithmetic while
staying bit-identical to n scalar draws. Output therefore depends only
on the seed, never on library versions or platform RNG state.
"""

from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix(z: int) -> int:
    z = (z ^ (z >> 30)) * _MIX1 & _MASK
    z = (z ^ (z >> 27)) * _MIX2 & _MASK
    return z ^ (z >> 31)


class SplitMix64:
    """Deterministic 64-bit generator with scalar and batch interfaces."""

    def __init__(self, seed: int) -> None:
        self._state = int(seed) & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        return _mix(self._state)

    def uniform(self) -> float:
        """One double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniforms(self, n: int) -> np.ndarray:
        """n uniforms, identical to n scalar uniform() calls."""
        if n < 0:
            raise ValueError("n must be non-negative")
        if n == 0:
            return np.empty(0, dtype=float)
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self._state) + steps * np.uint64(_GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
            z = z ^ (z >> np.uint64(31))
        self._state = (self._state + n * _GAMMA) & _MASK
        return (z >> np.uint64(11)).astype(float) * 2.0**-53

    def normals(self, n: int) -> np.ndarray:
        """n standard normals via Box-Muller.

        Draws ceil(n/2) uniform pairs; an odd n consumes the same number
        of draws as n+1 and discards the last value.
        """
        if n < 0:
            raise ValueError("n must be non-negative")
        if n == 0:
            return np.empty(0, dtype=float)
        pairs = (n + 1) // 2
        u = self.uniforms(2 * pairs)
        u1 = 1.0 - u[0::2]  # (0, 1]: keeps log finite
        u2 = u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * math.pi * u2
        out = np.empty(2 * pairs, dtype=float)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]

    def normal(self) -> float:
        return float(self.normals(1)[0])

    def lognormal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        return math.exp(mu + sigma * self.normal())

    def spawn(self) -> "SplitMix64":
        """Child generator seeded from this one's stream."""
        return SplitMix64(self.next_u64())
