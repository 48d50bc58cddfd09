"""Portable counter-based random numbers.

The i-th raw 64-bit output of stream ``(seed, stream)`` is::

    key = mix(seed ^ mix(stream + GAMMA))
    out_i = mix(key + (i + 1) * GAMMA)          (mod 2**64)

where ``mix`` is the SplitMix64 finaliser. Any output can be computed
from its coordinates alone, so parallel trials draw identical numbers
regardless of scheduling.

Uniforms on [0, 1) are ``(out >> 11) * 2**-53``. Normals use Box-Muller on
consecutive pairs ``(u1, u2)`` with ``u1`` shifted to (0, 1]:
``r = sqrt(-2 log u1)`` gives ``r cos(2 pi u2)`` then ``r sin(2 pi u2)``;
an odd request discards the final sine.
"""

from __future__ import annotations

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix_int(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def stream_key(seed: int, stream: int = 0) -> int:
    if seed < 0 or stream < 0:
        raise ValueError("seed and stream must be non-negative")
    return _mix_int(seed ^ _mix_int(stream + GAMMA))


class CounterRNG:
    """Sequential reader over one counter-based stream."""

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        self.key = stream_key(self.seed, self.stream)
        self.position = 0

    def raw(self, n: int) -> np.ndarray:
        counters = np.arange(self.position + 1, self.position + n + 1, dtype=np.uint64)
        self.position += n
        return _mix(np.uint64(self.key) + counters * np.uint64(GAMMA))

    def uniform(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        u = (self.raw(n) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
        return low + (high - low) * u

    def normal(self, n: int, mean: float = 0.0, sd: float = 1.0) -> np.ndarray:
        pairs = (n + 1) // 2
        bits = (self.raw(2 * pairs) >> np.uint64(11)).astype(np.float64)
        u1 = (bits[0::2] + 1.0) * 2.0 ** -53
        u2 = bits[1::2] * 2.0 ** -53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        return mean + sd * z[:n]
