"""Deterministic random number generation on a SplitMix64 stream.

All stochastic pieces of the package (synthetic data, weight init, shuffles,
attack starts, smoothing noise) draw from this generator rather than from
platform RNGs, so a given seed yields bit-identical 64-bit output on any
machine.  The stream is counter-based: output ``i`` of a stream seeded with
``s`` is ``mix64(s + (i+1) * GAMMA)`` with all arithmetic mod 2**64, which
vectorizes cleanly over numpy uint64 arrays.
"""

from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1
_INV53 = float(2.0 ** -53)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def _fnv1a(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


def _tag_value(tag) -> int:
    if isinstance(tag, str):
        return _fnv1a(tag.encode("utf-8"))
    return int(tag) & _MASK64


def derive_seed(seed: int, *tags) -> int:
    """Fold integer/string tags into ``seed`` to name an independent substream."""
    s = np.uint64(seed & _MASK64)
    with np.errstate(over="ignore"):
        for tag in tags:
            t = _mix64(np.uint64(_tag_value(tag)) + _GAMMA)
            s = _mix64((s + _GAMMA) ^ t)
    return int(s)


class SplitMix64:
    """Counter-based SplitMix64 stream; ``derive`` spawns independent children."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._count = 0

    def derive(self, *tags) -> "SplitMix64":
        return SplitMix64(derive_seed(self.seed, *tags))

    def next_block(self, n: int) -> np.ndarray:
        """The next ``n`` raw 64-bit outputs, as a uint64 array."""
        idx = np.arange(self._count + 1, self._count + n + 1, dtype=np.uint64)
        self._count += n
        with np.errstate(over="ignore"):
            return _mix64(np.uint64(self.seed) + idx * _GAMMA)

    def next_u64(self) -> int:
        return int(self.next_block(1)[0])

    def uniform(self, shape=()) -> np.ndarray:
        """Uniform float64 in [0, 1) with 53 random mantissa bits."""
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        bits = self.next_block(n) >> np.uint64(11)
        out = bits.astype(np.float64) * _INV53
        return out.reshape(shape) if shape else float(out[0])

    def uniform_open(self, shape=()) -> np.ndarray:
        """Uniform float64 in (0, 1]; safe as a log() argument."""
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        bits = (self.next_block(n) >> np.uint64(11)) + np.uint64(1)
        out = bits.astype(np.float64) * _INV53
        return out.reshape(shape) if shape else float(out[0])

    def normal(self, shape=()) -> np.ndarray:
        """Standard normals via Box-Muller on consecutive uniform pairs."""
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        half = (n + 1) // 2
        u1 = self.uniform_open((half,))
        u2 = self.uniform((half,))
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return z.reshape(shape) if shape else float(z[0])

    def randint(self, lo: int, hi: int, shape=()) -> np.ndarray:
        """Integers in [lo, hi) via floor(uniform * range); range must be < 2**53."""
        if hi <= lo:
            raise ValueError(f"empty range [{lo}, {hi})")
        u = self.uniform(shape if shape else (1,))
        out = (np.floor(u * (hi - lo)) + lo).astype(np.int64)
        return out.reshape(shape) if shape else int(out[0])

    def shuffled_indices(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n), driven by this stream."""
        idx = np.arange(n, dtype=np.int64)
        if n < 2:
            return idx
        draws = self.uniform((n - 1,))
        for i in range(n - 1, 0, -1):
            j = int(draws[n - 1 - i] * (i + 1))
            idx[i], idx[j] = idx[j], idx[i]
        return idx
