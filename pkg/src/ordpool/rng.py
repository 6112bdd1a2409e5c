"""Counter-based random stream.

Every draw is ``splitmix64(seed + (position + 1) * GOLDEN)``, i.e. the
output of the SplitMix64 generator after ``position + 1`` steps from
``seed``.  Because draw ``i`` depends only on ``(seed, i)`` the stream can
be reproduced bit-for-bit in any language with 64-bit wrapping integers.

Uniform reals use the top 53 bits: ``(z >> 11) * 2**-53``.
"""

from __future__ import annotations

import numpy as np

from .errors import RangeError

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def splitmix64(seed: int, start: int, count: int) -> np.ndarray:
    """Raw 64-bit outputs ``start .. start+count-1`` of SplitMix64(seed)."""
    steps = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix(np.uint64(seed & _MASK64) + steps * GOLDEN)


class RngStream:
    """Seeded SplitMix64 stream with an explicit draw counter."""

    algorithm = "splitmix64"

    def __init__(self, seed: int, position: int = 0):
        self.seed = int(seed) & _MASK64
        self.position = int(position)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, position={self.position})"

    def raw(self, count: int) -> np.ndarray:
        if count < 0:
            raise RangeError(f"draw count must be >= 0, got {count}")
        out = splitmix64(self.seed, self.position, count)
        self.position += count
        return out

    def uniform(self, count: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        """``count`` float64 draws in ``[lo, hi)``."""
        if not lo < hi:
            raise RangeError(f"need lo < hi, got lo={lo}, hi={hi}")
        u = (self.raw(count) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        out = lo + (hi - lo) * u
        # rounding of lo + (hi - lo) * u can land on hi
        return np.where(out < hi, out, np.nextafter(hi, lo))

    def permutation(self, n: int) -> np.ndarray:
        """A permutation of ``0..n-1``: indices sorted by fresh 64-bit keys."""
        if n < 1:
            raise RangeError(f"permutation size must be >= 1, got {n}")
        return np.argsort(self.raw(n), kind="stable")

    def child(self, tag: int) -> "RngStream":
        """Independent stream derived from this seed and an integer tag."""
        with np.errstate(over="ignore"):
            key = splitmix64(self.seed ^ int(splitmix64(tag, 0, 1)[0]), 0, 1)[0]
        return RngStream(int(key))


def rng_uniform(r: RngStream, count: int, lo: float, hi: float) -> list[float]:
    return r.uniform(count, lo, hi).tolist()


def shuffled_indices(r: RngStream, n: int) -> np.ndarray:
    return r.permutation(n)
