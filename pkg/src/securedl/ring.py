"""Arithmetic in Z_{2^64} and the two's-complement fixed-point embedding.

Ring elements are held in ``numpy.uint64`` arrays; numpy's unsigned
integer arithmetic wraps modulo 2^64, which is exactly the ring we need.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EncodingRangeError

RING_BITS = 64
MASK = (1 << RING_BITS) - 1
DTYPE = np.uint64


def as_ring(values) -> np.ndarray:
    """Coerce Python ints (any sign or size) or integer arrays to ring elements."""
    if isinstance(values, np.ndarray) and values.dtype == DTYPE:
        return values
    if isinstance(values, (int, np.integer)):
        return np.array(int(values) & MASK, dtype=DTYPE)
    arr = values if isinstance(values, np.ndarray) else np.array(values, dtype=object)
    if arr.dtype == object:
        return np.vectorize(lambda v: int(v) & MASK, otypes=[DTYPE])(arr)
    if arr.dtype.kind == "i":
        return arr.astype(np.int64).view(DTYPE)
    if arr.dtype.kind == "u":
        return arr.astype(DTYPE)
    raise TypeError(f"cannot interpret dtype {arr.dtype} as ring elements")


def ring_add(a, b) -> np.ndarray:
    return np.add(as_ring(a), as_ring(b), dtype=DTYPE)


def ring_sub(a, b) -> np.ndarray:
    return np.subtract(as_ring(a), as_ring(b), dtype=DTYPE)


def ring_mul(a, b) -> np.ndarray:
    return np.multiply(as_ring(a), as_ring(b), dtype=DTYPE)


def ring_neg(a) -> np.ndarray:
    return np.subtract(DTYPE(0), as_ring(a), dtype=DTYPE)


def to_signed(a) -> np.ndarray:
    """Signed (two's-complement) interpretation of ring elements as int64."""
    return as_ring(a).view(np.int64)


def shift_right_signed(a, bits: int) -> np.ndarray:
    """Arithmetic right shift of the signed interpretation, back into the ring."""
    return np.right_shift(to_signed(a), bits).view(DTYPE)


@dataclass(frozen=True)
class FixedPointCodec:
    """Maps reals to ring elements as ``round(x * 2^frac_bits)``.

    ``value_bits`` bounds the legal value domain: ``|x| < 2^(value_bits - frac_bits - 1)``.
    Products of two encodings carry scale ``2^(2*frac_bits)`` and must be truncated.
    """

    frac_bits: int = 16
    value_bits: int = 32

    def __post_init__(self):
        if not 0 < self.frac_bits < self.value_bits <= 48:
            raise ValueError(f"unsupported fixed-point layout f={self.frac_bits}, k={self.value_bits}")

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits

    @property
    def bound(self) -> float:
        """Exclusive bound on the magnitude of encodable reals."""
        return float(1 << (self.value_bits - self.frac_bits - 1))

    @property
    def ulp(self) -> float:
        return 1.0 / self.scale

    def encode(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if not np.all(np.isfinite(x)):
            raise EncodingRangeError("cannot encode non-finite values")
        if x.size and np.max(np.abs(x)) >= self.bound:
            raise EncodingRangeError(
                f"value {np.max(np.abs(x)):.6g} outside fixed-point range (|x| < {self.bound:g})"
            )
        # round half away from zero
        scaled = np.sign(x) * np.floor(np.abs(x) * self.scale + 0.5)
        return scaled.astype(np.int64).view(DTYPE)

    def decode(self, e) -> np.ndarray | float:
        out = to_signed(e).astype(np.float64) / self.scale
        return float(out) if out.ndim == 0 else out

    def decode_scaled(self, e, frac_bits: int):
        """Decode an element carrying a non-default scale (e.g. 2f after a product)."""
        out = to_signed(e).astype(np.float64) / float(1 << frac_bits)
        return float(out) if out.ndim == 0 else out


DEFAULT_CODEC = FixedPointCodec()


def encode_fixed(x, codec: FixedPointCodec = DEFAULT_CODEC) -> np.ndarray:
    return codec.encode(x)


def decode_fixed(e, codec: FixedPointCodec = DEFAULT_CODEC):
    return codec.decode(e)
