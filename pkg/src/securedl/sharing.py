"""n-out-of-n additive secret sharing over Z_{2^64}.

Two views of the same thing are provided:

* :class:`ShareVector` is what a single party holds.
* :class:`Shared` stacks every party's share of one secret tensor along a
  leading party axis. The simulator works with this form because every
  local operation is then a single numpy call, but each row is still only
  ever combined with other rows through :meth:`Transport.open`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, ProtocolError
from .ring import DTYPE, as_ring


def as_shape(shape) -> tuple:
    return (int(shape),) if isinstance(shape, (int, np.integer)) else tuple(shape)


def uniform_ring(rng: np.random.Generator, shape) -> np.ndarray:
    """Uniform elements of Z_{2^64}."""
    shape = as_shape(shape)
    size = int(np.prod(shape, dtype=np.int64))
    return np.asarray(rng.bit_generator.random_raw(size), dtype=DTYPE).reshape(shape)


@dataclass
class ShareVector:
    party_id: int
    elems: np.ndarray

    def __post_init__(self):
        self.elems = as_ring(self.elems)

    def __len__(self):
        return self.elems.shape[0] if self.elems.ndim else 1

    @property
    def d(self) -> int:
        return len(self)


def _check_pair(a: ShareVector, b: ShareVector):
    if a.party_id != b.party_id:
        raise ProtocolError(f"share of party {a.party_id} combined with share of party {b.party_id}")
    if a.elems.shape != b.elems.shape:
        raise ProtocolError(f"share length mismatch: {a.elems.shape} vs {b.elems.shape}")


def share(secret, n: int, rng: np.random.Generator) -> list[ShareVector]:
    """Split ``secret`` (ring elements) into ``n`` additive shares."""
    stacked = share_tensor(secret, n, rng)
    return stacked.parties()


def reconstruct(shares: Sequence[ShareVector]) -> np.ndarray:
    if not shares:
        raise ProtocolError("no shares to reconstruct")
    ids = sorted(s.party_id for s in shares)
    if ids != list(range(len(shares))):
        raise ProtocolError(f"incomplete or duplicated share set: parties {ids}")
    shape = shares[0].elems.shape
    out = np.zeros(shape, dtype=DTYPE)
    for s in shares:
        if s.elems.shape != shape:
            raise ProtocolError(f"share length mismatch: {s.elems.shape} vs {shape}")
        out += s.elems
    return out


def add_shared(a: ShareVector, b: ShareVector) -> ShareVector:
    _check_pair(a, b)
    return ShareVector(a.party_id, a.elems + b.elems)


def sub_shared(a: ShareVector, b: ShareVector) -> ShareVector:
    _check_pair(a, b)
    return ShareVector(a.party_id, a.elems - b.elems)


def add_public(a: ShareVector, c) -> ShareVector:
    """Only party 0 adds the public constant; the others keep their share."""
    if a.party_id != 0:
        return ShareVector(a.party_id, a.elems.copy())
    return ShareVector(0, a.elems + as_ring(c))


def mul_public(a: ShareVector, c) -> ShareVector:
    return ShareVector(a.party_id, a.elems * as_ring(c))


class Shared:
    """Every party's share of one secret tensor; axis 0 is the party index."""

    __slots__ = ("shares",)

    def __init__(self, shares: np.ndarray):
        if shares.dtype != DTYPE:
            raise TypeError("shares must be uint64")
        if shares.ndim < 1 or shares.shape[0] < 2:
            raise ProtocolError("a sharing needs at least two parties")
        self.shares = shares

    @classmethod
    def public(cls, value, n: int) -> "Shared":
        """Trivial sharing of a public value: party 0 holds it, everyone else 0."""
        value = as_ring(value)
        out = np.zeros((n,) + value.shape, dtype=DTYPE)
        out[0] = value
        return cls(out)

    @classmethod
    def zeros(cls, n: int, shape=()) -> "Shared":
        return cls(np.zeros((n,) + as_shape(shape), dtype=DTYPE))

    @classmethod
    def from_parties(cls, parties: Sequence[ShareVector]) -> "Shared":
        ordered = sorted(parties, key=lambda s: s.party_id)
        if [s.party_id for s in ordered] != list(range(len(ordered))):
            raise ProtocolError("incomplete or duplicated share set")
        shapes = {s.elems.shape for s in ordered}
        if len(shapes) != 1:
            raise ProtocolError(f"share length mismatch: {sorted(shapes)}")
        return cls(np.stack([s.elems for s in ordered]))

    @staticmethod
    def concat(items: Sequence["Shared"], axis: int = 0) -> "Shared":
        return Shared(np.concatenate([s.shares for s in items], axis=axis + 1))

    @staticmethod
    def stack(items: Sequence["Shared"], axis: int = 0) -> "Shared":
        return Shared(np.stack([s.shares for s in items], axis=axis + 1))

    @property
    def n_parties(self) -> int:
        return self.shares.shape[0]

    @property
    def shape(self) -> tuple:
        return self.shares.shape[1:]

    def parties(self) -> list[ShareVector]:
        return [ShareVector(p, self.shares[p].copy()) for p in range(self.n_parties)]

    def reveal(self) -> np.ndarray:
        """Reconstruct in the clear. Tests and oracles only; protocols open via a Transport."""
        return self.shares.sum(axis=0, dtype=DTYPE)

    def _coerce(self, other) -> np.ndarray:
        if not isinstance(other, Shared):
            raise TypeError("use add_public/mul_public for public operands")
        if other.n_parties != self.n_parties:
            raise ProtocolError("operands are shared among different party sets")
        return other.shares

    def __add__(self, other: "Shared") -> "Shared":
        return Shared(self.shares + self._coerce(other))

    def __sub__(self, other: "Shared") -> "Shared":
        return Shared(self.shares - self._coerce(other))

    def __neg__(self) -> "Shared":
        return Shared(DTYPE(0) - self.shares)

    def __getitem__(self, idx) -> "Shared":
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Shared(self.shares[(slice(None),) + idx])

    def add_public(self, c) -> "Shared":
        out = self.shares.copy()
        out[0] = out[0] + as_ring(c)
        return Shared(out)

    def mul_public(self, c) -> "Shared":
        return Shared(self.shares * as_ring(c))

    def sum(self, axis: int = -1) -> "Shared":
        axis = axis if axis < 0 else axis + 1
        return Shared(self.shares.sum(axis=axis, dtype=DTYPE))

    def reshape(self, *shape) -> "Shared":
        return Shared(self.shares.reshape((self.n_parties,) + tuple(shape)))

    def broadcast_to(self, shape) -> "Shared":
        shape = tuple(shape)
        lead = (1,) * (len(shape) - len(self.shape))
        src = self.shares.reshape((self.n_parties,) + lead + self.shape)
        return Shared(np.ascontiguousarray(np.broadcast_to(src, (self.n_parties,) + shape)))

    def expand(self, axis: int = -1) -> "Shared":
        axis = axis if axis < 0 else axis + 1
        return Shared(np.expand_dims(self.shares, axis))

    def copy(self) -> "Shared":
        return Shared(self.shares.copy())

    def __repr__(self):
        return f"Shared(parties={self.n_parties}, shape={self.shape})"


def share_tensor(secret, n: int, rng: np.random.Generator) -> Shared:
    """Stacked sharing: rows 0..n-2 uniform, last row closes the sum to ``secret``."""
    if n < 2:
        raise ConfigError(f"additive sharing needs n >= 2 parties, got {n}")
    secret = as_ring(secret)
    out = np.empty((n,) + secret.shape, dtype=DTYPE)
    out[: n - 1] = uniform_ring(rng, (n - 1,) + secret.shape)
    out[n - 1] = secret - out[: n - 1].sum(axis=0, dtype=DTYPE)
    return Shared(out)
