"""Trusted-dealer preprocessing.

The dealer hands out correlated randomness that the online protocols
consume: Beaver triples for multiplication, truncation pairs for fixed-point
rescaling and edaBit masks (a random value shared both arithmetically and
bit by bit) for comparisons.

:class:`Dealer` produces items on demand from a single seeded stream, which
is what the simulator uses. :func:`generate_tapes` materialises a fixed
budget into per-party :class:`DealerTape` queues that can be written to and
read back from disk.
"""
from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import PreprocessingExhausted, ProtocolError
from .ring import DTYPE
from .sharing import Shared, as_shape, share_tensor, uniform_ring

EDABIT_BITS = 64
# Truncation masks are drawn from [0, 2^62) so that x + 2^47 + r never wraps.
TRUNC_MASK_BITS = 62

KINDS = ("triple", "trunc_pair", "edabit")


class BeaverTriple(NamedTuple):
    a: Shared
    b: Shared
    c: Shared


class TruncationPair(NamedTuple):
    r: Shared
    r_shifted: Shared
    shift: int


class EdaBitMask(NamedTuple):
    r: Shared
    bits: Shared  # trailing axis of length EDABIT_BITS, least significant first


@dataclass
class DealerBudget:
    """Item counts (scalar elements, not calls) the dealer may hand out."""

    triple: int = 0
    trunc_pair: int = 0
    edabit: int = 0

    def __add__(self, other: "DealerBudget") -> "DealerBudget":
        return DealerBudget(*(getattr(self, k) + getattr(other, k) for k in KINDS))

    def __mul__(self, k: int) -> "DealerBudget":
        return DealerBudget(*(getattr(self, kind) * k for kind in KINDS))

    __rmul__ = __mul__

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in KINDS}


@dataclass
class Dealer:
    n_parties: int
    seed: int = 0
    budget: DealerBudget | None = None
    used: dict = field(default_factory=lambda: dict.fromkeys(KINDS, 0))

    def __post_init__(self):
        if self.n_parties < 2:
            raise ProtocolError("dealer needs at least two parties")
        self.rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, 0x5D1])))

    def _consume(self, kind: str, count: int) -> int:
        start = self.used[kind]
        if self.budget is not None:
            remaining = getattr(self.budget, kind) - start
            if count > remaining:
                raise PreprocessingExhausted(kind, count, remaining)
        self.used[kind] = start + count
        return start

    def remaining(self, kind: str) -> int | None:
        if self.budget is None:
            return None
        return getattr(self.budget, kind) - self.used[kind]

    def triple(self, shape) -> BeaverTriple:
        shape = as_shape(shape)
        self._consume("triple", int(np.prod(shape, dtype=np.int64)))
        n = self.n_parties
        a = uniform_ring(self.rng, (n,) + shape)
        b = uniform_ring(self.rng, (n,) + shape)
        with np.errstate(over="ignore"):  # 0-d products are numpy scalars, which warn on wrap
            c = a.sum(axis=0, dtype=DTYPE) * b.sum(axis=0, dtype=DTYPE)
        return BeaverTriple(Shared(a), Shared(b), share_tensor(c, n, self.rng))

    def trunc_pair(self, shape, shift: int) -> TruncationPair:
        shape = as_shape(shape)
        self._consume("trunc_pair", int(np.prod(shape, dtype=np.int64)))
        r = uniform_ring(self.rng, shape) >> DTYPE(64 - TRUNC_MASK_BITS)
        r_shifted = r >> DTYPE(shift)
        return TruncationPair(
            share_tensor(r, self.n_parties, self.rng),
            share_tensor(r_shifted, self.n_parties, self.rng),
            shift,
        )

    def edabit(self, shape) -> EdaBitMask:
        shape = as_shape(shape)
        self._consume("edabit", int(np.prod(shape, dtype=np.int64)))
        r = uniform_ring(self.rng, shape)
        positions = np.arange(EDABIT_BITS, dtype=DTYPE)
        bits = (r[..., None] >> positions) & DTYPE(1)
        return EdaBitMask(
            share_tensor(r, self.n_parties, self.rng),
            share_tensor(bits, self.n_parties, self.rng),
        )


# -- materialised per-party tapes ---------------------------------------------------

TAPE_MAGIC = b"SDLT"
TAPE_VERSION = 1
_HEADER = struct.Struct("<4sIIQQQI")


@dataclass
class DealerTape:
    """One party's queue of preprocessed shares, consumed strictly in order."""

    party_id: int
    trunc_shift: int
    triples: deque = field(default_factory=deque)
    trunc_pairs: deque = field(default_factory=deque)
    edabits: deque = field(default_factory=deque)
    consumed: dict = field(default_factory=lambda: dict.fromkeys(KINDS, 0))

    def _take(self, queue: deque, kind: str):
        if not queue:
            raise PreprocessingExhausted(kind, 1, 0)
        self.consumed[kind] += 1
        return queue.popleft()

    def take_triple(self) -> tuple[int, int, int]:
        return self._take(self.triples, "triple")

    def take_trunc_pair(self) -> tuple[int, int]:
        return self._take(self.trunc_pairs, "trunc_pair")

    def take_edabit(self) -> tuple[int, np.ndarray]:
        return self._take(self.edabits, "edabit")

    def counts(self) -> dict:
        return {"triple": len(self.triples), "trunc_pair": len(self.trunc_pairs), "edabit": len(self.edabits)}

    def dump(self, path) -> None:
        """Little-endian 64-bit words after a fixed header (magic, version, party, counts, shift)."""
        c = self.counts()
        words = []
        words.extend(w for t in self.triples for w in t)
        words.extend(w for p in self.trunc_pairs for w in p)
        for r, bits in self.edabits:
            words.append(r)
            words.extend(int(b) for b in bits)
        body = np.array(words, dtype="<u8").tobytes()
        header = _HEADER.pack(TAPE_MAGIC, TAPE_VERSION, self.party_id,
                              c["triple"], c["trunc_pair"], c["edabit"], self.trunc_shift)
        Path(path).write_bytes(header + body)

    @classmethod
    def load(cls, path) -> "DealerTape":
        raw = Path(path).read_bytes()
        if len(raw) < _HEADER.size:
            raise ProtocolError("tape file shorter than its header")
        magic, version, party, nt, np_, ne, shift = _HEADER.unpack_from(raw)
        if magic != TAPE_MAGIC:
            raise ProtocolError(f"bad tape magic {magic!r}")
        if version != TAPE_VERSION:
            raise ProtocolError(f"unsupported tape version {version}")
        expected = 3 * nt + 2 * np_ + (1 + EDABIT_BITS) * ne
        words = np.frombuffer(raw, dtype="<u8", offset=_HEADER.size)
        if words.size != expected:
            raise ProtocolError(f"tape body has {words.size} words, header implies {expected}")
        tape = cls(party, shift)
        pos = 0
        for _ in range(nt):
            tape.triples.append(tuple(int(w) for w in words[pos:pos + 3]))
            pos += 3
        for _ in range(np_):
            tape.trunc_pairs.append(tuple(int(w) for w in words[pos:pos + 2]))
            pos += 2
        for _ in range(ne):
            tape.edabits.append((int(words[pos]), words[pos + 1:pos + 1 + EDABIT_BITS].astype(DTYPE)))
            pos += 1 + EDABIT_BITS
        return tape


def generate_tapes(n: int, budget: DealerBudget, seed: int = 0, trunc_shift: int = 16) -> list[DealerTape]:
    dealer = Dealer(n, seed)
    tapes = [DealerTape(p, trunc_shift) for p in range(n)]
    if budget.triple:
        t = dealer.triple((budget.triple,))
        for p, tape in enumerate(tapes):
            tape.triples.extend(zip(*(int_list(x.shares[p]) for x in t)))
    if budget.trunc_pair:
        pr = dealer.trunc_pair((budget.trunc_pair,), trunc_shift)
        for p, tape in enumerate(tapes):
            tape.trunc_pairs.extend(zip(int_list(pr.r.shares[p]), int_list(pr.r_shifted.shares[p])))
    if budget.edabit:
        e = dealer.edabit((budget.edabit,))
        for p, tape in enumerate(tapes):
            tape.edabits.extend(zip(int_list(e.r.shares[p]), list(e.bits.shares[p])))
    return tapes


def int_list(arr: np.ndarray) -> list[int]:
    return [int(v) for v in arr]
