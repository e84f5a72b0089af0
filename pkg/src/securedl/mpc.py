"""Online MPC primitives over stacked additive shares.

All operations work elementwise on tensors of any shape, so one call can
serve a whole batch of independent protocol instances; each element still
consumes its own preprocessing item.
"""
from __future__ import annotations

import time
from collections import defaultdict

import numpy as np

from .dealer import BeaverTriple, Dealer, TruncationPair
from .errors import ProtocolError
from .ring import DEFAULT_CODEC, DTYPE, FixedPointCodec, as_ring
from .sharing import Shared
from .transport import Transport

NR_ITERATIONS = 15
# comparison works on a - t + 2^62, so |x - t| must stay below 2^62
COMPARE_OFFSET_BITS = 62


def beaver_mul(x: Shared, y: Shared, triple: BeaverTriple, transport: Transport) -> Shared:
    """Ring product of two sharings using one Beaver triple per element.

    With delta = x - a and eps = y - b opened, party i holds
    c_i + delta*b_i + eps*a_i, and party 0 also adds delta*eps.
    """
    delta = transport.open(x - triple.a, "delta")
    eps = transport.open(y - triple.b, "epsilon")
    with np.errstate(over="ignore"):  # wraparound is the ring arithmetic
        z = triple.c.shares + delta * triple.b.shares + eps * triple.a.shares
        z[0] += eps * delta
    return Shared(z)


def truncate(x: Shared, pair: TruncationPair, transport: Transport,
             codec: FixedPointCodec = DEFAULT_CODEC) -> Shared:
    """Divide a sharing by ``2^pair.shift`` (floor, +0/+1 in the last place).

    The value must satisfy ``|x| < 2^(k+f-1)`` as an integer, i.e. a product
    of two legal encodings. It is lifted to a non-negative integer, masked by
    ``r`` and opened; the shifted mask is then subtracted back.
    """
    offset = 1 << (codec.value_bits + codec.frac_bits - 1)
    shift = pair.shift
    opened = transport.open(x.add_public(offset) + pair.r, "trunc")
    with np.errstate(over="ignore"):
        public = (opened >> DTYPE(shift)) - DTYPE(offset >> shift)
    return (-pair.r_shifted).add_public(public)


def bitwise_lt_public(c: np.ndarray, r_bits: Shared, proto: "Protocol") -> Shared:
    """Sharing of [c < r] for public ``c`` and bitwise-shared ``r`` (LSB first).

    With e_j = c_j xor r_j and P_i = prod_{j>i} (1 - e_j), the first differing
    bit from the top decides: [c < r] = sum_i (1 - c_i) * r_i * P_i.
    The suffix products are formed in log-many rounds.
    """
    n_bits = r_bits.shape[-1]
    positions = np.arange(n_bits, dtype=DTYPE)
    cb = (c[..., None] >> positions) & DTYPE(1)
    # 1 - e_j = 1 - c_j - r_j + 2 c_j r_j, linear in r_j because c_j is public
    keep = r_bits.mul_public(DTYPE(2) * cb - DTYPE(1)).add_public(DTYPE(1) - cb)
    suffix = keep.shares.copy()
    step = 1
    while step < n_bits:
        lo = Shared(suffix[..., : n_bits - step])
        hi = Shared(suffix[..., step:])
        suffix[..., : n_bits - step] = proto.mul(lo, hi).shares
        step *= 2
    # exclusive suffix product: P_i = S_{i+1}, P_top = 1
    higher_equal = np.empty_like(suffix)
    higher_equal[..., :-1] = suffix[..., 1:]
    higher_equal[..., -1] = 0
    higher_equal[0, ..., -1] = 1
    terms = proto.mul(r_bits, Shared(higher_equal))
    return terms.mul_public(DTYPE(1) - cb).sum(axis=-1)


def compare_triple_cost(n_bits: int = COMPARE_OFFSET_BITS) -> int:
    """Beaver triples consumed by one comparison."""
    total, step = n_bits, 1
    while step < n_bits:
        total += n_bits - step
        step *= 2
    return total


class Protocol:
    """One protocol instance: dealer, transport and fixed-point codec bound together."""

    def __init__(self, dealer: Dealer, transport: Transport, codec: FixedPointCodec = DEFAULT_CODEC):
        if dealer.n_parties != transport.n_parties:
            raise ProtocolError("dealer and transport disagree on the party count")
        self.dealer = dealer
        self.transport = transport
        self.codec = codec
        self.timings = defaultdict(float)

    @property
    def n(self) -> int:
        return self.dealer.n_parties

    def public(self, values) -> Shared:
        return Shared.public(as_ring(values), self.n)

    def encode_public(self, x) -> Shared:
        return Shared.public(self.codec.encode(x), self.n)

    # -- multiplication and rescaling ---------------------------------------------

    def mul(self, x: Shared, y: Shared) -> Shared:
        """Raw ring product; fixed-point inputs give a result at scale 2^(2f)."""
        shape = np.broadcast_shapes(x.shape, y.shape)
        if x.shape != shape:
            x = x.broadcast_to(shape)
        if y.shape != shape:
            y = y.broadcast_to(shape)
        t0 = time.perf_counter()
        out = beaver_mul(x, y, self.dealer.triple(shape), self.transport)
        self.timings["beaver"] += time.perf_counter() - t0
        return out

    def truncate(self, x: Shared, shift: int | None = None) -> Shared:
        shift = self.codec.frac_bits if shift is None else shift
        return truncate(x, self.dealer.trunc_pair(x.shape, shift), self.transport, self.codec)

    def mul_fixed(self, x: Shared, y: Shared) -> Shared:
        return self.truncate(self.mul(x, y))

    def scale(self, x: Shared, c: float) -> Shared:
        """Multiply by a public real and rescale."""
        return self.truncate(x.mul_public(self.codec.encode(c)))

    # -- comparison --------------------------------------------------------------------

    def compare_lt_public(self, x: Shared, t) -> np.ndarray:
        """Opened bit array: 1 where the shared fixed-point value is below ``t``.

        ``t`` is a public real (or array of reals). Only the masked value and
        the final bit are opened.
        """
        t_ring = self.codec.encode(t)
        shape = np.broadcast_shapes(x.shape, t_ring.shape)
        if x.shape != shape:
            x = x.broadcast_to(shape)
        a = x.add_public(DTYPE(1 << COMPARE_OFFSET_BITS) - t_ring)
        mask = self.dealer.edabit(a.shape)
        opened = self.transport.open(a + mask.r, "compare_mask")
        low_mask = DTYPE((1 << COMPARE_OFFSET_BITS) - 1)
        c_low = opened & low_mask
        low_bits = mask.bits[..., :COMPARE_OFFSET_BITS]
        weights = DTYPE(1) << np.arange(COMPARE_OFFSET_BITS, dtype=DTYPE)
        r_low = low_bits.mul_public(weights).sum(axis=-1)
        wrapped = bitwise_lt_public(c_low, low_bits, self)
        a_low = (wrapped.mul_public(DTYPE(1 << COMPARE_OFFSET_BITS)) - r_low).add_public(c_low)
        top = self.transport.open(a - a_low, "compare_out")
        if np.any(top & low_mask):
            raise ProtocolError("comparison opened an inconsistent value; input outside legal range?")
        return (DTYPE(1) - (top >> DTYPE(COMPARE_OFFSET_BITS))).astype(np.uint8)

    # -- Newton-Raphson ----------------------------------------------------------------

    def inverse(self, x: Shared, bound: float, iters: int = NR_ITERATIONS) -> Shared:
        """Approximate 1/x by Newton-Raphson from the public guess 1/bound.

        Each step forms M = B*x afresh and sets B <- 2B - B*M, so rounding
        errors in B are corrected by later steps instead of accumulating.
        Converges when 0 < x < 2*bound; the condition is the caller's to
        guarantee since checking it online would leak.
        """
        inv_c = self.codec.encode(1.0 / bound)
        b = self.public(np.broadcast_to(inv_c, x.shape))
        m = self.truncate(x.mul_public(inv_c))
        two = DTYPE(2)
        for step in range(iters):
            if step:
                m = self.mul_fixed(b, x)
            b = b.mul_public(two) - self.mul_fixed(b, m)
        return b

    def sqrt(self, y: Shared, x0: float, iters: int = NR_ITERATIONS,
             y_max: float | None = None, inverse_iters: int = NR_ITERATIONS) -> Shared:
        """Heron iteration x <- (x + y/x) / 2 starting from the public guess ``x0``.

        ``y_max`` is a public upper bound on y; it fixes the inversion bound
        so that every iterate stays inside the Newton-Raphson convergence
        region. Defaults to 64*x0^2 (sqrt(y) at most 8*x0).
        """
        if x0 <= 0:
            raise ValueError("initial guess must be positive")
        y_max = 64.0 * x0 * x0 if y_max is None else y_max
        peak = max(x0, 0.5 * (x0 + y_max / x0))
        bound = 0.55 * peak
        x = self.encode_public(np.full(y.shape, x0))
        for _ in range(iters):
            q = self.mul_fixed(y, self.inverse(x, bound, inverse_iters))
            x = self.scale(x + q, 0.5)
        return x


def inverse_cost(iters: int = NR_ITERATIONS) -> tuple[int, int]:
    """(triples, truncation pairs) per element of Protocol.inverse."""
    return 2 * iters - 1, 2 * iters


def sqrt_cost(iters: int = NR_ITERATIONS, inverse_iters: int = NR_ITERATIONS) -> tuple[int, int]:
    """(triples, truncation pairs) per element of Protocol.sqrt."""
    inv_t, inv_r = inverse_cost(inverse_iters)
    return iters * (inv_t + 1), iters * (inv_r + 2)
