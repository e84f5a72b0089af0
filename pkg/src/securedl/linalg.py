"""Vector-level secure computations built on :class:`~securedl.mpc.Protocol`.

Shared vectors carry the model dimension ``d`` on their last axis; any
leading axes are batches of independent instances (e.g. one row per
sender). Every value is assumed clipped to ``|w_k| <= clip``, so squared
sums are bounded by ``d * clip^2`` and stay inside the fixed-point range.

Norms are handled at a public power-of-two scale ``s`` close to
``sqrt(d) * clip / 8``: the square root starts its Heron iteration at ``s``
and norms are divided by ``s`` before they are multiplied and inverted, so
the Newton-Raphson inputs stay near 1 where fixed-point precision is best.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ProtocolError
from .dealer import DealerBudget
from .mpc import NR_ITERATIONS, Protocol, compare_triple_cost, inverse_cost, sqrt_cost
from .sharing import Shared

NORM_FLOOR = 1e-3


def power_of_two_scale(d: int, clip: float) -> float:
    return 2.0 ** round(math.log2(math.sqrt(d) * clip / 8.0))


@dataclass
class CosineResult:
    cosine: Shared
    norm_a: Shared
    norm_b: Shared
    degenerate: np.ndarray  # public flags, broadcast over the batch


class SecureLinalg:
    def __init__(self, proto: Protocol, d: int, clip: float = 1.0,
                 norm_floor: float = NORM_FLOOR, iters: int = NR_ITERATIONS):
        y_max = d * clip * clip
        if y_max >= proto.codec.bound:
            raise ProtocolError(
                f"d * clip^2 = {y_max:g} exceeds the fixed-point range {proto.codec.bound:g}"
            )
        self.proto = proto
        self.d = d
        self.clip = clip
        self.norm_floor = norm_floor
        self.iters = iters
        self.y_max = y_max
        self.scale = power_of_two_scale(d, clip)
        self._scale_exp = int(round(math.log2(self.scale)))
        norm_max = math.sqrt(y_max) / self.scale
        self.ratio_bound = 0.55 * max(norm_max, 1.0)
        self.product_bound = 0.55 * max(norm_max * norm_max, 1.0)

    def _check(self, *vectors: Shared):
        for v in vectors:
            if not v.shape or v.shape[-1] != self.d:
                raise ProtocolError(f"expected vectors of dimension {self.d}, got shape {v.shape}")

    def _unscale(self, x: Shared) -> Shared:
        """Exact division by the power-of-two norm scale."""
        if self._scale_exp > 0:
            return self.proto.truncate(x, self._scale_exp)
        if self._scale_exp < 0:
            return x.mul_public(1 << -self._scale_exp)
        return x

    def dot_product(self, a: Shared, b: Shared) -> Shared:
        """Sum the raw products first, then truncate once."""
        self._check(a, b)
        return self.proto.truncate(self.proto.mul(a, b).sum(axis=-1))

    def sum_of_squares(self, a: Shared) -> Shared:
        self._check(a)
        return self.proto.truncate(self.proto.mul(a, a).sum(axis=-1))

    def sqrt_of(self, sumsq: Shared) -> Shared:
        return self.proto.sqrt(sumsq, self.scale, self.iters, y_max=self.y_max, inverse_iters=self.iters)

    def degenerate(self, sumsq: Shared) -> np.ndarray:
        """Public flag per vector: squared norm below norm_floor^2 (at least one ulp)."""
        threshold = max(self.norm_floor ** 2, self.proto.codec.ulp)
        return self.proto.compare_lt_public(sumsq, threshold).astype(bool)

    def norm(self, a: Shared) -> Shared:
        return self.sqrt_of(self.sum_of_squares(a))

    def _norms(self, a: Shared, b: Shared):
        """Norms of both operands with a single batched square root."""
        sa, sb = self.sum_of_squares(a), self.sum_of_squares(b)
        flat = Shared.concat([sa.reshape(-1), sb.reshape(-1)])
        roots = self.sqrt_of(flat)
        flags = self.degenerate(flat)
        ka = int(np.prod(sa.shape, dtype=np.int64))
        na = roots[:ka].reshape(*sa.shape)
        nb = roots[ka:].reshape(*sb.shape)
        deg = flags[:ka].reshape(sa.shape) | flags[ka:].reshape(sb.shape)
        return na, nb, deg

    def cosine_similarity(self, a: Shared, b: Shared) -> CosineResult:
        """<a, b> * inverse(|a| |b|), with norms and product taken at scale s."""
        self._check(a, b)
        dot = self.dot_product(a, b)
        na, nb, deg = self._norms(a, b)
        product = self.proto.mul_fixed(self._unscale(na), self._unscale(nb))
        denom = self.proto.inverse(product, self.product_bound, self.iters)
        dot_scaled = self._unscale(self._unscale(dot))
        cos = self.proto.mul_fixed(dot_scaled, denom)
        return CosineResult(cos, na, nb, np.broadcast_to(deg, cos.shape).copy())

    def l2_normalize(self, reference: Shared, target: Shared,
                     norm_reference: Shared | None = None, norm_target: Shared | None = None):
        """Rescale ``target`` so its norm matches ``reference``'s; direction is kept.

        Returns ``(vector, degenerate)``. Degenerate targets come back as the
        zero sharing.
        """
        self._check(reference, target)
        if norm_reference is None or norm_target is None:
            norm_reference, norm_target, deg = self._norms(reference, target)
        else:
            deg = np.zeros(np.broadcast_shapes(norm_reference.shape, norm_target.shape), dtype=bool)
        inv_target = self.proto.inverse(self._unscale(norm_target), self.ratio_bound, self.iters)
        ratio = self.proto.mul_fixed(self._unscale(norm_reference), inv_target)
        out = self.proto.mul_fixed(target, ratio.expand(-1))
        deg = np.broadcast_to(deg, out.shape[:-1])
        if deg.any():
            keep = (~deg).astype(np.uint64)[..., None]
            out = out.mul_public(keep)
        return out, deg.copy()

    # -- preprocessing demand ---------------------------------------------------------
    # Each formula mirrors the calls made above; tests check them against the
    # dealer's consumption counters.

    def cosine_cost(self, batch: int, reference_batch: int = 1) -> DealerBudget:
        """Dealer items consumed by cosine_similarity on ``batch`` pairs."""
        norms = batch + reference_batch
        unscale = 1 if self._scale_exp > 0 else 0
        inv_t, inv_r = inverse_cost(self.iters)
        sq_t, sq_r = sqrt_cost(self.iters, self.iters)
        return DealerBudget(
            triple=batch * self.d + norms * self.d + norms * (sq_t + compare_triple_cost())
            + batch * (2 + inv_t),
            trunc_pair=batch + norms + norms * sq_r + norms * unscale
            + batch * (2 + inv_r + 2 * unscale),
            edabit=norms,
        )

    def normalize_cost(self, batch: int, reference_batch: int = 1) -> DealerBudget:
        """Dealer items consumed by l2_normalize with precomputed norms."""
        unscale = 1 if self._scale_exp > 0 else 0
        inv_t, inv_r = inverse_cost(self.iters)
        return DealerBudget(
            triple=batch * (inv_t + 1 + self.d),
            trunc_pair=batch * (unscale + inv_r + 1 + self.d) + reference_batch * unscale,
            edabit=0,
        )
