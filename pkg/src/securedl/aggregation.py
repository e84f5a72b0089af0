"""Aggregation rules: SecureDL over shares, and the plaintext baselines."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, ProtocolError
from .linalg import NORM_FLOOR, SecureLinalg
from .sharing import Shared

RULES = ("mean", "dkrum", "dmedian", "bridge", "mozi", "securedl")


@dataclass
class AggregationRule:
    tag: str = "securedl"
    tau: float = 0.0
    trim: int = 1
    byzantine_f: int | None = None
    mozi_rho: float = 0.5
    mozi_batch: int = 64
    divide_by_accepted: bool = False

    def validate(self, n: int) -> None:
        if self.tag not in RULES:
            raise ConfigError(f"unknown aggregation rule {self.tag!r}; choose from {RULES}")
        if self.tag == "securedl" and not 0.0 <= self.tau < 1.0:
            raise ConfigError(f"tau must lie in [0, 1), got {self.tau}")
        if self.tag == "bridge" and not 0 <= self.trim < n / 2:
            raise ConfigError(f"bridge needs 0 <= trim < n/2, got trim={self.trim}, n={n}")
        if self.tag == "dkrum":
            f = self.byzantine_f or 0
            if n - f - 2 < 1:
                raise ConfigError(f"dkrum needs n - f - 2 >= 1, got n={n}, f={f}")
        if self.tag == "mozi" and not 0.0 < self.mozi_rho <= 1.0:
            raise ConfigError(f"mozi rho must lie in (0, 1], got {self.mozi_rho}")


@dataclass
class AggregationDecision:
    receiver: int
    accepted: np.ndarray  # one flag per sender, in sender order
    aggregate: object  # Shared for SecureDL, ndarray for plaintext rules
    timings: dict = field(default_factory=dict)


# -- plaintext baselines ----------------------------------------------------------------

def mean_aggregate(updates) -> np.ndarray:
    return np.mean(np.asarray(updates, dtype=np.float64), axis=0)


def krum_scores(updates: np.ndarray, f: int) -> np.ndarray:
    n = len(updates)
    sq = np.sum(updates * updates, axis=1)
    dist = np.maximum(sq[:, None] + sq[None, :] - 2.0 * updates @ updates.T, 0.0)
    np.fill_diagonal(dist, np.inf)
    closest = np.sort(dist, axis=1)[:, : n - f - 2]
    return closest.sum(axis=1)


def krum_aggregate(updates, f: int) -> np.ndarray:
    """Update of the client whose n-f-2 nearest neighbours are closest (lowest index on ties)."""
    updates = np.asarray(updates, dtype=np.float64)
    if len(updates) - f - 2 < 1:
        raise ConfigError(f"krum needs n - f - 2 >= 1, got n={len(updates)}, f={f}")
    return updates[int(np.argmin(krum_scores(updates, f)))].copy()


def median_aggregate(updates) -> np.ndarray:
    return np.median(np.asarray(updates, dtype=np.float64), axis=0)


def trimmed_mean_aggregate(updates, k: int) -> np.ndarray:
    updates = np.asarray(updates, dtype=np.float64)
    n = len(updates)
    if not 0 <= k < n / 2:
        raise ConfigError(f"trimmed mean needs 0 <= k < n/2, got k={k}, n={n}")
    ordered = np.sort(updates, axis=0)
    return ordered[k:n - k].mean(axis=0)


def mozi_aggregate(own, received, loss_eval: Callable[[np.ndarray], float], rho: float = 0.5):
    """Distance filter to the ``ceil(rho*m)`` nearest, then keep those no worse than own loss.

    Returns ``(aggregate, accepted)`` where ``accepted`` flags the received updates used.
    """
    own = np.asarray(own, dtype=np.float64)
    received = np.asarray(received, dtype=np.float64)
    m = len(received)
    accepted = np.zeros(m, dtype=bool)
    if m == 0:
        return own.copy(), accepted
    keep = max(1, math.ceil(rho * m))
    dist = np.linalg.norm(received - own, axis=1)
    candidates = np.argsort(dist, kind="stable")[:keep]
    own_loss = loss_eval(own)
    losses = np.array([loss_eval(received[j]) for j in candidates])
    good = candidates[losses <= own_loss]
    if good.size == 0:
        good = candidates[[int(np.argmin(losses))]]
    accepted[good] = True
    stacked = np.vstack([received[np.sort(good)], own[None, :]])
    return stacked.mean(axis=0), accepted


# -- SecureDL ----------------------------------------------------------------------------

def securedl_aggregate(linalg: SecureLinalg, receiver: int, own: Shared, received: Shared,
                       tau: float = 0.0, n_clients: int | None = None,
                       divide_by_accepted: bool = False) -> AggregationDecision:
    """One receiver's SecureDL step over shared updates.

    Senders whose opened comparison says cosine < tau, or whose norm is
    degenerate, contribute zero; the others are rescaled to the receiver's
    norm. The sum plus the receiver's own update is divided by n (or by the
    number of kept updates when ``divide_by_accepted``).
    """
    if own.shape != (linalg.d,) or received.shape[1:] != (linalg.d,):
        raise ProtocolError(f"dimension mismatch: own {own.shape}, received {received.shape}")
    proto = linalg.proto
    m = received.shape[0]
    n_clients = m + 1 if n_clients is None else n_clients
    timings = {}

    t0 = time.perf_counter()
    cos = linalg.cosine_similarity(own, received)
    t1 = time.perf_counter()
    below = proto.compare_lt_public(cos.cosine, tau).astype(bool)
    t2 = time.perf_counter()
    accepted = ~(below | cos.degenerate)
    total = own
    idx = np.flatnonzero(accepted)
    if idx.size:
        normalized, _ = linalg.l2_normalize(own, received[idx], cos.norm_a, cos.norm_b[idx])
        total = total + normalized.sum(axis=0)
    t3 = time.perf_counter()
    divisor = idx.size + 1 if divide_by_accepted else n_clients
    aggregate = proto.scale(total, 1.0 / divisor)
    t4 = time.perf_counter()
    timings.update(cosine=t1 - t0, compare=t2 - t1, normalize=t3 - t2, average=t4 - t3)
    return AggregationDecision(receiver, accepted, aggregate, timings)


def securedl_reference(own, received, tau: float = 0.0, n_clients: int | None = None,
                       divide_by_accepted: bool = False, norm_floor: float = NORM_FLOOR):
    """Plaintext float version of the SecureDL rule; returns ``(aggregate, accepted)``."""
    own = np.asarray(own, dtype=np.float64)
    received = np.asarray(received, dtype=np.float64)
    m = len(received)
    n_clients = m + 1 if n_clients is None else n_clients
    own_norm = np.linalg.norm(own)
    norms = np.linalg.norm(received, axis=1)
    degenerate = (norms < norm_floor) | (own_norm < norm_floor)
    with np.errstate(divide="ignore", invalid="ignore"):
        cos = received @ own / (norms * own_norm)
    accepted = ~degenerate & ~(cos < tau)
    total = own.copy()
    for j in np.flatnonzero(accepted):
        total += received[j] * (own_norm / norms[j])
    divisor = accepted.sum() + 1 if divide_by_accepted else n_clients
    return total / divisor, accepted
