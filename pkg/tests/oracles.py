"""Independent plaintext references used by the tests.

Everything here uses Python integers or plain floats, never the package's
ring helpers, so an error in the library cannot cancel out in a test.
"""
from __future__ import annotations

import math

import numpy as np

F = 16
SCALE = 1 << F
MOD = 1 << 64


def enc(x: float) -> int:
    """Round half away from zero, as a signed integer (not reduced mod 2^64)."""
    v = abs(x) * SCALE
    r = math.floor(v + 0.5)
    return r if x >= 0 else -r


def dec(v: int) -> float:
    return v / SCALE


def to_ring(v: int) -> int:
    return v % MOD


def from_ring(v: int) -> int:
    v = int(v) % MOD
    return v - MOD if v >= MOD // 2 else v


def fx_mul(a: int, b: int) -> int:
    """Fixed-point product with floor rescaling."""
    return (a * b) >> F


def nr_inverse(x: float, bound: float, iters: int) -> float:
    """Newton-Raphson reciprocal in f=16 fixed point, same recurrence as the protocol."""
    xe = enc(x)
    inv_c = enc(1.0 / bound)
    b = inv_c
    m = fx_mul(xe, inv_c)
    for step in range(iters):
        if step:
            m = fx_mul(b, xe)
        b = 2 * b - fx_mul(b, m)
    return dec(b)


def heron_sqrt(y: float, x0: float, iters: int, y_max: float | None = None, inv_iters: int = 15) -> float:
    y_max = 64.0 * x0 * x0 if y_max is None else y_max
    bound = 0.55 * max(x0, 0.5 * (x0 + y_max / x0))
    ye = enc(y)
    x = enc(x0)
    half = enc(0.5)
    for _ in range(iters):
        inv = enc(nr_inverse(dec(x), bound, inv_iters))
        q = fx_mul(ye, inv)
        x = fx_mul(x + q, half)
    return dec(x)


def cosine(a, b) -> float:
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(y * y for y in b))
    return dot / (na * nb)


# -- baseline aggregation rules, written from their definitions ------------------------

def krum_bruteforce(updates, f: int):
    updates = [np.asarray(u, dtype=np.float64) for u in updates]
    n = len(updates)
    best, best_score = None, None
    for i in range(n):
        dists = sorted(float(np.sum((updates[i] - updates[j]) ** 2)) for j in range(n) if j != i)
        score = sum(dists[: n - f - 2])
        if best_score is None or score < best_score:
            best, best_score = i, score
    return updates[best]


def median_bruteforce(updates):
    updates = np.asarray(updates, dtype=np.float64)
    out = []
    for col in updates.T:
        s = sorted(col.tolist())
        n = len(s)
        out.append(s[n // 2] if n % 2 else (s[n // 2 - 1] + s[n // 2]) / 2)
    return np.array(out)


def trimmed_mean_bruteforce(updates, k: int):
    updates = np.asarray(updates, dtype=np.float64)
    out = []
    for col in updates.T:
        s = sorted(col.tolist())
        kept = s[k:len(s) - k]
        out.append(sum(kept) / len(kept))
    return np.array(out)


def mozi_reference(own, received, loss_eval, rho: float):
    own = np.asarray(own, dtype=np.float64)
    m = len(received)
    keep = max(1, math.ceil(rho * m))
    dists = [(float(np.sqrt(np.sum((np.asarray(r) - own) ** 2))), j) for j, r in enumerate(received)]
    stage1 = [j for _, j in sorted(dists)[:keep]]
    own_loss = loss_eval(own)
    stage2 = [j for j in stage1 if loss_eval(np.asarray(received[j])) <= own_loss]
    if not stage2:
        stage2 = [min(stage1, key=lambda j: (loss_eval(np.asarray(received[j])), j))]
    survivors = [np.asarray(received[j], dtype=np.float64) for j in sorted(stage2)] + [own]
    return sum(survivors) / len(survivors), sorted(stage2)
