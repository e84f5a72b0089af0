import numpy as np
import pytest

import oracles
from securedl.aggregation import (AggregationRule, krum_aggregate, mean_aggregate, median_aggregate,
                                  mozi_aggregate, securedl_aggregate, securedl_reference,
                                  trimmed_mean_aggregate)
from securedl.dealer import Dealer
from securedl.errors import ConfigError, ProtocolError
from securedl.linalg import SecureLinalg
from securedl.mpc import Protocol
from securedl.ring import DEFAULT_CODEC as C
from securedl.sharing import share_tensor
from securedl.transport import Transport


def small_instances(seed, count=20):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n, d = int(rng.integers(4, 9)), int(rng.integers(1, 17))
        yield rng, rng.normal(size=(n, d)) * rng.choice([1.0, 10.0], size=(n, 1))


# -- plaintext rules ---------------------------------------------------------------------

def test_mean_examples(rng):
    v = rng.normal(size=5)
    assert np.allclose(mean_aggregate([v, -v]), 0)
    assert np.allclose(mean_aggregate([v] * 4), v)
    for _ in range(10):
        u = rng.normal(size=(6, 4))
        assert np.allclose(mean_aggregate(u), [sum(col) / 6 for col in u.T])


def test_krum_examples():
    v = np.array([1.0, -2.0, 0.5])
    assert np.array_equal(krum_aggregate([v, v, v, 100 * v], 1), v)
    assert np.array_equal(krum_aggregate([v] * 5, 2), v)
    with pytest.raises(ConfigError):
        krum_aggregate([v] * 3, 1)


def test_krum_tie_goes_to_lowest_index():
    a, b = np.array([0.0]), np.array([1.0])
    # both candidates have identical scores
    assert krum_aggregate([a, b, a, b], 0)[0] == 0.0


def test_krum_vs_bruteforce():
    for rng, u in small_instances(1):
        f = int(rng.integers(0, len(u) - 2))
        assert np.array_equal(krum_aggregate(u, f), oracles.krum_bruteforce(u, f))


def test_median_examples():
    assert median_aggregate([[1.0], [2.0], [100.0]])[0] == 2.0
    assert median_aggregate([[1.0], [2.0], [3.0], [100.0]])[0] == 2.5


def test_median_vs_bruteforce():
    for _, u in small_instances(2):
        assert np.array_equal(median_aggregate(u), oracles.median_bruteforce(u))


def test_trimmed_mean_examples(rng):
    assert trimmed_mean_aggregate([[1.0], [2.0], [3.0], [100.0]], 1)[0] == 2.5
    u = rng.normal(size=(5, 3))
    assert np.allclose(trimmed_mean_aggregate(u, 0), u.mean(axis=0))
    with pytest.raises(ConfigError):
        trimmed_mean_aggregate(u, 3)


def test_trimmed_mean_vs_bruteforce():
    for rng, u in small_instances(3):
        k = int(rng.integers(0, (len(u) - 1) // 2 + 1))
        assert np.allclose(trimmed_mean_aggregate(u, k), oracles.trimmed_mean_bruteforce(u, k), rtol=0, atol=1e-12)


def quadratic_loss(target):
    return lambda w: float(np.sum((w - target) ** 2))


def test_mozi_examples(rng):
    v = rng.normal(size=4)
    agg, acc = mozi_aggregate(v, [v, v, v], quadratic_loss(v), 0.5)
    assert np.allclose(agg, v) and acc.sum() >= 1
    received = [v + 0.01, v - 0.01, v * 1000]
    agg, acc = mozi_aggregate(v, received, quadratic_loss(np.zeros(4)), 0.5)
    assert not acc[2]


def test_mozi_vs_reference():
    for rng, u in small_instances(4):
        own, received = u[0], u[1:]
        target = rng.normal(size=u.shape[1])
        rho = float(rng.choice([0.25, 0.5, 1.0]))
        agg, acc = mozi_aggregate(own, received, quadratic_loss(target), rho)
        want, kept = oracles.mozi_reference(own, list(received), quadratic_loss(target), rho)
        assert np.flatnonzero(acc).tolist() == kept
        assert np.allclose(agg, want, rtol=0, atol=1e-12)


def test_permutation_equivariance(rng):
    u = rng.normal(size=(7, 5))
    perm = rng.permutation(7)
    for fn in (mean_aggregate, median_aggregate, lambda x: trimmed_mean_aggregate(x, 2)):
        assert np.allclose(fn(u), fn(u[perm]))


def test_rule_validation():
    AggregationRule("securedl", tau=0.5).validate(5)
    with pytest.raises(ConfigError):
        AggregationRule("securedl", tau=1.0).validate(5)
    with pytest.raises(ConfigError):
        AggregationRule("bridge", trim=3).validate(6)
    with pytest.raises(ConfigError):
        AggregationRule("dkrum", byzantine_f=3).validate(5)
    with pytest.raises(ConfigError):
        AggregationRule("nope").validate(5)
    with pytest.raises(ConfigError):
        AggregationRule("mozi", mozi_rho=0.0).validate(5)


# -- SecureDL -----------------------------------------------------------------------------

def secure_setup(n, d, seed=0):
    proto = Protocol(Dealer(n, seed), Transport(n))
    return SecureLinalg(proto, d), proto


def run_secure(own, received, tau=0.0, n=None, divide_by_accepted=False, seed=0):
    received = np.asarray(received)
    n = n or len(received) + 1
    la, p = secure_setup(n, own.size, seed)
    so = share_tensor(C.encode(own), n, p.dealer.rng)
    sr = share_tensor(C.encode(received), n, p.dealer.rng)
    dec = securedl_aggregate(la, 0, so, sr, tau, n, divide_by_accepted)
    return dec, C.decode(dec.aggregate.reveal())


def test_securedl_identical_updates():
    v = np.random.default_rng(0).uniform(-0.5, 0.5, 12)
    dec, out = run_secure(v, [v, v, v], tau=0.9)
    assert dec.accepted.all()
    assert np.max(np.abs(out - v)) <= 5e-2


def test_securedl_rejects_sign_flip():
    rng = np.random.default_rng(1)
    v = rng.uniform(-0.5, 0.5, 10)
    others = [np.clip(v + rng.normal(0, 0.05, 10), -1, 1) for _ in range(2)]
    dec, out = run_secure(v, others + [-v], tau=0.0)
    assert dec.accepted.tolist() == [True, True, False]
    want, acc = securedl_reference(v, others + [-v], 0.0)
    assert acc.tolist() == dec.accepted.tolist()
    assert np.max(np.abs(out - want)) <= 5e-2


def test_securedl_scaled_senders_norm_equalized():
    rng = np.random.default_rng(2)
    d = 16
    own = rng.uniform(-0.01, 0.01, d)
    benign = [np.clip(own + rng.normal(0, 0.002, d), -1, 1) for _ in range(3)]
    scaled = [np.clip(100 * b, -1, 1) for b in benign[:2]]
    received = benign + scaled
    dec, out = run_secure(own, received, tau=0.0)
    want, acc = securedl_reference(own, received, 0.0)
    assert dec.accepted.all() and acc.all()
    assert np.max(np.abs(out - want)) <= 5e-2


def test_securedl_matches_reference_random():
    rng = np.random.default_rng(3)
    for trial in range(5):
        d = int(rng.integers(4, 40))
        own = rng.uniform(-1, 1, d)
        received = rng.uniform(-1, 1, (5, d))
        tau = float(rng.choice([0.0, 0.1]))
        for dba in (False, True):
            dec, out = run_secure(own, received, tau, divide_by_accepted=dba, seed=trial)
            want, acc = securedl_reference(own, received, tau, divide_by_accepted=dba)
            assert dec.accepted.tolist() == acc.tolist()
            assert np.max(np.abs(out - want)) <= 5e-2


def test_securedl_accepted_contributions_have_receiver_norm():
    rng = np.random.default_rng(4)
    d = 20
    own = rng.uniform(-0.3, 0.3, d)
    received = np.clip(own + rng.uniform(-0.3, 0.3, (4, d)) * [[1], [2], [3], [0.1]], -1, 1)
    la, p = secure_setup(5, d)
    so = share_tensor(C.encode(own), 5, p.dealer.rng)
    sr = share_tensor(C.encode(received), 5, p.dealer.rng)
    cos = la.cosine_similarity(so, sr)
    normalized, _ = la.l2_normalize(so, sr, cos.norm_a, cos.norm_b)
    norms = np.linalg.norm(C.decode(normalized.reveal()), axis=1)
    assert np.all(np.abs(norms / np.linalg.norm(own) - 1) <= 2e-2)


def test_securedl_reduces_to_mean_for_equal_norms():
    rng = np.random.default_rng(5)
    d = 10
    base = rng.uniform(-0.5, 0.5, d)
    rows = [base]
    for _ in range(3):
        v = base + rng.normal(0, 0.05, d)
        rows.append(v * np.linalg.norm(base) / np.linalg.norm(v))
    rows = np.array(rows)
    dec, out = run_secure(rows[0], rows[1:], tau=0.0)
    assert np.max(np.abs(out - rows.mean(axis=0))) <= 5e-2


def test_securedl_degenerate_sender_rejected():
    own = np.full(8, 0.25)
    dec, _ = run_secure(own, [own, np.zeros(8)], tau=0.0)
    assert dec.accepted.tolist() == [True, False]


def test_securedl_dimension_check():
    la, p = secure_setup(3, 8)
    so = share_tensor(C.encode(np.zeros(8)), 3, p.dealer.rng)
    sr = share_tensor(C.encode(np.zeros((2, 7))), 3, p.dealer.rng)
    with pytest.raises(ProtocolError):
        securedl_aggregate(la, 0, so, sr)
