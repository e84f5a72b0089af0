import numpy as np
import pytest

import oracles
from securedl.dealer import Dealer, DealerBudget
from securedl.errors import PreprocessingExhausted, ProtocolError
from securedl.mpc import (NR_ITERATIONS, Protocol, beaver_mul, compare_triple_cost, inverse_cost,
                          sqrt_cost)
from securedl.ring import DEFAULT_CODEC as C, ring_mul, to_signed
from securedl.sharing import share_tensor
from securedl.transport import Transport


def shared(proto, x):
    return share_tensor(C.encode(x), proto.n, proto.dealer.rng)


def test_beaver_examples(proto_factory):
    p = proto_factory()
    assert C.decode(p.mul_fixed(shared(p, 3.0), shared(p, 4.0)).reveal()) == 12.0
    assert C.decode(p.mul_fixed(shared(p, 0.0), shared(p, 7.5)).reveal()) == 0.0


def test_beaver_exact_on_random_ring_elements(proto_factory):
    p = proto_factory(n=4)
    rng = np.random.default_rng(0)
    x = rng.integers(0, 2 ** 64 - 1, size=1000, dtype=np.uint64)
    y = rng.integers(0, 2 ** 64 - 1, size=1000, dtype=np.uint64)
    sx, sy = share_tensor(x, 4, rng), share_tensor(y, 4, rng)
    assert np.array_equal(p.mul(sx, sy).reveal(), ring_mul(x, y))


def test_beaver_function_opens_delta_and_epsilon():
    d, t = Dealer(3, 1), Transport(3)
    rng = np.random.default_rng(1)
    x, y = share_tensor(C.encode([2.0]), 3, rng), share_tensor(C.encode([5.0]), 3, rng)
    z = beaver_mul(x, y, d.triple((1,)), t)
    assert C.decode_scaled(z.reveal(), 32)[0] == 10.0
    assert t.openings["delta"] == 1 and t.openings["epsilon"] == 1


@pytest.mark.parametrize("value", [6.0, -2.5])
def test_truncate_examples(proto_factory, value):
    p = proto_factory()
    x2f = share_tensor(to_signed(C.encode(value)).astype(object) * (1 << 16), 3, p.dealer.rng)
    assert abs(C.decode(p.truncate(x2f).reveal()) - value) <= 2 ** -16


def test_truncate_random_vs_shift_oracle(proto_factory):
    p = proto_factory(n=3)
    rng = np.random.default_rng(2)
    raw = rng.integers(-(2 ** 46), 2 ** 46, size=10 ** 4)
    x = share_tensor(raw.astype(np.int64).view(np.uint64), 3, rng)
    got = to_signed(p.truncate(x).reveal())
    floor = raw >> 16
    assert set(np.unique(got - floor)) <= {0, 1}


@pytest.mark.parametrize("x,t,want", [(0.5, 0.7, 1), (-0.2, 0.0, 1), (0.7, 0.5, 0), (1.0, 1.0, 0)])
def test_compare_examples(proto_factory, x, t, want):
    p = proto_factory()
    assert int(p.compare_lt_public(shared(p, [x]), t)[0]) == want


def test_compare_extremes(proto_factory):
    p = proto_factory(n=2)
    xs = np.array([-16383.9, 16383.9, -1e-4, 1e-4, 0.0])
    got = p.compare_lt_public(shared(p, xs), 0.0)
    assert got.tolist() == [1, 0, 1, 0, 0]


def test_compare_consumes_counted_items(proto_factory):
    p = proto_factory()
    p.compare_lt_public(shared(p, np.zeros(3)), 0.5)
    assert p.dealer.used["edabit"] == 3
    assert p.dealer.used["triple"] == 3 * compare_triple_cost()


def test_compare_leaks_only_masked_value(proto_factory):
    p = proto_factory()
    p.compare_lt_public(shared(p, np.zeros(5)), 0.5)
    assert p.transport.openings["compare_mask"] == 5
    assert p.transport.openings["compare_out"] == 5


@pytest.mark.parametrize("x,c,want", [(4.0, 8.0, 0.25), (1.0, 2.0, 1.0)])
def test_inverse_examples(proto_factory, x, c, want):
    p = proto_factory()
    got = C.decode(p.inverse(shared(p, [x]), c).reveal())[0]
    assert abs(got - oracles.nr_inverse(x, c, NR_ITERATIONS)) <= 4 * 2 ** -16
    assert abs(got - want) / want <= 1e-3


def test_inverse_fixed_point_at_bound(proto_factory):
    p = proto_factory()
    got = C.decode(p.inverse(shared(p, [8.0]), 8.0).reveal())[0]
    assert abs(got - 0.125) <= 2 ** -16


@pytest.mark.parametrize("y,x0,want", [(9.0, 2.0, 3.0), (1.0, 1.0, 1.0), (0.25, 1.0, 0.5)])
def test_sqrt_examples(proto_factory, y, x0, want):
    p = proto_factory()
    got = C.decode(p.sqrt(shared(p, [y]), x0).reveal())[0]
    assert abs(got - want) / want <= 1e-3
    assert abs(got - oracles.heron_sqrt(y, x0, NR_ITERATIONS)) <= 1e-3 * want


def test_sqrt_rejects_bad_guess(proto_factory):
    p = proto_factory()
    with pytest.raises(ValueError):
        p.sqrt(shared(p, [1.0]), 0.0)


def test_cost_formulas_match_consumption(proto_factory):
    p = proto_factory()
    x = shared(p, np.full(7, 2.0))
    p.inverse(x, 4.0, 6)
    assert (p.dealer.used["triple"], p.dealer.used["trunc_pair"]) == tuple(7 * v for v in inverse_cost(6))
    q = proto_factory()
    q.sqrt(shared(q, np.full(3, 2.0)), 1.0, 4, inverse_iters=5)
    assert (q.dealer.used["triple"], q.dealer.used["trunc_pair"]) == tuple(3 * v for v in sqrt_cost(4, 5))


def test_exhaustion_surfaces(proto_factory):
    p = proto_factory(budget=DealerBudget(triple=1, trunc_pair=0, edabit=0))
    with pytest.raises(PreprocessingExhausted):
        p.mul(shared(p, [1.0, 2.0]), shared(p, [1.0, 2.0]))


def test_party_count_mismatch():
    with pytest.raises(ProtocolError):
        Protocol(Dealer(3, 0), Transport(4))
    t = Transport(3)
    with pytest.raises(ProtocolError):
        t.open(share_tensor(C.encode([1.0]), 2, np.random.default_rng(0)), "delta")


def test_determinism(proto_factory):
    def go():
        p = proto_factory(seed=11)
        x = shared(p, [0.3, 1.7])
        return p.sqrt(p.mul_fixed(x, x), 1.0, 3).reveal()

    assert np.array_equal(go(), go())
