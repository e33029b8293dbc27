from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncftap import (
    AdaptedProcess,
    DomainError,
    Filtration,
    MultiMatrixAlgebra,
    SimpleBiprocess,
    StructuralError,
    TradingStrategy,
    biprocess_adjoint,
    gns_norm,
    identity_strategy,
    random_market,
    running_integral,
    scalar_subalgebra,
    stochastic_integral,
    stopped_integral,
    strategy_to_biprocess,
    validate_adapted,
)
from ncftap.algebra import full_subalgebra, self_adjoint_residual
from ncftap.models import QuantumBinomialSpec, quantum_binomial

from helpers import random_biprocess, random_in_level, random_strategy


@pytest.fixture
def market():
    return random_market(5, (3, 2), 3)


def test_identity_integrand_telescopes(market):
    f, X = market
    H = SimpleBiprocess(f, [[(f.algebra.identity(), f.algebra.identity())]] * f.steps)
    assert stochastic_integral(H, X).allclose(X.values[-1] - X.values[0], atol=1e-12)


def test_single_step_pair(market, rng):
    f, X = market
    alg = f.algebra
    a = random_in_level(alg, f.levels[1], rng)
    H = SimpleBiprocess(f, [[], [(a, a.H)], []])
    assert stochastic_integral(H, X).allclose(a @ (X.values[2] - X.values[1]) @ a.H, atol=1e-12)


def test_empty_integrand_is_zero(market):
    f, X = market
    H = SimpleBiprocess(f, [[] for _ in range(f.steps)])
    assert stochastic_integral(H, X).allclose(f.algebra.zero())


def test_filtration_mismatch(market):
    f, X = market
    g, _ = random_market(6, (3, 2), 3)
    with pytest.raises(StructuralError):
        stochastic_integral(identity_strategy(g), X)


def test_stopped_integral_windows(market, rng):
    f, X = market
    H = random_biprocess(f, rng)
    assert stopped_integral(H, 1, 1, X).allclose(f.algebra.zero())
    full = stochastic_integral(H, X)
    assert stopped_integral(H, f.times[0], f.times[-1], X).allclose(full)
    for s in f.times:
        # oracle: the defining sum restricted to steps in the window, recomputed by hand
        direct = f.algebra.zero()
        for k in range(f.index(s)):
            for a, b in H.steps[k]:
                direct = direct + a @ X.increment(k) @ b
        left = stopped_integral(H, 0, s, X)
        assert gns_norm(f.algebra, left - direct) <= 1e-10
        assert gns_norm(f.algebra, left + stopped_integral(H, s, f.times[-1], X) - full) <= 1e-10
    with pytest.raises(DomainError):
        stopped_integral(H, 2, 1, X)
    with pytest.raises(DomainError):
        stopped_integral(H, 0, 1.5, X)


def test_adjoint_involution_and_identity(market, rng):
    f, X = market
    alg = f.algebra
    for _ in range(10):
        H = random_biprocess(f, rng)
        HH = biprocess_adjoint(biprocess_adjoint(H))
        for s1, s2 in zip(H.steps, HH.steps):
            for (a, b), (c, d) in zip(s1, s2):
                assert a.allclose(c) and b.allclose(d)
        lhs = stochastic_integral(H, X).H
        rhs = stochastic_integral(biprocess_adjoint(H), X)
        assert gns_norm(alg, lhs - rhs) <= 1e-10


def test_adjoint_pairs():
    alg = MultiMatrixAlgebra((2,))
    f = Filtration(alg, [0, 1], [full_subalgebra(alg)] * 2)
    A = alg.element([np.array([[1, 2j], [0, 3]])])
    B = alg.element([np.array([[0, 1], [1j, 0]])])
    (b_adj, a_adj), = biprocess_adjoint(SimpleBiprocess(f, [[(A, B)]])).steps[0]
    assert b_adj.allclose(B.H) and a_adj.allclose(A.H)


def test_strategy_folding():
    alg = MultiMatrixAlgebra((2,))
    f = Filtration(alg, [0, 1], [full_subalgebra(alg)] * 2)
    one = identity_strategy(f)
    (a, b), = strategy_to_biprocess(one).steps[0]
    assert a.allclose(alg.identity()) and b.allclose(alg.identity())
    x = alg.element([np.array([[1, 1j], [2, 0]])])
    (a, b), = strategy_to_biprocess(TradingStrategy(f, [[(-2.0, x)]])).steps[0]
    assert a.allclose(-2 * x) and b.allclose(x.H)
    with pytest.raises(DomainError):
        TradingStrategy(f, [[(1j, x)]])


def test_strategy_biprocess_is_self_adjoint(market, rng):
    f, X = market
    S = random_strategy(f, rng)
    H = strategy_to_biprocess(S)
    Ha = biprocess_adjoint(H)
    # (alpha a, a*)* = (a, alpha a*): same term after moving the real weight
    for s1, s2 in zip(H.steps, Ha.steps):
        for (a, b), (c, d) in zip(s1, s2):
            assert (a @ X.values[-1] @ b).allclose(c @ X.values[-1] @ d, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_bilinearity(seed, alpha, beta):
    rng = np.random.default_rng(seed)
    f, X = random_market(seed % 1000, (2, 2), 2)
    alg = f.algebra
    Y = AdaptedProcess(f, [random_in_level(alg, lev, rng, hermitian=True) for lev in f.levels])
    H, G = random_biprocess(f, rng), random_biprocess(f, rng)
    lin = stochastic_integral(H.scaled(alpha) + G.scaled(beta), X)
    ref = alpha * stochastic_integral(H, X) + beta * stochastic_integral(G, X)
    assert gns_norm(alg, lin - ref) <= 1e-10 * (1 + gns_norm(alg, ref))
    Z = AdaptedProcess(f, [alpha * x + beta * y for x, y in zip(X.values, Y.values)])
    lin = stochastic_integral(H, Z)
    ref = alpha * stochastic_integral(H, X) + beta * stochastic_integral(H, Y)
    assert gns_norm(alg, lin - ref) <= 1e-10 * (1 + gns_norm(alg, ref))


def test_decomposition_independence(market, rng):
    f, X = market
    H = random_biprocess(f, rng)
    split = SimpleBiprocess(f, [[(a / 2, b) for a, b in step] * 2 for step in H.steps])
    assert gns_norm(f.algebra, stochastic_integral(H, X) - stochastic_integral(split, X)) <= 1e-12
    # rotating both legs by the same orthogonal 2x2 matrix leaves sum_j A_j (x) B_j unchanged
    alg = f.algebra
    steps = []
    for step in H.steps:
        if len(step) < 2:
            steps.append(step)
            continue
        c, s = np.cos(0.7), np.sin(0.7)
        (a1, b1), (a2, b2) = step[0], step[1]
        steps.append([(c * a1 + s * a2, c * b1 + s * b2), (-s * a1 + c * a2, -s * b1 + c * b2)]
                     + list(step[2:]))
    rot = SimpleBiprocess(f, steps)
    assert gns_norm(alg, stochastic_integral(H, X) - stochastic_integral(rot, X)) <= 1e-10


def test_strategy_payoffs_are_self_adjoint(market, rng):
    f, X = market
    for _ in range(20):
        Y = stochastic_integral(random_strategy(f, rng), X)
        assert self_adjoint_residual(f.algebra, Y) <= 1e-10


def test_running_integral(market, rng):
    f, X = market
    S = random_strategy(f, rng)
    R = running_integral(S, X)
    for k, t in enumerate(f.times):
        assert R.values[k].allclose(stopped_integral(S, 0, t, X), atol=1e-12)
    R = running_integral(identity_strategy(f), X)
    assert R.values[-1].allclose(X.values[-1] - X.values[0], atol=1e-12)


def test_validate_adapted():
    alg = MultiMatrixAlgebra((2,))
    f = Filtration(alg, [0, 1, 2], [scalar_subalgebra(alg), scalar_subalgebra(alg), full_subalgebra(alg)])
    assert validate_adapted(AdaptedProcess(f, [alg.identity()] * 3)).passed
    bad = AdaptedProcess(f, [alg.identity(), alg.diagonal([1, 2]), alg.identity()])
    rep = validate_adapted(bad)
    assert [c.name for c in rep.failures] == ["adapted[t1]"]
    nsa = AdaptedProcess(f, [alg.identity(), alg.identity(), alg.element([np.array([[0, 1], [0, 0]])])])
    assert [c.name for c in validate_adapted(nsa).failures] == ["self_adjoint[t2]"]
    _, Q = quantum_binomial(QuantumBinomialSpec(2, 1.2, 0.9, 0.05, (0.2, 1.1)))
    assert validate_adapted(Q).passed


def test_validate_adapted_biprocess(market, rng):
    f, X = market
    assert validate_adapted(random_biprocess(f, rng)).passed
    alg = f.algebra
    outside = alg.random_element(rng)
    H = SimpleBiprocess(f, [[(outside, alg.identity())], [], []])
    assert not validate_adapted(H).passed
