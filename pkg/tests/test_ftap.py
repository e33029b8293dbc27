from __future__ import annotations

import math

import numpy as np
import pytest

from ncftap import (
    AdaptedProcess,
    DomainError,
    MultiMatrixAlgebra,
    Outcome,
    State,
    StructuralError,
    check_nfl,
    classical_oracle,
    embed_classical,
    find_arbitrage,
    find_martingale_state,
    is_martingale,
    payoff_subspace,
    random_market,
    stochastic_integral,
    verify_certificate,
)
from ncftap.algebra import gns_norm, min_eigenvalue, trace
from ncftap.ftap import _arbitrage_search, _ems_search
from ncftap.models import ClassicalNode, ClassicalTree, binomial_tree, trinomial_tree

from helpers import cvxpy_ems_margin, mc_payoff_rank, one_period_diag, one_period_full


# -- payoff subspace --------------------------------------------------------


def test_constant_process_has_no_payoffs():
    f, X = random_market(0, (2, 1), 2)
    const = AdaptedProcess(f, [f.algebra.identity()] * 3)
    assert payoff_subspace(const).dim == 0
    v = check_nfl(const)
    assert v.outcome is Outcome.EMS and v.ems_margin == pytest.approx(1.0)


def test_single_direction_payoff():
    X = one_period_diag([1.0, -1.0])
    sub = payoff_subspace(X)
    assert sub.dim == 1
    k = sub.basis[0]
    d = X.algebra.diagonal([1.0, -1.0])
    # unit vector along diag(1, -1) up to sign
    assert abs(abs(trace(X.algebra, k @ d).real) - gns_norm(X.algebra, d)) < 1e-12


def test_non_adapted_process_rejected(rng):
    f, X = random_market(1, (2, 2), 2)
    vals = list(X.values)
    vals[1] = f.algebra.random_element(rng, hermitian=True)
    with pytest.raises(StructuralError):
        payoff_subspace(AdaptedProcess(f, vals))


@pytest.mark.parametrize("seed", range(6))
def test_rank_matches_monte_carlo(seed):
    rng = np.random.default_rng(seed)
    alg = MultiMatrixAlgebra((3,))
    X = one_period_full(alg, alg.random_element(rng, hermitian=True), level0="full")
    assert payoff_subspace(X).dim == mc_payoff_rank(X, rng)
    f, Y = random_market(seed, (3, 2), 2)
    assert payoff_subspace(Y).dim == mc_payoff_rank(Y, rng)


def test_provenance_reconstructs_basis():
    f, X = random_market(8, (3, 2), 3)
    sub = payoff_subspace(X)
    G = sub.basis_hvec.T @ sub.basis_hvec
    assert np.abs(G - np.eye(sub.dim)).max() < 1e-12
    for j, k in enumerate(sub.basis):
        assert gns_norm(f.algebra, stochastic_integral(sub.basis_strategy(j), X) - k) <= 1e-9


# -- hand-solved instances --------------------------------------------------


def test_ems_symmetric_two_state():
    X = one_period_diag([1.0, -1.0])
    cand = find_martingale_state(X)
    assert cand.margin == pytest.approx(1.0, abs=1e-9)
    assert cand.density.allclose(X.algebra.identity(), atol=1e-8)
    assert find_arbitrage(X) is None
    assert check_nfl(X).outcome is Outcome.EMS


def test_ems_unique_ray():
    # oracle: 2p - q = 0 and p + q = 2 give (p, q) = (2/3, 4/3)
    X = one_period_diag([2.0, -1.0])
    cand = find_martingale_state(X)
    assert np.allclose(np.diag(cand.density.blocks[0]).real, [2 / 3, 4 / 3], atol=1e-8)
    assert cand.margin == pytest.approx(2 / 3, abs=1e-8)
    assert find_arbitrage(X) is None


def test_unit_increment_is_arbitrage():
    X = one_period_diag([1.0, 1.0])
    assert find_martingale_state(X) is None
    arb = find_arbitrage(X)
    assert arb is not None and arb.margin == pytest.approx(1.0, abs=1e-12)
    assert arb.payoff.allclose(X.algebra.identity(), atol=1e-12)
    (alpha, a), = arb.strategy.steps[0]
    assert (alpha * a @ a.H).allclose(X.algebra.identity(), atol=1e-12)
    v = check_nfl(X)
    assert v.outcome is Outcome.ARBITRAGE and v.ems_margin == -math.inf
    assert verify_certificate(v, X).passed


def test_arbitrage_with_informative_first_level():
    # a = e_11 gives e_11 dX e_11 = e_11 >= 0
    X = one_period_diag([1.0, 1.0, -1.0], level0="diag")
    arb = find_arbitrage(X)
    assert arb is not None and arb.margin >= -1e-8
    assert min_eigenvalue(X.algebra, arb.payoff) >= -1e-8
    e11 = X.algebra.diagonal([1.0, 0, 0])
    assert (e11 @ X.increment(0) @ e11).allclose(e11)


# -- oracle comparisons -----------------------------------------------------


@pytest.mark.parametrize("seed", range(8))
def test_ems_margin_matches_sdp(seed):
    pytest.importorskip("cvxpy")
    dims = [(2,), (3,), (2, 1), (2, 2)][seed % 4]
    f, X = random_market(seed, dims, 1 + seed % 2)
    cand = find_martingale_state(X)
    ref = cvxpy_ems_margin(X)
    if cand is None:
        assert ref == -np.inf
    else:
        assert cand.margin == pytest.approx(ref, abs=1e-6)


@pytest.mark.parametrize("seed", range(10))
def test_margin_duality(seed):
    # lambda* > 0 and mu* are tied by mu* = -lambda* / (1 - lambda*) (two independent solves)
    f, X = random_market(seed, (2, 3), 1)
    sub = payoff_subspace(X)
    ems, arb = _ems_search(sub, 1e-8, "barrier"), _arbitrage_search(sub, 1e-8, "barrier")
    if ems is None or arb is None or ems.margin <= 0:
        pytest.skip("instance outside the duality regime")
    assert arb.margin == pytest.approx(-ems.margin / (1 - ems.margin), rel=1e-6, abs=1e-8)


def test_ems_certificate_is_martingale_state():
    found = 0
    for seed in range(40):
        f, X = random_market(seed, (3, 2), 2)
        v = check_nfl(X)
        if v.outcome is Outcome.EMS:
            found += 1
            assert is_martingale(X, v.state)
            assert v.state.is_faithful()
            assert verify_certificate(v, X).passed
    assert found >= 5


def test_scaling_invariance():
    for seed in range(10):
        f, X = random_market(seed, (2, 2), 2)
        v = check_nfl(X)
        for c in (1e-3, 7.0):
            w = check_nfl(X.scaled(c))
            assert w.outcome is v.outcome
            if v.outcome is Outcome.EMS:
                assert w.ems_margin == pytest.approx(v.ems_margin, abs=1e-6)
            if v.outcome is Outcome.ARBITRAGE:
                assert w.arbitrage_margin == pytest.approx(v.arbitrage_margin, abs=1e-6)


def test_dichotomy_never_double_certifies():
    for seed in range(30):
        f, X = random_market(seed, (2, 1), 2)
        sub = payoff_subspace(X)
        ems, arb = _ems_search(sub, 1e-8, "barrier"), _arbitrage_search(sub, 1e-8, "barrier")
        ems_ok = ems is not None and ems.margin > 1e-6
        arb_ok = arb is not None and arb.margin >= -1e-8
        assert not (ems_ok and arb_ok)


# -- certificate verification -----------------------------------------------


def test_tampered_density_fails_faithfulness():
    X = one_period_diag([1.0, -1.0, 0.5, -0.5])
    v = check_nfl(X)
    assert v.outcome is Outcome.EMS
    w, U = np.linalg.eigh(v.state.density.blocks[0])
    w[0] = 0.0
    rho = X.algebra.element([U @ np.diag(w) @ U.conj().T])
    v.state = State.from_positive(X.algebra, rho)
    rep = verify_certificate(v, X)
    assert "density_faithful" in [c.name for c in rep.failures]


def test_tampered_payoff_reconstruction():
    X = one_period_diag([1.0, 1.0])
    v = check_nfl(X)
    eps = 1e-4
    v.payoff = v.payoff + eps * X.algebra.identity()
    rec = {c.name: c for c in verify_certificate(v, X).checks}["payoff_reconstruction"]
    assert not rec.passed and rec.residual == pytest.approx(eps, rel=1e-6)


def test_undecided_has_no_certificate():
    from ncftap.ftap import Verdict
    X = one_period_diag([1.0, -1.0])
    rep = verify_certificate(Verdict(Outcome.UNDECIDED), X)
    assert not rep.passed


# -- classical oracle -------------------------------------------------------


def test_classical_oracle_examples():
    v = classical_oracle(binomial_tree(1.0, 1.2, 0.9, 0.05, 1))
    assert v.outcome is Outcome.EMS and np.allclose(v.leaf_probabilities, [0.5, 0.5])
    assert classical_oracle(binomial_tree(1.0, 1.1, 1.05, 0.0, 1)).outcome is Outcome.ARBITRAGE
    single = ClassicalTree(ClassicalNode(5.0), 0.0)
    assert classical_oracle(single).outcome is Outcome.EMS


def test_classical_oracle_trinomial_and_limits():
    v = classical_oracle(trinomial_tree(1.0, 1.2, 1.0, 0.8, 0.0, 2))
    assert v.outcome is Outcome.EMS
    assert v.leaf_probabilities.sum() == pytest.approx(1.0)
    assert np.all(v.leaf_probabilities > 0)
    with pytest.raises(DomainError):
        classical_oracle(binomial_tree(1.0, 1.2, 0.9, 0.0, 5))
    four = ClassicalTree(ClassicalNode(1.0, tuple(ClassicalNode(p) for p in (0.5, 0.9, 1.1, 1.5))))
    with pytest.raises(DomainError):
        classical_oracle(four)


@pytest.mark.parametrize("tree", [
    trinomial_tree(1.0, 1.2, 1.0, 0.8, 0.0, 2),
    trinomial_tree(1.0, 1.3, 1.1, 1.05, 0.02, 1),
    trinomial_tree(1.0, 1.1, 1.0, 0.9, 0.1, 2),
    binomial_tree(1.0, 1.25, 0.8, 0.03, 3),
])
def test_embedded_trees_match_oracle(tree):
    _, X = embed_classical(tree)
    assert check_nfl(X).outcome is classical_oracle(tree).outcome
