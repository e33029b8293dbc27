"""Instance builders and independent oracles shared by the tests."""
from __future__ import annotations

import numpy as np

from ncftap import (
    AdaptedProcess,
    Filtration,
    MultiMatrixAlgebra,
    SimpleBiprocess,
    State,
    TradingStrategy,
    make_subalgebra,
    random_market,
    scalar_subalgebra,
)
from ncftap.algebra import full_subalgebra


def diag_algebra_full(n: int):
    alg = MultiMatrixAlgebra((n,))
    return alg, make_subalgebra(alg, [alg.diagonal(np.eye(n)[i]) for i in range(n)])


def one_period_diag(entries, level0="scalar"):
    """One-period market on diagonal ``M_n`` with ``X_0 = 0`` and ``X_1 = diag(entries)``."""
    entries = np.asarray(entries, dtype=float)
    alg, diag = diag_algebra_full(len(entries))
    l0 = scalar_subalgebra(alg) if level0 == "scalar" else diag
    f = Filtration(alg, [0, 1], [l0, diag])
    return AdaptedProcess(f, [alg.zero(), alg.diagonal(entries)])


def one_period_full(alg: MultiMatrixAlgebra, dX, level0="scalar"):
    l0 = scalar_subalgebra(alg) if level0 == "scalar" else full_subalgebra(alg)
    f = Filtration(alg, [0, 1], [l0, full_subalgebra(alg)])
    return AdaptedProcess(f, [alg.zero(), dX])


def random_in_level(alg, sub, rng, hermitian=False):
    c = rng.standard_normal(sub.dim) + 1j * rng.standard_normal(sub.dim)
    x = alg.from_cvec(c @ sub.matrix)
    return x.hermitian_part() if hermitian else x


def random_strategy(f: Filtration, rng, max_terms: int = 3) -> TradingStrategy:
    alg = f.algebra
    steps = []
    for k in range(f.steps):
        steps.append([(float(rng.normal()), random_in_level(alg, f.levels[k], rng))
                      for _ in range(int(rng.integers(0, max_terms + 1)))])
    return TradingStrategy(f, steps)


def random_biprocess(f: Filtration, rng, max_terms: int = 3) -> SimpleBiprocess:
    alg = f.algebra
    steps = []
    for k in range(f.steps):
        steps.append([(random_in_level(alg, f.levels[k], rng), random_in_level(alg, f.levels[k], rng))
                      for _ in range(int(rng.integers(0, max_terms + 1)))])
    return SimpleBiprocess(f, steps)


def hermitian_span(alg, sub) -> np.ndarray:
    """Orthonormal hvec basis (columns) of the self-adjoint part of a subalgebra."""
    cols = []
    for b in sub.basis:
        cols.append(alg.hvec(b.hermitian_part()))
        cols.append(alg.hvec((1j * b).hermitian_part()))
    u, s, _ = np.linalg.svd(np.array(cols).T, full_matrices=False)
    return u[:, s > 1e-10 * s.max()]


def martingale_increment(alg, level_k, level_next, rho, rng) -> np.ndarray:
    """Random self-adjoint element of ``level_next`` (hvec) with ``tau(rho b_i dX b_j^*) = 0``.

    Solved directly as a linear null-space problem, independently of the
    payoff-subspace code.
    """
    V = hermitian_span(alg, level_next)
    rows = []
    for bi in level_k.basis:
        for bj in level_k.basis:
            Z = bj.H @ rho @ bi          # tau(rho bi dX bj^*) = tau(Z dX)
            rows.append(alg.hvec(Z.hermitian_part()))
            rows.append(alg.hvec((-1j * Z).hermitian_part()))
    A = np.array(rows) @ V
    _, s, vt = np.linalg.svd(A)
    rank = int(np.sum(s > 1e-10 * max(1.0, s.max())))
    null = vt[rank:].T
    if null.shape[1] == 0:
        return np.zeros(alg.size)
    return V @ (null @ rng.standard_normal(null.shape[1]))


def martingale_market(seed, dims=(3, 2), periods=2):
    """Random filtration, random faithful state, and a process that is a martingale under it."""
    rng = np.random.default_rng(seed)
    f, _ = random_market(seed, dims, periods)
    alg = f.algebra
    sigma = State.random(alg, rng)
    vals = [alg.scalar(1.0)]
    for k in range(f.steps):
        dx = martingale_increment(alg, f.levels[k], f.levels[k + 1], sigma.density, rng)
        vals.append(vals[-1] + alg.from_hvec(dx))
    return f, AdaptedProcess(f, vals), sigma


def raw_payoffs(X: AdaptedProcess) -> list:
    """Every polarisation payoff ``a dX_k a^*``, built element by element."""
    f = X.filtration
    out = []
    for k in range(f.steps):
        dX = X.increment(k)
        basis = f.levels[k].basis
        pos = list(basis)
        for i in range(len(basis)):
            for j in range(i + 1, len(basis)):
                pos.append(basis[i] + basis[j])
                pos.append(basis[i] + basis[j] * 1j)
        out.extend(a @ dX @ a.H for a in pos)
    return out


def cvxpy_ems_margin(X: AdaptedProcess) -> float:
    """``max lambda_min(rho)`` s.t. ``tau(rho) = 1`` and ``tau(rho g) = 0`` for every raw payoff."""
    import cvxpy as cp

    alg = X.algebra
    rhos = [cp.Variable((n, n), hermitian=True) for n in alg.block_dims]
    t = cp.Variable()
    tau = lambda blocks: sum(w * cp.real(cp.trace(b)) for w, b in zip(alg.trace_weights, blocks))
    cons = [tau(rhos) == 1]
    cons += [r - t * np.eye(n) >> 0 for r, n in zip(rhos, alg.block_dims)]
    for g in raw_payoffs(X):
        cons.append(tau([r @ gb for r, gb in zip(rhos, g.blocks)]) == 0)
    prob = cp.Problem(cp.Maximize(t), cons)
    prob.solve(solver="CLARABEL")
    if prob.status in ("infeasible", "infeasible_inaccurate"):
        return -np.inf
    return float(t.value)


def mc_payoff_rank(X: AdaptedProcess, rng, n: int = 500) -> int:
    """Numerical rank of ``n`` random payoffs ``a dX_k a^*`` (random ``k``, random ``a``)."""
    f = X.filtration
    alg = X.algebra
    steps = [k for k in range(f.steps) if np.any([np.any(b != 0) for b in X.increment(k).blocks])]
    if not steps:
        return 0
    rows = []
    for _ in range(n):
        k = steps[int(rng.integers(len(steps)))]
        a = random_in_level(alg, f.levels[k], rng)
        rows.append(alg.hvec(a @ X.increment(k) @ a.H))
    s = np.linalg.svd(np.array(rows), compute_uv=False)
    return int(np.sum(s > 1e-9 * s[0]))
