"""Deciding no-free-lunch versus existence of a faithful martingale state.

With ``K`` the real span of all strategy payoffs, exactly one of the
following holds (in exact arithmetic):

* some density ``rho > 0`` annihilates ``K`` -- an EMS certificate;
* ``K`` contains a non-zero positive element -- an arbitrage certificate.

Both are searched for by maximising a smallest eigenvalue over an affine
slice (:mod:`ncftap.spectral`):

    lambda* = max { lambda_min(rho) : tau(rho) = 1, tau(rho k) = 0 for k in K }
    mu*     = max { lambda_min(k)   : k in K, tau(k) = 1 }

``lambda* > tol_pos`` certifies a faithful martingale state, ``mu* >= -tol``
an arbitrage.  Anything in between is reported as UNDECIDED.
"""
from __future__ import annotations

import enum
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .algebra import (
    DEFAULT_TOL,
    AlgebraElement,
    gns_norm,
    min_eigenvalue,
    self_adjoint_residual,
    trace,
)
from .errors import DomainError, StructuralError
from .integration import (
    AdaptedProcess,
    TradingStrategy,
    payoff_generators,
    stochastic_integral,
    validate_adapted,
)
from .martingale import DEFAULT_TOL_POS, State, is_martingale
from .models import ClassicalTree
from .spectral import AffineSlice, maximize_min_eigenvalue, orthogonal_complement
from .validation import ValidationReport

log = logging.getLogger(__name__)

PAYOFF_RTOL = 1e-8
_CHUNK = 4096

__all__ = [
    "Outcome",
    "PayoffSubspace",
    "EMSCandidate",
    "ArbitrageCandidate",
    "Verdict",
    "payoff_subspace",
    "find_martingale_state",
    "find_arbitrage",
    "check_nfl",
    "verify_certificate",
    "ClassicalVerdict",
    "classical_oracle",
]


class Outcome(str, enum.Enum):
    EMS = "EMS"
    ARBITRAGE = "ARBITRAGE"
    UNDECIDED = "UNDECIDED"


# ---------------------------------------------------------------------------
# payoff subspace


@dataclass
class PayoffSubspace:
    """Orthonormal basis of the strategy-payoff space with provenance.

    ``basis_hvec[:, j] = sum_l coefficients[j, l] * hvec(a_l dX_{s_l} a_l^*)``
    where ``(s_l, a_l)`` are the selected generators ``steps[l]``,
    ``positions[l]`` (flat coordinates).
    """

    process: AdaptedProcess
    basis_hvec: np.ndarray                  # (D, r) orthonormal columns
    steps: np.ndarray                       # (g,) step index of each selected generator
    positions: np.ndarray                   # (g, D) flat coordinates of a_l
    coefficients: np.ndarray                # (r, g)
    n_generators: int = 0

    @property
    def dim(self) -> int:
        return self.basis_hvec.shape[1]

    @property
    def algebra(self):
        return self.process.algebra

    @property
    def basis(self) -> list[AlgebraElement]:
        alg = self.algebra
        return [alg.from_hvec(col) for col in self.basis_hvec.T]

    def strategy(self, z: np.ndarray) -> TradingStrategy:
        """Trading strategy whose payoff is ``sum_j z_j basis_j``."""
        alg = self.algebra
        f = self.process.filtration
        alpha = np.asarray(z, dtype=float) @ self.coefficients
        steps: list[list] = [[] for _ in range(f.steps)]
        for a_flat, s, w in zip(self.positions, self.steps, alpha):
            if w != 0.0:
                steps[int(s)].append((float(w), alg.from_flat(a_flat)))
        return TradingStrategy(f, steps)

    def basis_strategy(self, j: int) -> TradingStrategy:
        e = np.zeros(self.dim)
        e[j] = 1.0
        return self.strategy(e)


def payoff_subspace(X: AdaptedProcess, *, rtol: float = PAYOFF_RTOL,
                    check_adapted: bool = True, tol: float = DEFAULT_TOL) -> PayoffSubspace:
    """Span of all one-step strategy payoffs, by pivoted Gram-Schmidt.

    Generators come from :func:`ncftap.integration.payoff_generators`.  A
    generator is accepted while its residual exceeds ``rtol`` times the
    largest generator norm, always taking the largest residual first; that
    keeps the provenance coefficients well conditioned.
    """
    if check_adapted:
        rep = validate_adapted(X, tol)
        if not rep.passed:
            worst = rep.failures[0]
            raise StructuralError(f"process is not adapted/self-adjoint: {worst.name} "
                                  f"residual {worst.residual:.3e}")
    alg = X.algebra
    lay = alg.layout
    D = alg.size
    batches = payoff_generators(X)
    n_gen = sum(len(b) for b in batches)
    hv = [lay.from_flat(b.payoff) for b in batches]
    gmax = max((float(np.linalg.norm(h, axis=1).max()) for h in hv if len(h)), default=0.0)
    Q = np.zeros((D, 0))
    C = np.zeros((0, 0))
    sel_steps: list[int] = []
    sel_pos: list[np.ndarray] = []
    thresh = rtol * gmax
    if gmax > 0.0:
        for batch, H in zip(batches, hv):
            for lo in range(0, H.shape[0], _CHUNK):
                if Q.shape[1] >= D:
                    break
                P = H[lo:lo + _CHUNK]
                R = P - (P @ Q) @ Q.T
                R -= (R @ Q) @ Q.T
                norms = np.linalg.norm(R, axis=1)
                while Q.shape[1] < D:
                    j = int(np.argmax(norms))
                    if norms[j] <= thresh:
                        break
                    g = P[j]
                    h = Q.T @ g
                    res = g - Q @ h
                    h2 = Q.T @ res
                    res -= Q @ h2
                    h += h2
                    nrm = float(np.linalg.norm(res))
                    q = res / nrm
                    r_old = Q.shape[1]
                    row = np.zeros(r_old + 1)
                    row[r_old] = 1.0
                    if r_old:
                        row[:r_old] -= h @ C
                    row /= nrm
                    C = np.pad(C, ((0, 1), (0, 1)))
                    C[r_old] = row
                    Q = np.column_stack([Q, q])
                    sel_steps.append(batch.step)
                    sel_pos.append(batch.a[lo + j])
                    R -= np.outer(R @ q, q)
                    norms = np.linalg.norm(R, axis=1)
    positions = np.array(sel_pos) if sel_pos else np.zeros((0, D), dtype=complex)
    return PayoffSubspace(X, Q, np.asarray(sel_steps, dtype=int), positions, C, n_gen)


# ---------------------------------------------------------------------------
# the two searches


class EMSCandidate(NamedTuple):
    density: AlgebraElement
    margin: float           # lambda_min(density); > tol_pos means faithful
    gap: float
    method: str


class ArbitrageCandidate(NamedTuple):
    strategy: TradingStrategy
    payoff: AlgebraElement
    margin: float           # lambda_min(payoff), payoff normalised to tau = 1
    gap: float
    method: str


def _ems_search(sub: PayoffSubspace, tol: float, method: str) -> EMSCandidate | None:
    alg = sub.algebra
    K = sub.basis_hvec
    ih = alg.hvec(alg.identity())
    p = ih - K @ (K.T @ ih)
    pn = float(np.linalg.norm(p))
    if pn <= tol:
        return None
    x0 = p / pn ** 2
    normals = np.column_stack([K, p / pn])
    res = maximize_min_eigenvalue(AffineSlice(alg, x0, normals=normals), method=method)
    return EMSCandidate(alg.from_hvec(res.x), res.value, res.gap, res.method)


def _arbitrage_search(sub: PayoffSubspace, tol: float, method: str) -> ArbitrageCandidate | None:
    alg = sub.algebra
    K = sub.basis_hvec
    if K.shape[1] == 0:
        return None
    tr = K.T @ alg.hvec(alg.identity())      # tau(k_j)
    tn = float(np.linalg.norm(tr))
    if tn <= tol:
        # every payoff is traceless, so none is positive and non-zero
        return None
    u = tr / tn
    directions = K @ orthogonal_complement(u[:, None])
    x0 = K @ (u / tn)
    res = maximize_min_eigenvalue(AffineSlice(alg, x0, directions=directions), method=method)
    z = K.T @ res.x
    return ArbitrageCandidate(sub.strategy(z), alg.from_hvec(res.x), res.value, res.gap, res.method)


def find_martingale_state(X: AdaptedProcess, tol: float = DEFAULT_TOL, *,
                          subspace: PayoffSubspace | None = None,
                          method: str = "barrier") -> EMSCandidate | None:
    """Maximise ``lambda_min(rho)`` over unit-trace densities annihilating the payoffs.

    Returns ``None`` when no self-adjoint ``rho`` satisfies the linear
    constraints (the identity is itself a payoff).  Otherwise returns the
    maximiser and its margin; the margin exceeds ``tol_pos`` exactly when a
    faithful martingale state has been found.
    """
    sub = payoff_subspace(X, tol=tol) if subspace is None else subspace
    return _ems_search(sub, tol, method)


def find_arbitrage(X: AdaptedProcess, tol: float = DEFAULT_TOL, *,
                   subspace: PayoffSubspace | None = None,
                   method: str = "barrier") -> ArbitrageCandidate | None:
    """Search the payoff space for a positive element of unit trace.

    Returns ``None`` unless the best smallest eigenvalue is ``>= -tol``.
    """
    sub = payoff_subspace(X, tol=tol) if subspace is None else subspace
    cand = _arbitrage_search(sub, tol, method)
    if cand is None or cand.margin < -tol:
        return None
    return cand


# ---------------------------------------------------------------------------
# verdicts


@dataclass
class Verdict:
    outcome: Outcome
    state: State | None = None
    ems_margin: float = -math.inf
    strategy: TradingStrategy | None = None
    payoff: AlgebraElement | None = None
    arbitrage_margin: float | None = None
    info: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return {Outcome.EMS: 0, Outcome.ARBITRAGE: 2, Outcome.UNDECIDED: 3}[self.outcome]


def check_nfl(X: AdaptedProcess, tol: float = DEFAULT_TOL, tol_pos: float = DEFAULT_TOL_POS, *,
              method: str = "barrier") -> Verdict:
    """Decide NFL / EMS for ``X`` and attach the matching certificate."""
    sub = payoff_subspace(X, tol=tol)
    info = {"payoff_dim": sub.dim, "generators": sub.n_generators, "algebra_size": X.algebra.size}
    ems = _ems_search(sub, tol, method)
    lam = -math.inf if ems is None else ems.margin
    if ems is not None:
        info["ems_method"] = ems.method
        info["ems_gap"] = ems.gap
    if ems is not None and lam > tol_pos:
        state = State(X.algebra, ems.density, tol)
        return Verdict(Outcome.EMS, state=state, ems_margin=lam, info=info)
    arb = _arbitrage_search(sub, tol, method)
    mu = None if arb is None else arb.margin
    if arb is not None:
        info["arbitrage_method"] = arb.method
        info["arbitrage_gap"] = arb.gap
    if arb is not None and arb.margin >= -tol:
        return Verdict(Outcome.ARBITRAGE, ems_margin=lam, strategy=arb.strategy, payoff=arb.payoff,
                       arbitrage_margin=mu, info=info)
    log.info("undecided: lambda*=%.3e mu*=%s", lam, mu)
    return Verdict(Outcome.UNDECIDED, ems_margin=lam, arbitrage_margin=mu, info=info)


def verify_certificate(v: Verdict, X: AdaptedProcess, tol: float = DEFAULT_TOL,
                       tol_pos: float = DEFAULT_TOL_POS) -> ValidationReport:
    """Re-check a verdict's certificate from scratch."""
    alg = X.algebra
    rep = ValidationReport(f"{v.outcome.value} certificate")
    if v.outcome is Outcome.EMS:
        if v.state is None:
            rep.add("certificate_present", 1.0, 0.0, passed=False)
            return rep
        rho = v.state.density
        rep.add("density_self_adjoint", self_adjoint_residual(alg, rho), tol)
        lam = min_eigenvalue(alg, rho)
        rep.add("density_faithful", max(0.0, tol_pos - lam), 0.0, f"min eigenvalue {lam:.3e}",
                passed=lam >= tol_pos)
        rep.add("density_unit_trace", abs(trace(alg, rho) - 1.0), tol)
        sub = payoff_subspace(X, tol=tol)
        worst = 0.0
        for k in sub.basis:
            worst = max(worst, abs(trace(alg, rho @ k)))
        rep.add("annihilates_payoffs", worst, tol, f"{sub.dim} basis payoffs")
        mc = is_martingale(X, v.state, tol)
        rep.add("martingale", mc.residual, tol, "sigma(a dX a*) = 0 on level bases")
        return rep
    if v.outcome is Outcome.ARBITRAGE:
        if v.strategy is None or v.payoff is None:
            rep.add("certificate_present", 1.0, 0.0, passed=False)
            return rep
        k = v.payoff
        rep.extend(validate_adapted(v.strategy, tol), prefix="strategy.")
        recon = stochastic_integral(v.strategy, X)
        rep.add("payoff_reconstruction", gns_norm(alg, recon - k), tol, "||int S # dX - k||_2")
        rep.add("payoff_self_adjoint", self_adjoint_residual(alg, k), tol)
        lam = min_eigenvalue(alg, k)
        rep.add("payoff_positive", max(0.0, -lam), tol, f"min eigenvalue {lam:.3e}")
        rep.add("payoff_unit_trace", abs(trace(alg, k) - 1.0), tol)
        return rep
    rep.add("certificate_present", 1.0, 0.0, "UNDECIDED carries no certificate", passed=False)
    return rep


# ---------------------------------------------------------------------------
# commutative baseline


@dataclass
class ClassicalVerdict:
    outcome: Outcome
    leaf_probabilities: np.ndarray | None = None
    arbitrage_node: tuple[int, int] | None = None     # (depth, index within depth)


def _node_vertices(s: float, nxt: Sequence[float], rtol: float = 1e-12) -> list[np.ndarray]:
    """Vertices of {q >= 0, sum q = 1, sum q_j nxt_j = s}."""
    b = len(nxt)
    eps = rtol * max(1.0, abs(s))
    verts = []
    for j in range(b):
        if abs(nxt[j] - s) <= eps:
            q = np.zeros(b)
            q[j] = 1.0
            verts.append(q)
    for i, j in itertools.combinations(range(b), 2):
        lo, hi = (i, j) if nxt[i] < nxt[j] else (j, i)
        if nxt[lo] < s - eps and nxt[hi] > s + eps:
            q = np.zeros(b)
            q[lo] = (nxt[hi] - s) / (nxt[hi] - nxt[lo])
            q[hi] = 1.0 - q[lo]
            verts.append(q)
    return verts


def classical_oracle(tree: ClassicalTree) -> ClassicalVerdict:
    """Brute-force commutative verdict for a small tree (<= 4 periods, <= 3 branches).

    At every node the one-period martingale measures form a polytope whose
    vertices are enumerated; the barycentre of all vertices is strictly
    positive iff a strictly positive measure exists at that node.  Leaf
    probabilities are products along paths.
    """
    if tree.periods > 4 or tree.max_branching > 3:
        raise DomainError("classical oracle is limited to <= 4 periods and <= 3 branches per node")
    disc = 1.0 + tree.rate
    probs = {id(tree.root): 1.0}
    for depth, level in enumerate(tree.levels()[:-1]):
        for idx, node in enumerate(level):
            s = node.price / disc ** depth
            nxt = [ch.price / disc ** (depth + 1) for ch in node.children]
            verts = _node_vertices(s, nxt)
            if not verts:
                return ClassicalVerdict(Outcome.ARBITRAGE, arbitrage_node=(depth, idx))
            q = np.mean(verts, axis=0)
            if np.any(q <= 0.0):
                return ClassicalVerdict(Outcome.ARBITRAGE, arbitrage_node=(depth, idx))
            for ch, qj in zip(node.children, q):
                probs[id(ch)] = probs[id(node)] * qj
    leaves = tree.levels()[-1]
    return ClassicalVerdict(Outcome.EMS, leaf_probabilities=np.array([probs[id(l)] for l in leaves]))
