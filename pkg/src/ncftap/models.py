"""Market generators: classical trees, quantum binomial markets, random markets.

Every generator returns ``(filtration, process)`` with the process holding
discounted prices, so the riskless rate only enters here.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .algebra import (
    AlgebraElement,
    Filtration,
    MultiMatrixAlgebra,
    Subalgebra,
    conditional_expectation,
    full_subalgebra,
    make_subalgebra,
    scalar_subalgebra,
)
from .errors import DomainError
from .integration import AdaptedProcess

MAX_CLASSICAL_LEAVES = 81
MAX_QB_PERIODS = 6
MAX_RANDOM_DIM = 64

__all__ = [
    "ClassicalNode",
    "ClassicalTree",
    "binomial_tree",
    "trinomial_tree",
    "embed_classical",
    "QuantumBinomialSpec",
    "quantum_binomial",
    "random_market",
]


# ---------------------------------------------------------------------------
# classical trees


@dataclass(frozen=True)
class ClassicalNode:
    price: float
    children: tuple["ClassicalNode", ...] = ()

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass(frozen=True)
class ClassicalTree:
    """Finite scenario tree of undiscounted prices with a per-period riskless rate."""

    root: ClassicalNode
    rate: float = 0.0

    def __post_init__(self):
        if self.rate <= -1:
            raise DomainError("rate must exceed -1")
        depths = set()
        stack = [(self.root, 0)]
        while stack:
            node, d = stack.pop()
            if not node.price > 0:
                raise DomainError(f"prices must be positive, got {node.price}")
            if node.is_leaf:
                depths.add(d)
            stack.extend((ch, d + 1) for ch in node.children)
        if len(depths) != 1:
            raise DomainError("all leaves must sit at the same depth")

    def levels(self) -> list[list[ClassicalNode]]:
        """Nodes by depth, left to right."""
        out = [[self.root]]
        while out[-1][0].children:
            out.append([ch for n in out[-1] for ch in n.children])
        return out

    @property
    def periods(self) -> int:
        return len(self.levels()) - 1

    @property
    def max_branching(self) -> int:
        return max((len(n.children) for lev in self.levels() for n in lev), default=0)

    @property
    def n_leaves(self) -> int:
        return len(self.levels()[-1])


def _grow(price: float, factors: Sequence[float], periods: int) -> ClassicalNode:
    if periods == 0:
        return ClassicalNode(price)
    return ClassicalNode(price, tuple(_grow(price * f, factors, periods - 1) for f in factors))


def binomial_tree(s0: float, up: float, down: float, rate: float, periods: int) -> ClassicalTree:
    """Non-recombining binomial tree (up branch first)."""
    return ClassicalTree(_grow(s0, (up, down), periods), rate)


def trinomial_tree(s0: float, up: float, mid: float, down: float, rate: float,
                   periods: int) -> ClassicalTree:
    return ClassicalTree(_grow(s0, (up, mid, down), periods), rate)


def embed_classical(tree: ClassicalTree) -> tuple[Filtration, AdaptedProcess]:
    """Diagonal embedding of a tree into ``M_N``, ``N`` = number of leaves.

    Level ``k`` is generated by the indicator projections of the depth-``k``
    nodes (as sets of leaves); ``X_k`` is the discounted price of each leaf's
    depth-``k`` ancestor, on the diagonal.
    """
    levels = tree.levels()
    n = len(levels[-1])
    if n > MAX_CLASSICAL_LEAVES:
        raise DomainError(f"tree has {n} leaves; at most {MAX_CLASSICAL_LEAVES} are supported")
    alg = MultiMatrixAlgebra((n,))
    disc = 1.0 + tree.rate
    # leaf ranges of every node, filled bottom-up
    span: dict[int, tuple[int, int]] = {id(leaf): (i, i + 1) for i, leaf in enumerate(levels[-1])}
    for lev in reversed(levels[:-1]):
        for node in lev:
            span[id(node)] = (span[id(node.children[0])][0], span[id(node.children[-1])][1])
    subs: list[Subalgebra] = []
    values: list[AlgebraElement] = []
    for k, lev in enumerate(levels):
        gens, diag = [], np.zeros(n)
        for node in lev:
            lo, hi = span[id(node)]
            ind = np.zeros(n)
            ind[lo:hi] = 1.0
            gens.append(alg.diagonal(ind))
            diag[lo:hi] = node.price / disc ** k
        subs.append(scalar_subalgebra(alg) if k == 0 else make_subalgebra(alg, gens))
        values.append(alg.diagonal(diag))
    f = Filtration(alg, range(len(levels)), subs)
    return f, AdaptedProcess(f, values)


# ---------------------------------------------------------------------------
# quantum binomial


@dataclass(frozen=True)
class QuantumBinomialSpec:
    """One qubit per period; period ``j`` measures in a basis rotated by ``basis_angle[j]``."""

    periods: int
    up: float
    down: float
    rate: float = 0.0
    basis_angle: tuple[float, ...] | float = 0.0
    s0: float = 1.0

    def __post_init__(self):
        if self.periods < 1:
            raise DomainError("need at least one period")
        if self.periods > MAX_QB_PERIODS:
            raise DomainError(f"at most {MAX_QB_PERIODS} periods (algebra dimension 2**periods)")
        if not (0 < self.down < self.up):
            raise DomainError(f"need 0 < down < up, got down={self.down}, up={self.up}")
        if self.rate < 0:
            raise DomainError("rate must be non-negative")
        if self.s0 <= 0:
            raise DomainError("initial price must be positive")
        ang = self.basis_angle
        ang = (float(ang),) * self.periods if np.isscalar(ang) else tuple(float(a) for a in ang)
        if len(ang) != self.periods:
            raise DomainError(f"need {self.periods} basis angles, got {len(ang)}")
        object.__setattr__(self, "basis_angle", ang)

    def factor(self, j: int) -> np.ndarray:
        """Rotated one-period price factor ``R diag(u, d) R^T`` for period ``j``."""
        c, s = np.cos(self.basis_angle[j]), np.sin(self.basis_angle[j])
        R = np.array([[c, -s], [s, c]])
        return R @ np.diag([self.up, self.down]) @ R.T


_PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]])
_PAULI_Z = np.diag([1.0, -1.0])


def _kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    out = np.eye(1)
    for m in mats:
        out = np.kron(out, m)
    return out


def _tensor_level(alg: MultiMatrixAlgebra, periods: int, k: int) -> Subalgebra:
    """``M_2^{(x)k} (x) I``: basis ``2^{k/2} e_ij (x) I`` built directly."""
    if k == 0:
        return scalar_subalgebra(alg)
    if k == periods:
        return full_subalgebra(alg)
    m, rest = 2 ** k, 2 ** (periods - k)
    eye2 = np.eye(2)
    gens = []
    for q in range(k):
        for p in (_PAULI_X, _PAULI_Z):
            gens.append(AlgebraElement([_kron_all([p if j == q else eye2 for j in range(periods)])]))
    units = np.zeros((m * m, m, m))
    units[np.arange(m * m), np.repeat(np.arange(m), m), np.tile(np.arange(m), m)] = 1.0
    rows = np.stack([np.kron(u, np.eye(rest)).ravel() for u in units]).astype(np.complex128)
    rows *= np.sqrt(m) * alg._cscale
    return Subalgebra(alg, rows, gens)


def quantum_binomial(spec: QuantumBinomialSpec) -> tuple[Filtration, AdaptedProcess]:
    """Quantum binomial market on ``M_{2^P}`` with tensor filtration.

    ``X_k = s0 (1+r)^{-k} F_1 (x) ... (x) F_k (x) I`` where each ``F_j`` is the
    price factor ``diag(u, d)`` expressed in period ``j``'s rotated basis.  All
    angles zero gives the diagonal embedding of the binomial tree.
    """
    P = spec.periods
    alg = MultiMatrixAlgebra((2 ** P,))
    eye2 = np.eye(2)
    levels = [_tensor_level(alg, P, k) for k in range(P + 1)]
    values = []
    for k in range(P + 1):
        mats = [spec.factor(j) if j < k else eye2 for j in range(P)]
        values.append(AlgebraElement([spec.s0 / (1.0 + spec.rate) ** k * _kron_all(mats)]))
    f = Filtration(alg, range(P + 1), levels)
    return f, AdaptedProcess(f, values)


# ---------------------------------------------------------------------------
# random markets


def _random_projection(alg: MultiMatrixAlgebra, rng: np.random.Generator) -> AlgebraElement:
    """Random low-rank projection inside one random block."""
    b = int(rng.integers(len(alg.block_dims)))
    n = alg.block_dims[b]
    rank = int(rng.integers(1, max(1, n // 2) + 1))
    z = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    q, _ = np.linalg.qr(z)
    blocks = [np.zeros((m, m), dtype=complex) for m in alg.block_dims]
    blocks[b] = q @ q.conj().T
    return AlgebraElement(blocks)


def _centred_directions(alg: MultiMatrixAlgebra, level: Subalgebra, nxt: Subalgebra,
                        rho: AlgebraElement) -> np.ndarray:
    """hvec basis of self-adjoint ``d`` in ``nxt`` with ``tau(rho b_i d b_j^*) = 0`` on ``level``."""
    lay = alg.layout
    herm = []
    for b in nxt.basis:
        herm.append(alg.hvec(b.hermitian_part()))
        herm.append(alg.hvec((1j * b).hermitian_part()))
    u, s, _ = np.linalg.svd(np.array(herm).T, full_matrices=False)
    V = u[:, s > 1e-10 * s[0]]
    d = level.dim
    flat = level.flat_basis
    # one functional per pair (i, j), summed over blocks
    re_part = np.zeros((d * d, alg.size), dtype=complex)
    im_part = np.zeros((d * d, alg.size), dtype=complex)
    for n, off, r in zip(alg.block_dims, lay.offsets, rho.blocks):
        B = flat[:, off:off + n * n].reshape(d, n, n)
        # Z_ij = b_j^* rho b_i, so that tau(rho b_i x b_j^*) = tau(Z_ij x)
        Z = np.einsum("jba,ibc->ijac", B.conj(), r @ B).reshape(d * d, n, n)
        for W, out in ((Z, re_part), (-1j * Z, im_part)):
            H = 0.5 * (W + np.conj(np.swapaxes(W, 1, 2)))
            out[:, off:off + n * n] = H.reshape(d * d, n * n)
    C = np.concatenate([lay.from_flat(re_part), lay.from_flat(im_part)]) @ V
    _, s, vt = np.linalg.svd(C, full_matrices=True)
    rank = int(np.sum(s > 1e-10 * max(1.0, s[0] if s.size else 0.0)))
    return V @ vt[rank:].T


def random_market(seed: int, block_dims: Sequence[int], periods: int) -> tuple[Filtration, AdaptedProcess]:
    """Seeded random market with nested random levels.

    Level 0 is ``C I`` and the last level is the whole algebra; each
    intermediate level adds one random low-rank projection to the previous
    level's generators.  ``X_0`` is a random multiple of ``I``.  Each increment
    is a random self-adjoint element of the next level, centred under a
    hidden random faithful state.  With probability 1/2 one randomly chosen
    increment is then perturbed by an uncentred random element of the same
    level, of random relative size, so both verdicts occur at every horizon.
    """
    block_dims = tuple(int(n) for n in block_dims)
    if sum(block_dims) > MAX_RANDOM_DIM:
        raise DomainError(f"total dimension {sum(block_dims)} exceeds {MAX_RANDOM_DIM}")
    if periods < 1:
        raise DomainError("need at least one period")
    rng = np.random.default_rng(seed)
    weights = None
    if len(block_dims) > 1:
        weights = tuple(float(w) for w in rng.uniform(0.5, 2.0, len(block_dims)))
    alg = MultiMatrixAlgebra(block_dims, weights)
    levels = [scalar_subalgebra(alg)]
    gens: list[AlgebraElement] = []
    for _ in range(1, periods):
        gens = gens + [_random_projection(alg, rng)]
        levels.append(make_subalgebra(alg, gens))
    levels.append(full_subalgebra(alg))
    f = Filtration(alg, range(periods + 1), levels)
    g = alg.random_element(rng)
    rho = g.H @ g + alg.scalar(0.1)
    values = [alg.scalar(float(rng.uniform(0.5, 2.0)))]
    perturbed = int(rng.integers(periods)) if rng.random() < 0.5 else -1
    for k in range(periods):
        N = _centred_directions(alg, levels[k], levels[k + 1], rho)
        step = alg.from_hvec(N @ rng.standard_normal(N.shape[1])) if N.shape[1] else alg.zero()
        if k == perturbed:
            noise = conditional_expectation(alg, alg.random_element(rng, hermitian=True), levels[k + 1])
            step = step + noise.hermitian_part() * float(10.0 ** rng.uniform(-2.0, 0.5))
        values.append(values[-1] + step.hermitian_part())
    return f, AdaptedProcess(f, values)
