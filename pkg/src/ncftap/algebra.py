"""Finite-dimensional W*-probability spaces.

A finite von Neumann algebra with a faithful tracial state is modelled in its
normal form: a direct sum of full matrix blocks ``M_{n_1} + ... + M_{n_K}``
with trace ``tau(x) = sum_k w_k Tr(x_k)`` and ``sum_k w_k n_k = 1``.
Subalgebras are presented by bases that are orthonormal for the GNS inner
product ``<x, y> = tau(x^* y)``; the conditional expectation onto a subalgebra
is the orthogonal projection, which is the unique trace-preserving one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .errors import DomainError, StructuralError
from .validation import ValidationReport

DEFAULT_TOL = 1e-8
GS_RTOL = 1e-8

__all__ = [
    "AlgebraElement",
    "MultiMatrixAlgebra",
    "Subalgebra",
    "Filtration",
    "trace",
    "lp_norm",
    "gns_inner",
    "gns_norm",
    "make_subalgebra",
    "full_subalgebra",
    "scalar_subalgebra",
    "conditional_expectation",
    "projection_residual",
    "check_positive",
    "min_eigenvalue",
    "self_adjoint_residual",
    "validate_subalgebra",
    "validate_filtration",
]


class AlgebraElement:
    """One complex matrix per block.  Immutable by convention."""

    __slots__ = ("blocks",)
    __array_priority__ = 1000

    def __init__(self, blocks: Iterable[np.ndarray]):
        self.blocks = tuple(np.asarray(b, dtype=np.complex128) for b in blocks)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(b.shape[0] for b in self.blocks)

    @property
    def H(self) -> "AlgebraElement":
        return AlgebraElement(b.conj().T for b in self.blocks)

    def adjoint(self) -> "AlgebraElement":
        return self.H

    def _zip(self, other):
        if not isinstance(other, AlgebraElement):
            return NotImplemented
        if other.dims != self.dims:
            raise StructuralError(f"block shapes differ: {self.dims} vs {other.dims}")
        return zip(self.blocks, other.blocks)

    def __add__(self, other):
        pairs = self._zip(other)
        if pairs is NotImplemented:
            return NotImplemented
        return AlgebraElement(a + b for a, b in pairs)

    def __sub__(self, other):
        pairs = self._zip(other)
        if pairs is NotImplemented:
            return NotImplemented
        return AlgebraElement(a - b for a, b in pairs)

    def __neg__(self):
        return AlgebraElement(-b for b in self.blocks)

    def __mul__(self, scalar):
        if isinstance(scalar, AlgebraElement):
            raise TypeError("use @ for the algebra product")
        return AlgebraElement(scalar * b for b in self.blocks)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return AlgebraElement(b / scalar for b in self.blocks)

    def __matmul__(self, other):
        pairs = self._zip(other)
        if pairs is NotImplemented:
            return NotImplemented
        return AlgebraElement(a @ b for a, b in pairs)

    def hermitian_part(self) -> "AlgebraElement":
        return AlgebraElement(0.5 * (b + b.conj().T) for b in self.blocks)

    def allclose(self, other: "AlgebraElement", atol: float = 1e-12) -> bool:
        return self.dims == other.dims and all(
            np.allclose(a, b, rtol=0.0, atol=atol) for a, b in zip(self.blocks, other.blocks))

    def __repr__(self) -> str:
        return f"AlgebraElement(dims={self.dims})"


@dataclass(frozen=True, eq=False)
class MultiMatrixAlgebra:
    """Direct sum of matrix blocks with a weighted, normalised trace.

    Parameters
    ----------
    block_dims
        Block sizes ``n_k >= 1``.
    trace_weights
        Positive weights ``w_k``; rescaled so that ``sum_k w_k n_k = 1``.
        Defaults to ``w_k = n_k / sum_j n_j**2``.
    """

    block_dims: tuple[int, ...]
    trace_weights: tuple[float, ...] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        dims = tuple(int(n) for n in self.block_dims)
        if not dims or any(n < 1 for n in dims):
            raise DomainError(f"block dimensions must be positive, got {self.block_dims}")
        if self.trace_weights is None:
            total = sum(n * n for n in dims)
            weights = [n / total for n in dims]
        else:
            weights = [float(w) for w in self.trace_weights]
            if len(weights) != len(dims):
                raise StructuralError("one trace weight per block is required")
            if any(not np.isfinite(w) or w <= 0 for w in weights):
                raise DomainError("trace weights must be positive (faithful trace)")
            norm = sum(w * n for w, n in zip(weights, dims))
            # already-normalised weights are kept bit-for-bit (stable round trips)
            if abs(norm - 1.0) > 4 * np.finfo(float).eps * len(dims):
                weights = [w / norm for w in weights]
        object.__setattr__(self, "block_dims", dims)
        object.__setattr__(self, "trace_weights", tuple(weights))

    def __eq__(self, other):
        return (isinstance(other, MultiMatrixAlgebra) and self.block_dims == other.block_dims
                and np.allclose(self.trace_weights, other.trace_weights, rtol=1e-14, atol=0))

    def __hash__(self):
        return hash(self.block_dims)

    @property
    def total_dim(self) -> int:
        return sum(self.block_dims)

    @property
    def size(self) -> int:
        """Complex dimension of the algebra, ``sum n_k**2``."""
        return sum(n * n for n in self.block_dims)

    @cached_property
    def layout(self) -> kernels.HvecLayout:
        return kernels.HvecLayout(self.block_dims, self.trace_weights)

    @cached_property
    def _cscale(self) -> np.ndarray:
        return np.concatenate([np.full(n * n, np.sqrt(w))
                               for n, w in zip(self.block_dims, self.trace_weights)])

    # -- constructors -----------------------------------------------------
    def element(self, blocks) -> AlgebraElement:
        x = AlgebraElement(blocks)
        self.check(x)
        return x

    def zero(self) -> AlgebraElement:
        return AlgebraElement(np.zeros((n, n)) for n in self.block_dims)

    def identity(self) -> AlgebraElement:
        return AlgebraElement(np.eye(n) for n in self.block_dims)

    def scalar(self, c: complex) -> AlgebraElement:
        return AlgebraElement(c * np.eye(n) for n in self.block_dims)

    def matrix_unit(self, block: int, i: int, j: int) -> AlgebraElement:
        blocks = [np.zeros((n, n)) for n in self.block_dims]
        blocks[block][i, j] = 1.0
        return AlgebraElement(blocks)

    def central_projection(self, block: int) -> AlgebraElement:
        return AlgebraElement(np.eye(n) if k == block else np.zeros((n, n))
                              for k, n in enumerate(self.block_dims))

    def diagonal(self, entries: Sequence[complex]) -> AlgebraElement:
        """Element whose concatenated block diagonals are ``entries``."""
        entries = np.asarray(entries)
        if entries.shape != (self.total_dim,):
            raise StructuralError(f"need {self.total_dim} diagonal entries")
        out, pos = [], 0
        for n in self.block_dims:
            out.append(np.diag(entries[pos:pos + n]))
            pos += n
        return AlgebraElement(out)

    def random_element(self, rng: np.random.Generator, *, hermitian: bool = False) -> AlgebraElement:
        blocks = []
        for n in self.block_dims:
            b = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
            blocks.append(0.5 * (b + b.conj().T) if hermitian else b)
        return AlgebraElement(blocks)

    # -- coordinates ------------------------------------------------------
    def check(self, x: AlgebraElement) -> None:
        if not isinstance(x, AlgebraElement):
            raise StructuralError(f"expected AlgebraElement, got {type(x).__name__}")
        if x.dims != self.block_dims or any(b.shape != (n, n) for b, n in zip(x.blocks, self.block_dims)):
            raise StructuralError(f"element blocks {[b.shape for b in x.blocks]} do not match "
                                  f"algebra {self.block_dims}")

    def flat(self, x: AlgebraElement) -> np.ndarray:
        self.check(x)
        return np.concatenate([b.ravel() for b in x.blocks])

    def from_flat(self, v: np.ndarray) -> AlgebraElement:
        v = np.asarray(v)
        out, pos = [], 0
        for n in self.block_dims:
            out.append(v[pos:pos + n * n].reshape(n, n))
            pos += n * n
        return AlgebraElement(out)

    def cvec(self, x: AlgebraElement) -> np.ndarray:
        """Complex coordinates in which the GNS inner product is ``vdot``."""
        return self.flat(x) * self._cscale

    def from_cvec(self, v: np.ndarray) -> AlgebraElement:
        return self.from_flat(np.asarray(v) / self._cscale)

    def hvec(self, x: AlgebraElement) -> np.ndarray:
        """Real coordinates of the self-adjoint part; ``tau(x y) = hvec(x) @ hvec(y)``."""
        return self.layout.from_flat(self.flat(x))

    def from_hvec(self, h: np.ndarray) -> AlgebraElement:
        return self.from_flat(self.layout.to_flat(h))

    def stack(self, elements: Sequence[AlgebraElement], coords: str = "flat") -> np.ndarray:
        conv = {"flat": self.flat, "cvec": self.cvec, "hvec": self.hvec}[coords]
        if not elements:
            dtype = float if coords == "hvec" else complex
            return np.zeros((0, self.size), dtype=dtype)
        return np.stack([conv(x) for x in elements])


# ---------------------------------------------------------------------------
# scalar functionals


def trace(alg: MultiMatrixAlgebra, x: AlgebraElement) -> complex:
    """``tau(x) = sum_k w_k Tr(x_k)``."""
    alg.check(x)
    return complex(sum(w * np.trace(b) for w, b in zip(alg.trace_weights, x.blocks)))


def gns_inner(alg: MultiMatrixAlgebra, x: AlgebraElement, y: AlgebraElement) -> complex:
    """``<x, y> = tau(x^* y)``, antilinear in ``x``."""
    return complex(np.vdot(alg.cvec(x), alg.cvec(y)))


def gns_norm(alg: MultiMatrixAlgebra, x: AlgebraElement) -> float:
    return float(np.linalg.norm(alg.cvec(x)))


def lp_norm(alg: MultiMatrixAlgebra, x: AlgebraElement, p: float) -> float:
    """Non-commutative L^p norm ``tau(|x|^p)^(1/p)``; ``p = inf`` is the operator norm."""
    alg.check(x)
    p = float(p)
    if not p >= 1.0:
        raise DomainError(f"L^p norms need p >= 1, got {p}")
    svals = [np.linalg.svd(b, compute_uv=False) for b in x.blocks]
    if np.isinf(p):
        return float(max(s.max() for s in svals))
    total = sum(w * np.sum(s ** p) for w, s in zip(alg.trace_weights, svals))
    return float(total ** (1.0 / p))


def self_adjoint_residual(alg: MultiMatrixAlgebra, x: AlgebraElement) -> float:
    """``||x - x^*||_2``."""
    return gns_norm(alg, x - x.H)


def min_eigenvalue(alg: MultiMatrixAlgebra, x: AlgebraElement) -> float:
    """Smallest eigenvalue of the Hermitian part of ``x`` over all blocks."""
    alg.check(x)
    return float(min(np.linalg.eigvalsh(0.5 * (b + b.conj().T))[0] for b in x.blocks))


def check_positive(alg: MultiMatrixAlgebra, x: AlgebraElement, tol: float = DEFAULT_TOL) -> bool:
    """``x >= 0`` up to ``tol`` on the smallest eigenvalue."""
    res = self_adjoint_residual(alg, x)
    if res > tol:
        raise DomainError(f"positivity test needs a self-adjoint element (residual {res:.3e})")
    return min_eigenvalue(alg, x) >= -tol


# ---------------------------------------------------------------------------
# subalgebras


class Subalgebra:
    """Unital *-subalgebra given by a GNS-orthonormal basis.

    ``generators`` records the elements the subalgebra was generated from;
    it is what gets serialised.
    """

    def __init__(self, algebra: MultiMatrixAlgebra, basis_cvec: np.ndarray,
                 generators: Sequence[AlgebraElement] = ()):
        self.algebra = algebra
        mat = np.asarray(basis_cvec, dtype=np.complex128)
        if mat.ndim != 2 or mat.shape[1] != algebra.size:
            raise StructuralError("basis rows must be cvec coordinates of the algebra")
        self._mat = mat
        self.generators = tuple(generators)

    @property
    def dim(self) -> int:
        return self._mat.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        """Basis rows in cvec coordinates, shape ``(dim, algebra.size)``."""
        return self._mat

    @cached_property
    def basis(self) -> tuple[AlgebraElement, ...]:
        return tuple(self.algebra.from_cvec(r) for r in self._mat)

    @cached_property
    def flat_basis(self) -> np.ndarray:
        return self._mat / self.algebra._cscale

    @cached_property
    def gram_residual(self) -> float:
        G = self._mat.conj() @ self._mat.T
        return float(np.abs(G - np.eye(self.dim)).max()) if self.dim else 0.0

    def project_cvec(self, v: np.ndarray) -> np.ndarray:
        return (self._mat.conj() @ v) @ self._mat

    def contains(self, x: AlgebraElement, tol: float = DEFAULT_TOL) -> bool:
        return projection_residual(self.algebra, x, self) <= tol

    def __repr__(self) -> str:
        return f"Subalgebra(dim={self.dim}, algebra={self.algebra.block_dims})"


def _closure_products(alg: MultiMatrixAlgebra, rows_flat: np.ndarray,
                      gens_flat: np.ndarray) -> np.ndarray:
    """Flat coordinates of all products ``row * gen``."""
    r, g = rows_flat.shape[0], gens_flat.shape[0]
    pos = 0
    parts = []
    for n in alg.block_dims:
        A = rows_flat[:, pos:pos + n * n].reshape(r, 1, n, n)
        B = gens_flat[:, pos:pos + n * n].reshape(1, g, n, n)
        parts.append((A @ B).reshape(r * g, n * n))
        pos += n * n
    return np.concatenate(parts, axis=1)


def make_subalgebra(alg: MultiMatrixAlgebra, generators: Sequence[AlgebraElement] = (),
                    *, rtol: float = GS_RTOL, numba: bool | None = None) -> Subalgebra:
    """Smallest unital *-subalgebra containing ``generators``.

    The span of ``I``, the generators and their adjoints is repeatedly
    multiplied on the right by that same generating set and re-orthonormalised
    until the dimension stops growing.
    """
    gens = list(generators)
    for g in gens:
        alg.check(g)
    seed = [alg.identity()] + gens + [g.H for g in gens]
    seed_flat = alg.stack(seed, "flat")
    scale = alg._cscale
    basis = kernels.mgs_extend(np.zeros((0, alg.size)), seed_flat * scale, rtol, numba=numba)
    frontier = basis
    while frontier.shape[0] and basis.shape[0] < alg.size:
        cands = _closure_products(alg, frontier / scale, seed_flat) * scale
        grown = kernels.mgs_extend(basis, cands, rtol, numba=numba)
        frontier = grown[basis.shape[0]:]
        basis = grown
    return Subalgebra(alg, basis, gens)


def full_subalgebra(alg: MultiMatrixAlgebra) -> Subalgebra:
    """The whole algebra, with matrix units as basis.

    Generators are the central projections and the super-diagonal matrix units
    of each block, which generate everything.
    """
    rows = np.eye(alg.size, dtype=np.complex128)
    gens = []
    for k, n in enumerate(alg.block_dims):
        gens.append(alg.central_projection(k))
        gens.extend(alg.matrix_unit(k, i, i + 1) for i in range(n - 1))
    return Subalgebra(alg, rows, gens)


def scalar_subalgebra(alg: MultiMatrixAlgebra) -> Subalgebra:
    """``C I``; its basis element is ``I`` itself (``tau(I) = 1``)."""
    return Subalgebra(alg, alg.cvec(alg.identity())[None, :], ())


def _require_valid(sub: Subalgebra, tol: float = DEFAULT_TOL) -> None:
    if sub.dim == 0 or sub.gram_residual > tol:
        raise StructuralError(f"subalgebra basis is not orthonormal (Gram residual {sub.gram_residual:.3e})")
    ident = sub.algebra.cvec(sub.algebra.identity())
    if np.linalg.norm(ident - sub.project_cvec(ident)) > tol:
        raise StructuralError("subalgebra does not contain the identity")


def conditional_expectation(alg: MultiMatrixAlgebra, x: AlgebraElement, sub: Subalgebra) -> AlgebraElement:
    """Trace-preserving conditional expectation ``E[x | sub]`` (GNS projection)."""
    if sub.algebra != alg:
        raise StructuralError("subalgebra belongs to a different algebra")
    _require_valid(sub)
    return alg.from_cvec(sub.project_cvec(alg.cvec(x)))


def projection_residual(alg: MultiMatrixAlgebra, x: AlgebraElement, sub: Subalgebra) -> float:
    """``||x - E[x | sub]||_2``."""
    v = alg.cvec(x)
    return float(np.linalg.norm(v - sub.project_cvec(v)))


_PAIR_BUDGET = 5e7


def validate_subalgebra(sub: Subalgebra, tol: float = DEFAULT_TOL, *,
                        rng: np.random.Generator | None = None) -> ValidationReport:
    """Check orthonormality, unitality, and closure under adjoint and product.

    Product closure is tested on all basis pairs while that costs less than
    ``5e7`` block flops; beyond that, 64 random pairs of random combinations
    are tested instead (a non-closed span fails almost surely).
    """
    alg = sub.algebra
    rep = ValidationReport("subalgebra")
    rep.add("gram", sub.gram_residual, tol, f"dim={sub.dim}")
    ident = alg.cvec(alg.identity())
    rep.add("identity", np.linalg.norm(ident - sub.project_cvec(ident)) if sub.dim else 1.0, tol)
    if sub.dim == 0:
        return rep
    flat = sub.flat_basis
    adj = np.concatenate([
        np.conj(np.swapaxes(flat[:, off:off + n * n].reshape(-1, n, n), 1, 2)).reshape(-1, n * n)
        for n, off in zip(alg.block_dims, alg.layout.offsets)], axis=1) * alg._cscale
    res_adj = adj - (adj @ sub.matrix.conj().T) @ sub.matrix
    rep.add("adjoint_closure", np.linalg.norm(res_adj, axis=1).max(), tol)
    cost = sub.dim ** 2 * sum(n ** 3 for n in alg.block_dims)
    if cost <= _PAIR_BUDGET:
        left, right = flat, flat
        detail = "all pairs"
    else:
        rng = np.random.default_rng(0) if rng is None else rng
        coef = rng.standard_normal((2, 64, sub.dim)) + 1j * rng.standard_normal((2, 64, sub.dim))
        coef /= np.linalg.norm(coef, axis=2, keepdims=True)
        left, right = coef[0] @ flat, coef[1] @ flat
        detail = "64 random pairs"
    worst = 0.0
    for row in left:
        prods = _closure_products(alg, row[None, :], right) * alg._cscale
        resid = prods - (prods @ sub.matrix.conj().T) @ sub.matrix
        worst = max(worst, float(np.linalg.norm(resid, axis=1).max()))
    rep.add("product_closure", worst, tol, detail)
    return rep


# ---------------------------------------------------------------------------
# filtrations


class Filtration:
    """Increasing unital *-subalgebras on a discrete time grid ``t_0 = 0 < ... < t_m``."""

    def __init__(self, algebra: MultiMatrixAlgebra, times: Sequence[float], levels: Sequence[Subalgebra]):
        times = tuple(float(t) for t in times)
        levels = tuple(levels)
        if len(times) != len(levels) or not times:
            raise StructuralError("need one subalgebra per time stamp")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise DomainError(f"filtration times must be strictly increasing, got {times}")
        if any(lev.algebra != algebra for lev in levels):
            raise StructuralError("filtration level lives in a different algebra")
        self.algebra = algebra
        self.times = times
        self.levels = levels

    @property
    def steps(self) -> int:
        """Number of trading intervals ``m``."""
        return len(self.times) - 1

    def index(self, t: float, tol: float = 1e-12) -> int:
        """Grid index of time ``t``; raises for off-grid times."""
        for k, s in enumerate(self.times):
            if abs(s - t) <= tol * max(1.0, abs(s)):
                return k
        raise DomainError(f"time {t} is not on the filtration grid {self.times}")

    def __repr__(self) -> str:
        return f"Filtration(times={self.times}, dims={[l.dim for l in self.levels]})"


def validate_filtration(f: Filtration, tol: float = DEFAULT_TOL) -> ValidationReport:
    """Level-0 is ``C I``, every level is a subalgebra, and levels are nested."""
    rep = ValidationReport("filtration")
    rep.add("times_start_at_zero", abs(f.times[0]), tol)
    lvl0 = f.levels[0]
    rep.add("level0_dimension", abs(lvl0.dim - 1), 0.5, f"dim={lvl0.dim}")
    for k, lev in enumerate(f.levels):
        rep.extend(validate_subalgebra(lev, tol), prefix=f"level{k}.")
    for k in range(f.steps):
        lo, hi = f.levels[k], f.levels[k + 1]
        if lo.dim == 0:
            continue
        resid = lo.matrix - (lo.matrix @ hi.matrix.conj().T) @ hi.matrix
        rep.add(f"inclusion_{k}_{k + 1}", np.linalg.norm(resid, axis=1).max(), tol,
                f"A_{k} in A_{k + 1}")
    return rep
