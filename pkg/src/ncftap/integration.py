"""Adapted processes, simple biprocesses and the sharp stochastic integral.

Time is the filtration's grid ``t_0 < ... < t_m``.  A simple biprocess is
constant on each ``[t_k, t_{k+1})`` and stored as a list of pairs
``(A_j, B_j)`` per step, standing for ``sum_j A_j (x) B_j``; it acts on an
increment by ``(A (x) B) # dX = A dX B``.  Trading strategies are the
symmetric case ``sum_j alpha_j a_j (x) a_j^*`` with real ``alpha_j``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .algebra import (
    DEFAULT_TOL,
    AlgebraElement,
    Filtration,
    gns_norm,
    projection_residual,
    self_adjoint_residual,
)
from .errors import DomainError, StructuralError
from .validation import ValidationReport

__all__ = [
    "AdaptedProcess",
    "SimpleBiprocess",
    "TradingStrategy",
    "GeneratorBatch",
    "stochastic_integral",
    "stopped_integral",
    "running_integral",
    "biprocess_adjoint",
    "strategy_to_biprocess",
    "identity_strategy",
    "validate_adapted",
    "payoff_generators",
]


def _same_filtration(f: Filtration, g: Filtration) -> bool:
    if f is g:
        return True
    if f.algebra != g.algebra or f.times != g.times:
        return False
    return all(a.dim == b.dim and np.allclose(a.matrix, b.matrix, atol=1e-12)
               for a, b in zip(f.levels, g.levels))


class AdaptedProcess:
    """Values ``X_{t_0}, ..., X_{t_m}`` on a filtration's grid."""

    def __init__(self, filtration: Filtration, values: Sequence[AlgebraElement]):
        values = tuple(values)
        if len(values) != len(filtration.times):
            raise StructuralError(
                f"process has {len(values)} values for {len(filtration.times)} filtration times")
        for v in values:
            filtration.algebra.check(v)
        self.filtration = filtration
        self.values = values

    @property
    def algebra(self):
        return self.filtration.algebra

    def increment(self, k: int) -> AlgebraElement:
        return self.values[k + 1] - self.values[k]

    def increments(self) -> list[AlgebraElement]:
        return [self.increment(k) for k in range(self.filtration.steps)]

    def scaled(self, c: float) -> "AdaptedProcess":
        return AdaptedProcess(self.filtration, [c * v for v in self.values])


Pair = tuple[AlgebraElement, AlgebraElement]


class SimpleBiprocess:
    """Per-step pair lists ``[(A_j, B_j), ...]`` for ``sum_j A_j (x) B_j``."""

    def __init__(self, filtration: Filtration, steps: Sequence[Sequence[Pair]]):
        steps = tuple(tuple((a, b) for a, b in step) for step in steps)
        if len(steps) != filtration.steps:
            raise StructuralError(f"biprocess has {len(steps)} steps, filtration has {filtration.steps}")
        for step in steps:
            for a, b in step:
                filtration.algebra.check(a)
                filtration.algebra.check(b)
        self.filtration = filtration
        self.steps = steps

    def scaled(self, c: complex) -> "SimpleBiprocess":
        return SimpleBiprocess(self.filtration, [[(c * a, b) for a, b in s] for s in self.steps])

    def __add__(self, other: "SimpleBiprocess") -> "SimpleBiprocess":
        if not _same_filtration(self.filtration, other.filtration):
            raise StructuralError("biprocesses live on different filtrations")
        return SimpleBiprocess(self.filtration, [s + o for s, o in zip(self.steps, other.steps)])


class TradingStrategy:
    """Per-step lists ``[(alpha_j, a_j), ...]`` for ``sum_j alpha_j a_j (x) a_j^*``."""

    def __init__(self, filtration: Filtration, steps: Sequence[Sequence[tuple[float, AlgebraElement]]]):
        out = []
        for step in steps:
            row = []
            for alpha, a in step:
                if isinstance(alpha, complex) or np.iscomplexobj(alpha):
                    if abs(np.imag(alpha)) > 0:
                        raise DomainError(f"strategy weights must be real, got {alpha}")
                    alpha = np.real(alpha)
                filtration.algebra.check(a)
                row.append((float(alpha), a))
            out.append(tuple(row))
        if len(out) != filtration.steps:
            raise StructuralError(f"strategy has {len(out)} steps, filtration has {filtration.steps}")
        self.filtration = filtration
        self.steps = tuple(out)

    @property
    def size(self) -> int:
        return sum(len(s) for s in self.steps)


Integrand = Union[SimpleBiprocess, TradingStrategy]


def strategy_to_biprocess(S: TradingStrategy) -> SimpleBiprocess:
    """Fold each real weight into the left leg: ``(alpha a, a^*)``."""
    return SimpleBiprocess(S.filtration, [[(alpha * a, a.H) for alpha, a in step] for step in S.steps])


def identity_strategy(filtration: Filtration) -> TradingStrategy:
    """Hold one unit (``a = I``, ``alpha = 1``) over every interval."""
    one = filtration.algebra.identity()
    return TradingStrategy(filtration, [[(1.0, one)] for _ in range(filtration.steps)])


def _as_biprocess(H: Integrand) -> SimpleBiprocess:
    if isinstance(H, TradingStrategy):
        return strategy_to_biprocess(H)
    if isinstance(H, SimpleBiprocess):
        return H
    raise StructuralError(f"expected a biprocess or strategy, got {type(H).__name__}")


def _sharp_sum(pairs, dX: AlgebraElement, zero: AlgebraElement) -> AlgebraElement:
    acc = zero
    for a, b in pairs:
        acc = acc + a @ dX @ b
    return acc


def stopped_integral(H: Integrand, s: float, t: float, X: AdaptedProcess) -> AlgebraElement:
    """Integral of ``H`` restricted to ``[s, t)``; ``s`` and ``t`` must be grid times."""
    H = _as_biprocess(H)
    f = X.filtration
    if not _same_filtration(H.filtration, f):
        raise StructuralError("integrand and integrator live on different filtrations")
    if s > t:
        raise DomainError(f"stopping window needs s <= t, got s={s}, t={t}")
    i, j = f.index(s), f.index(t)
    acc = f.algebra.zero()
    for k in range(i, j):
        if H.steps[k]:
            acc = _sharp_sum(H.steps[k], X.increment(k), acc)
    return acc


def stochastic_integral(H: Integrand, X: AdaptedProcess) -> AlgebraElement:
    """``sum_k sum_j A_{j,k} (X_{t_{k+1}} - X_{t_k}) B_{j,k}``."""
    f = X.filtration
    return stopped_integral(H, f.times[0], f.times[-1], X)


def running_integral(H: Integrand, X: AdaptedProcess) -> AdaptedProcess:
    """The process ``t_k -> (H # X)_{t_k}``, built incrementally."""
    H = _as_biprocess(H)
    f = X.filtration
    if not _same_filtration(H.filtration, f):
        raise StructuralError("integrand and integrator live on different filtrations")
    vals = [f.algebra.zero()]
    for k in range(f.steps):
        vals.append(_sharp_sum(H.steps[k], X.increment(k), vals[-1]))
    return AdaptedProcess(f, vals)


def biprocess_adjoint(H: Integrand) -> SimpleBiprocess:
    """``(sum A_j (x) B_j)^* = sum B_j^* (x) A_j^*``."""
    H = _as_biprocess(H)
    return SimpleBiprocess(H.filtration, [[(b.H, a.H) for a, b in step] for step in H.steps])


def validate_adapted(obj: Union[AdaptedProcess, SimpleBiprocess, TradingStrategy],
                     tol: float = DEFAULT_TOL) -> ValidationReport:
    """Per-step adaptedness residuals (and self-adjointness for processes)."""
    f = obj.filtration
    alg = f.algebra
    if isinstance(obj, AdaptedProcess):
        rep = ValidationReport("adapted process")
        for k, x in enumerate(obj.values):
            rep.add(f"self_adjoint[t{k}]", self_adjoint_residual(alg, x), tol)
            rep.add(f"adapted[t{k}]", projection_residual(alg, x, f.levels[k]), tol,
                    f"X_t{k} in A_t{k}")
        return rep
    rep = ValidationReport("adapted biprocess" if isinstance(obj, SimpleBiprocess) else "adapted strategy")
    for k, step in enumerate(obj.steps):
        worst = 0.0
        legs = [leg for pair in step for leg in ((pair[0], pair[1]) if isinstance(obj, SimpleBiprocess)
                                                  else (pair[1],))]
        for leg in legs:
            worst = max(worst, projection_residual(alg, leg, f.levels[k]))
        rep.add(f"adapted[step{k}]", worst, tol, f"{len(step)} terms in A_t{k}")
    return rep


# ---------------------------------------------------------------------------
# one-step strategy payoffs  a dX_k a^*


@dataclass(frozen=True)
class GeneratorBatch:
    """Payoffs ``a dX_k a^*`` for a batch of positions ``a`` at step ``k``.

    ``a`` and ``payoff`` hold flat coordinates, one row per generator.
    Rows follow the order ``b_i``, then ``b_i + b_j`` and ``b_i + 1j b_j``
    for ``i < j``, over the step's level basis ``b``.
    """

    step: int
    a: np.ndarray
    payoff: np.ndarray

    def __len__(self) -> int:
        return self.a.shape[0]


def _polarisation_positions(basis_flat: np.ndarray) -> np.ndarray:
    d = basis_flat.shape[0]
    iu, ju = np.triu_indices(d, k=1)
    return np.concatenate([basis_flat,
                           basis_flat[iu] + basis_flat[ju],
                           basis_flat[iu] + 1j * basis_flat[ju]])


def payoff_generators(X: AdaptedProcess) -> list[GeneratorBatch]:
    """Generators of the real span of all one-step strategy payoffs.

    For each step with a non-zero increment, ``g(a) = a dX_k a^*`` over the
    polarisation positions of the level-``k`` basis.  Their real span equals
    that of ``{a dX_k a^* : a in A_{t_k}}``.
    """
    f = X.filtration
    alg = f.algebra
    out = []
    for k in range(f.steps):
        dX = X.increment(k)
        if gns_norm(alg, dX) == 0.0:
            continue
        pos = _polarisation_positions(f.levels[k].flat_basis)
        dflat = alg.flat(dX)
        parts = []
        for n, off in zip(alg.block_dims, alg.layout.offsets):
            A = pos[:, off:off + n * n].reshape(-1, n, n)
            D = dflat[off:off + n * n].reshape(n, n)
            parts.append((A @ D[None] @ np.conj(np.swapaxes(A, 1, 2))).reshape(-1, n * n))
        out.append(GeneratorBatch(k, pos, np.concatenate(parts, axis=1)))
    return out
