"""States given by densities, and the state-martingale property.

A normal state is ``sigma(x) = tau(rho x)`` for a density ``rho >= 0`` with
``tau(rho) = 1``.  A process ``M`` is a martingale under ``sigma`` when
``sigma(a M_t a^*) = sigma(a M_s a^*)`` for all ``a`` in ``A_s`` and ``s <= t``.
No conditional expectation with respect to ``sigma`` is ever formed.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import kernels
from .algebra import (
    DEFAULT_TOL,
    AlgebraElement,
    MultiMatrixAlgebra,
    lp_norm,
    min_eigenvalue,
    self_adjoint_residual,
    trace,
)
from .errors import DomainError, StructuralError
from .integration import (
    AdaptedProcess,
    Integrand,
    payoff_generators,
    running_integral,
)

DEFAULT_TOL_POS = 1e-6

__all__ = [
    "DEFAULT_TOL_POS",
    "State",
    "MartingaleCheck",
    "is_martingale",
    "zero_integral_criterion",
    "integral_martingale_check",
]


class State:
    """Normal state ``x -> tau(rho x)``.

    Raises :class:`DomainError` unless ``rho`` is self-adjoint, positive and of
    unit trace within ``tol``.
    """

    def __init__(self, algebra: MultiMatrixAlgebra, density: AlgebraElement, tol: float = DEFAULT_TOL):
        algebra.check(density)
        sa = self_adjoint_residual(algebra, density)
        if sa > tol:
            raise DomainError(f"density is not self-adjoint (residual {sa:.3e})")
        density = density.hermitian_part()
        lam = min_eigenvalue(algebra, density)
        if lam < -tol:
            raise DomainError(f"density is not positive (min eigenvalue {lam:.3e})")
        tr = trace(algebra, density)
        if abs(tr - 1.0) > tol:
            raise DomainError(f"density has trace {tr.real:.6g}, expected 1")
        self.algebra = algebra
        self.density = density
        self.min_eigenvalue = lam

    @classmethod
    def from_positive(cls, algebra: MultiMatrixAlgebra, x: AlgebraElement) -> "State":
        """Normalise a positive element to unit trace."""
        return cls(algebra, x / trace(algebra, x).real)

    @classmethod
    def tracial(cls, algebra: MultiMatrixAlgebra) -> "State":
        return cls(algebra, algebra.identity())

    @classmethod
    def random(cls, algebra: MultiMatrixAlgebra, rng: np.random.Generator) -> "State":
        g = algebra.random_element(rng)
        return cls.from_positive(algebra, g.H @ g)

    def __call__(self, x: AlgebraElement) -> complex:
        return trace(self.algebra, self.density @ x)

    def is_faithful(self, tol_pos: float = DEFAULT_TOL_POS) -> bool:
        return self.min_eigenvalue >= tol_pos

    @property
    def faithful(self) -> bool:
        return self.is_faithful()

    def _dual_flat(self) -> np.ndarray:
        # sigma(x) = flat(x) @ _dual_flat()
        alg = self.algebra
        return np.concatenate([w * b.T.ravel()
                               for w, b in zip(alg.trace_weights, self.density.blocks)])


class MartingaleCheck(NamedTuple):
    holds: bool
    residual: float

    def __bool__(self) -> bool:
        return self.holds


def _check_state(X: AdaptedProcess, sigma: State) -> None:
    if not isinstance(sigma, State):
        raise DomainError("expected a State")
    if sigma.algebra != X.algebra:
        raise StructuralError("state and process live in different algebras")


def is_martingale(M: AdaptedProcess, sigma: State, tol: float = DEFAULT_TOL, *,
                  numba: bool | None = None) -> MartingaleCheck:
    """Martingale test via polarisation.

    For each step the condition over all ``a`` in ``A_{t_k}`` is equivalent to
    ``sigma(b_i dM_k b_j^*) = 0`` for every ordered pair of level basis
    elements.  The returned residual is the largest such value divided by
    ``1 + ||dM_k||_inf``; the check holds iff it is at most ``tol``.
    """
    _check_state(M, sigma)
    alg = M.algebra
    f = M.filtration
    rho = alg.flat(sigma.density)
    worst = 0.0
    for k in range(f.steps):
        dM = M.increment(k)
        scale = 1.0 + lp_norm(alg, dM, np.inf)
        R = kernels.pair_residuals(rho, alg.flat(dM), f.levels[k].flat_basis, alg.block_dims,
                                   alg.layout.offsets, alg.trace_weights, numba=numba)
        if R.size:
            worst = max(worst, float(np.abs(R).max()) / scale)
    return MartingaleCheck(worst <= tol, worst)


def zero_integral_criterion(X: AdaptedProcess, sigma: State, tol: float = DEFAULT_TOL) -> MartingaleCheck:
    """``sigma`` vanishes on every generator of the strategy-payoff space.

    Residual is ``max |sigma(a dX_k a^*)| / (1 + ||dX_k||_inf)`` over the
    polarisation generators; a constant process has none and passes.
    """
    _check_state(X, sigma)
    alg = X.algebra
    dual = sigma._dual_flat()
    worst = 0.0
    for batch in payoff_generators(X):
        scale = 1.0 + lp_norm(alg, X.increment(batch.step), np.inf)
        vals = batch.payoff @ dual
        worst = max(worst, float(np.abs(vals).max()) / scale)
    return MartingaleCheck(worst <= tol, worst)


def integral_martingale_check(H: Integrand, X: AdaptedProcess, sigma: State,
                              tol: float = DEFAULT_TOL) -> MartingaleCheck:
    """Is the running integral ``t_k -> (H # X)_{t_k}`` a martingale under ``sigma``?"""
    return is_martingale(running_integral(H, X), sigma, tol)
