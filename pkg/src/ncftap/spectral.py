"""Maximising the smallest eigenvalue over an affine slice of self-adjoint elements.

Both sides of the no-arbitrage decision reduce to

    maximise  lambda_min(x)   subject to  x in x0 + V,

with ``V`` a subspace of the self-adjoint part of the algebra, given either by
an orthonormal basis of ``V`` ("directions") or of its orthogonal complement
("normals"), all in hvec coordinates (see :mod:`ncftap.kernels`).

Two engines are provided:

``barrier`` (default)
    Log-barrier path following with damped Newton centering on
    ``-s t - log det(x - t I)``.  The Newton system is set up in whichever
    description of the slice is smaller: the parameters of ``V`` (dense
    Hessian) or the constraints (Schur complement).  Terminates with a
    certified duality gap ``sum(n_k) / s <= gap_tol``.
``supergradient``
    Projected supergradient ascent with ``c / sqrt(k)`` steps (numba kernel).
    Cheap, but only reaches a few digits at non-smooth optima; kept as a
    cross-check and for very large slices.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels
from .algebra import MultiMatrixAlgebra

log = logging.getLogger(__name__)

__all__ = ["AffineSlice", "SpectralResult", "maximize_min_eigenvalue", "orthogonal_complement"]


def orthogonal_complement(Q: np.ndarray) -> np.ndarray:
    """Orthonormal basis (columns) of the complement of orthonormal columns ``Q``."""
    D, r = Q.shape
    if r == 0:
        return np.eye(D)
    if r >= D:
        return np.zeros((D, 0))
    full, _ = np.linalg.qr(Q, mode="complete")
    return full[:, r:]


class AffineSlice:
    """``x0 + V`` in hvec coordinates; pass ``directions`` or ``normals`` (orthonormal columns)."""

    def __init__(self, algebra: MultiMatrixAlgebra, x0: np.ndarray, *,
                 directions: np.ndarray | None = None, normals: np.ndarray | None = None):
        if (directions is None) == (normals is None):
            raise ValueError("give exactly one of directions / normals")
        self.algebra = algebra
        self.x0 = np.asarray(x0, dtype=float)
        D = algebra.size
        self._directions = None if directions is None else np.asarray(directions, float).reshape(D, -1)
        self._normals = None if normals is None else np.asarray(normals, float).reshape(D, -1)

    @property
    def n_params(self) -> int:
        if self._directions is not None:
            return self._directions.shape[1]
        return self.algebra.size - self._normals.shape[1]

    @property
    def n_constraints(self) -> int:
        return self.algebra.size - self.n_params

    @cached_property
    def directions(self) -> np.ndarray:
        if self._directions is not None:
            return self._directions
        return orthogonal_complement(self._normals)

    @cached_property
    def normals(self) -> np.ndarray:
        if self._normals is not None:
            return self._normals
        return orthogonal_complement(self._directions)

    def point(self, y: np.ndarray) -> np.ndarray:
        return self.x0 + self.directions @ y


@dataclass
class SpectralResult:
    x: np.ndarray          # hvec coordinates of the maximiser
    value: float           # lambda_min(x)
    gap: float             # certified upper bound on (optimum - value); inf if unknown
    iterations: int
    method: str


def _lambda_min_flat(alg: MultiMatrixAlgebra, flat: np.ndarray) -> float:
    lam = np.inf
    for n, off in zip(alg.block_dims, alg.layout.offsets):
        B = flat[off:off + n * n].reshape(n, n)
        lam = min(lam, np.linalg.eigvalsh(0.5 * (B + B.conj().T))[0])
    return float(lam)


def _blocks(alg, flat):
    return [flat[..., off:off + n * n].reshape(flat.shape[:-1] + (n, n))
            for n, off in zip(alg.block_dims, alg.layout.offsets)]


def _chol_all(blocks):
    try:
        return [np.linalg.cholesky(B) for B in blocks]
    except np.linalg.LinAlgError:
        return None


def _logdet(chols) -> float:
    return float(sum(2.0 * np.sum(np.log(np.abs(np.diag(L)))) for L in chols))


def _gram_solve(G: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``(G G^T) u = rhs`` through a QR factor of ``G^T`` (no squared conditioning)."""
    R = np.linalg.qr(G.T, mode="r")
    try:
        y = np.linalg.solve(R.T, rhs)
        return np.linalg.solve(R, y)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(G @ G.T, rhs, rcond=None)[0]


def _realify(Vs) -> np.ndarray:
    """Rows of Hermitian matrices -> real rows with ``tr(V_i V_j)`` as dot products."""
    flat = np.concatenate([V.reshape(V.shape[0], -1) for V in Vs], axis=1)
    return np.concatenate([flat.real, flat.imag], axis=1)


# ---------------------------------------------------------------------------
# barrier engine, parametric form: variables (t, y)


def _barrier_parametric(sl: AffineSlice, gap_tol: float, mu: float, max_newton: int):
    alg = sl.algebra
    lay = alg.layout
    N = sl.directions
    m = N.shape[1]
    x0_flat = lay.to_flat(sl.x0)
    ident_flat = alg.flat(alg.identity())
    # E_0 = -I, E_j = D_j ; S(z) = x0 + sum_j z_j E_j
    E = np.concatenate([-ident_flat[None, :], lay.to_flat(N.T)], axis=0)
    E_blocks = _blocks(alg, E)
    x0_blocks = _blocks(alg, x0_flat)
    z = np.zeros(m + 1)
    z[0] = _lambda_min_flat(alg, x0_flat) - 1.0
    nbar = float(alg.total_dim)

    def slack(zz):
        return [xb + np.tensordot(zz, Eb, axes=1) for xb, Eb in zip(x0_blocks, E_blocks)]

    def phi(zz, chols, s):
        return -s * zz[0] - _logdet(chols)

    s = 1.0
    chols = _chol_all(slack(z))
    total = 0
    while True:
        for _ in range(max_newton):
            total += 1
            grad = np.zeros(m + 1)
            grad[0] = -s
            Ws = []
            for L, Eb in zip(chols, E_blocks):
                Li = np.linalg.inv(L)
                W = Li[None] @ Eb @ Li.conj().T[None]
                grad -= np.trace(W, axis1=1, axis2=2).real
                Ws.append(W)
            step = -_gram_solve(_realify(Ws), grad)
            dec2 = float(-grad @ step)
            if dec2 <= 2e-12:
                break
            f0 = phi(z, chols, s)
            alpha = 1.0
            while alpha > 1e-12:
                zn = z + alpha * step
                cn = _chol_all(slack(zn))
                if cn is not None and phi(zn, cn, s) <= f0 - 0.25 * alpha * dec2:
                    break
                alpha *= 0.5
            else:
                break
            z, chols = zn, cn
        if nbar / s <= gap_tol:
            break
        s *= mu
    x = sl.x0 + N @ z[1:]
    return x, nbar / s, total


# ---------------------------------------------------------------------------
# barrier engine, constraint form: variables (X, t) with x = X + t I


def _barrier_constrained(sl: AffineSlice, gap_tol: float, mu: float, max_newton: int):
    alg = sl.algebra
    lay = alg.layout
    A = sl.normals                       # (D, p) orthonormal
    b = A.T @ sl.x0
    ident_h = alg.hvec(alg.identity())
    c = A.T @ ident_h
    # Frobenius representatives of the functionals x -> <a_i, x>_tau
    wflat = np.concatenate([np.full(n * n, w) for n, w in zip(alg.block_dims, alg.trace_weights)])
    AF = lay.to_flat(A.T) * wflat[None, :]
    AF_blocks = _blocks(alg, AF)
    ident_blocks = [np.eye(n) for n in alg.block_dims]
    nbar = float(alg.total_dim)

    x0_flat = lay.to_flat(sl.x0)
    t = _lambda_min_flat(alg, x0_flat) - 1.0
    X = [xb - t * Ib for xb, Ib in zip(_blocks(alg, x0_flat), ident_blocks)]

    def hvec_of(Xb, tt):
        flat = np.concatenate([(xb + tt * Ib).ravel() for xb, Ib in zip(Xb, ident_blocks)])
        return lay.from_flat(flat)

    def phi(chols, tt, s):
        return -s * tt - _logdet(chols)

    s = 1.0
    chols = _chol_all(X)
    total = 0
    while True:
        for _ in range(max_newton):
            total += 1
            r = b - A.T @ hvec_of(X, t)
            q = -r
            Vs = []
            for L, Xb, Ab in zip(chols, X, AF_blocks):
                Vs.append(L.conj().T[None] @ Ab @ L[None])
                q += np.einsum("iab,ba->i", Ab, Xb).real
            # M nu - c dt = q,  c . nu = s   with  M = G G^T
            G = _realify(Vs)
            Mq = _gram_solve(G, q)
            Mc = _gram_solve(G, c)
            dt = (s - c @ Mq) / (c @ Mc)
            nu = Mq + dt * Mc
            dX = []
            for Xb, Ab in zip(X, AF_blocks):
                d = Xb - Xb @ np.tensordot(nu, Ab, axes=1) @ Xb
                dX.append(0.5 * (d + d.conj().T))
            # keep the step exactly on the slice
            dx = lay.from_flat(np.concatenate([(d + dt * Ib).ravel() for d, Ib in zip(dX, ident_blocks)]))
            dx += A @ (r - A.T @ dx)
            dflat = lay.to_flat(dx)
            dX = [d - dt * Ib for d, Ib in zip(_blocks(alg, dflat), ident_blocks)]
            dlog = 0.0
            for L, d in zip(chols, dX):
                Y = np.linalg.solve(L, d)
                dlog += np.trace(np.linalg.solve(L.conj().T, Y)).real
            dphi = -s * dt - dlog
            dec2 = -dphi
            if dec2 <= 2e-12 and np.linalg.norm(r) <= 1e-13:
                break
            f0 = phi(chols, t, s)
            alpha = 1.0
            while alpha > 1e-12:
                Xn = [xb + alpha * d for xb, d in zip(X, dX)]
                cn = _chol_all(Xn)
                if cn is not None and phi(cn, t + alpha * dt, s) <= f0 + 0.25 * alpha * min(dphi, 0.0):
                    break
                alpha *= 0.5
            else:
                break
            X, t, chols = Xn, t + alpha * dt, cn
            if dec2 <= 2e-12:
                break
        log.debug("constrained stage s=%.1e t=%.12g residual=%.1e newton=%d", s, t,
                  np.linalg.norm(b - A.T @ hvec_of(X, t)), total)
        if nbar / s <= gap_tol:
            break
        s *= mu
    x = hvec_of(X, t)
    # remove rounding drift off the slice
    x = x + A @ (b - A.T @ x)
    return x, nbar / s, total


def maximize_min_eigenvalue(sl: AffineSlice, *, method: str = "barrier", gap_tol: float = 1e-10,
                            mu: float = 10.0, max_newton: int = 60, numba: bool | None = None,
                            **ascent_kwargs) -> SpectralResult:
    """Maximise ``lambda_min`` over the slice.  See the module docstring for the engines."""
    alg = sl.algebra
    lay = alg.layout
    if sl.n_params == 0:
        x = sl.x0
        return SpectralResult(x, _lambda_min_flat(alg, lay.to_flat(x)), 0.0, 0, "exact")
    if method == "barrier":
        if sl.n_params <= sl.n_constraints + 1:
            x, gap, its = _barrier_parametric(sl, gap_tol, mu, max_newton)
            name = "barrier-parametric"
        else:
            x, gap, its = _barrier_constrained(sl, gap_tol, mu, max_newton)
            name = "barrier-constrained"
    elif method == "supergradient":
        y, _, its = kernels.supergradient_ascent(sl.x0, sl.directions, lay, numba=numba, **ascent_kwargs)
        x = sl.point(y)
        gap, name = np.inf, "supergradient"
    else:
        raise ValueError(f"unknown method {method!r}")
    value = _lambda_min_flat(alg, lay.to_flat(x))
    log.debug("%s: lambda_min=%.12g gap<=%.1e after %d iterations", name, value, gap, its)
    return SpectralResult(x, value, gap, its, name)
