"""Hot numeric kernels.

Every kernel exists twice: a loop-style implementation compiled with numba
(``*_nb``) and a vectorised numpy implementation (``*_np``).  The public
dispatchers pick one according to :func:`ncftap._accel.use_numba`; both paths
are exercised by the test-suite and compared in ``benchmarks/``.

Array layouts
-------------
flat
    An algebra element as the concatenation of its row-major blocks, length
    ``sum(n_k**2)``; block ``k`` starts at ``flat_offsets[k]``.
hvec
    A *self-adjoint* element in real coordinates that are orthonormal for the
    trace inner product ``tau(x y)``.  Per block: ``n`` diagonal entries scaled
    by ``sqrt(w)``, then for each ``i < j`` (row-major) the pair
    ``sqrt(2 w) * (Re x_ij, Im x_ij)``.  Same length and offsets as ``flat``.
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import njit, use_numba

__all__ = [
    "HvecLayout",
    "mgs_extend",
    "pair_residuals",
    "supergradient_ascent",
]


# ---------------------------------------------------------------------------
# Modified Gram-Schmidt with the rank rule  ||v_post|| > rtol * (||v_pre|| + 1)


def _mgs_extend_py(basis, candidates, rtol):
    d, dim = basis.shape
    cap = min(d + candidates.shape[0], dim)
    out = np.zeros((cap, dim), dtype=np.complex128)
    out[:d] = basis
    r = d
    for c in range(candidates.shape[0]):
        if r >= cap:
            break
        v = candidates[c].copy()
        pre = 0.0
        for t in range(dim):
            pre += v[t].real * v[t].real + v[t].imag * v[t].imag
        pre = math.sqrt(pre)
        for _sweep in range(2):
            for q in range(r):
                coef = 0.0 + 0.0j
                for t in range(dim):
                    coef += out[q, t].conjugate() * v[t]
                for t in range(dim):
                    v[t] -= coef * out[q, t]
        post = 0.0
        for t in range(dim):
            post += v[t].real * v[t].real + v[t].imag * v[t].imag
        post = math.sqrt(post)
        if post > rtol * (pre + 1.0):
            for t in range(dim):
                out[r, t] = v[t] / post
            r += 1
    return out[:r].copy()


_mgs_extend_nb = njit(_mgs_extend_py)


def _mgs_extend_np(basis, candidates, rtol):
    dim = basis.shape[1]
    rows = [q for q in basis]
    Q = basis.copy()
    for v in candidates:
        if len(rows) >= dim:
            break
        v = v.copy()
        pre = np.linalg.norm(v)
        for _sweep in range(2):
            if Q.shape[0]:
                v -= (Q.conj() @ v) @ Q
        post = np.linalg.norm(v)
        if post > rtol * (pre + 1.0):
            rows.append(v / post)
            Q = np.asarray(rows)
    if not rows:
        return np.zeros((0, dim), dtype=np.complex128)
    return np.asarray(rows, dtype=np.complex128)


def mgs_extend(basis, candidates, rtol=1e-8, *, numba=None):
    """Extend orthonormal rows ``basis`` by the candidates that survive projection.

    A candidate is discarded when its norm after projection is at most
    ``rtol * (norm before + 1)``.  Returns the enlarged basis (old rows first).
    """
    basis = np.ascontiguousarray(basis, dtype=np.complex128)
    candidates = np.ascontiguousarray(candidates, dtype=np.complex128)
    if basis.ndim != 2 or candidates.ndim != 2:
        raise ValueError("basis and candidates must be 2-D row stacks")
    if basis.shape[0] == 0:
        basis = np.zeros((0, candidates.shape[1]), dtype=np.complex128)
    if use_numba(numba):
        return _mgs_extend_nb(basis, candidates, float(rtol))
    return _mgs_extend_np(basis, candidates, float(rtol))


# ---------------------------------------------------------------------------
# R_ij = tau(rho b_i delta b_j^*) for all ordered pairs of level-basis elements


def _pair_residuals_py(rho, delta, basis, dims, offsets, weights):
    d = basis.shape[0]
    out = np.zeros((d, d), dtype=np.complex128)
    for k in range(dims.shape[0]):
        n = dims[k]
        off = offsets[k]
        w = weights[k]
        R = rho[off:off + n * n].reshape((n, n))
        D = delta[off:off + n * n].reshape((n, n))
        P = np.empty((n, n), dtype=np.complex128)
        for i in range(d):
            B = basis[i, off:off + n * n].reshape((n, n))
            P[:, :] = R @ B @ D
            for j in range(d):
                acc = 0.0 + 0.0j
                for a in range(n):
                    for b in range(n):
                        acc += P[a, b] * basis[j, off + a * n + b].conjugate()
                out[i, j] += w * acc
    return out


_pair_residuals_nb = njit(_pair_residuals_py)


def _pair_residuals_np(rho, delta, basis, dims, offsets, weights):
    d = basis.shape[0]
    out = np.zeros((d, d), dtype=np.complex128)
    for n, off, w in zip(dims, offsets, weights):
        sl = slice(off, off + n * n)
        R = rho[sl].reshape(n, n)
        D = delta[sl].reshape(n, n)
        B = basis[:, sl].reshape(d, n, n)
        P = R[None] @ B @ D[None]
        out += w * (P.reshape(d, -1) @ B.reshape(d, -1).conj().T)
    return out


def pair_residuals(rho, delta, basis, dims, offsets, weights, *, numba=None):
    """Matrix ``tau(rho b_i delta b_j^*)`` over rows ``b_i`` of ``basis`` (flat layout)."""
    args = (
        np.ascontiguousarray(rho, dtype=np.complex128),
        np.ascontiguousarray(delta, dtype=np.complex128),
        np.ascontiguousarray(basis, dtype=np.complex128),
        np.asarray(dims, dtype=np.int64),
        np.asarray(offsets, dtype=np.int64),
        np.asarray(weights, dtype=np.float64),
    )
    if args[2].shape[0] == 0:
        return np.zeros((0, 0), dtype=np.complex128)
    if use_numba(numba):
        return _pair_residuals_nb(*args)
    return _pair_residuals_np(*args)


# ---------------------------------------------------------------------------
# hvec <-> flat index layout


class HvecLayout:
    """Index maps between hvec coordinates and the flat complex layout."""

    def __init__(self, dims, weights):
        self.dims = np.asarray(dims, dtype=np.int64)
        self.weights = np.asarray(weights, dtype=np.float64)
        sizes = self.dims ** 2
        self.offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        self.size = int(sizes.sum())
        pos, pos_t, kind, scale = [], [], [], []
        for n, off, w in zip(self.dims, self.offsets, self.weights):
            n = int(n)
            for i in range(n):
                pos.append(off + i * n + i)
                pos_t.append(off + i * n + i)
                kind.append(0)
                scale.append(math.sqrt(w))
            for i in range(n):
                for j in range(i + 1, n):
                    for part in (1, 2):
                        pos.append(off + i * n + j)
                        pos_t.append(off + j * n + i)
                        kind.append(part)
                        scale.append(math.sqrt(2.0 * w))
        self.pos = np.asarray(pos, dtype=np.int64)
        self.pos_t = np.asarray(pos_t, dtype=np.int64)
        self.kind = np.asarray(kind, dtype=np.int64)
        self.scale = np.asarray(scale, dtype=np.float64)
        self._diag = self.kind == 0
        self._re = self.kind == 1
        self._im = self.kind == 2

    def to_flat(self, h):
        """hvec (..., size) -> flat complex (..., size)."""
        h = np.asarray(h, dtype=np.float64)
        out = np.zeros(h.shape[:-1] + (self.size,), dtype=np.complex128)
        u = h / self.scale
        out[..., self.pos[self._diag]] = u[..., self._diag]
        z = u[..., self._re] + 1j * u[..., self._im]
        out[..., self.pos[self._re]] = z
        out[..., self.pos_t[self._re]] = z.conj()
        return out

    def from_flat(self, f):
        """flat complex (..., size) -> hvec of the Hermitian part."""
        f = np.asarray(f, dtype=np.complex128)
        h = np.empty(f.shape[:-1] + (self.size,), dtype=np.float64)
        h[..., self._diag] = f[..., self.pos[self._diag]].real
        upper = 0.5 * (f[..., self.pos[self._re]] + f[..., self.pos_t[self._re]].conj())
        h[..., self._re] = upper.real
        h[..., self._im] = upper.imag
        return h * self.scale

    def functional_gradient(self, flat_c):
        """hvec gradient of ``x -> sum_ab c_ab x_ab`` restricted to Hermitian x.

        ``flat_c`` holds ``c`` in the flat layout; for ``c = conj(v) v^T`` this
        is the supergradient of ``v^* x v``.
        """
        c = np.asarray(flat_c, dtype=np.complex128)
        g = np.empty(self.size)
        g[self._diag] = c[self.pos[self._diag]].real
        s = c[self.pos[self._re]] + c[self.pos_t[self._re]]
        # x_ij = (a + i b)/scale' ; c_ij x_ij + c_ji conj(x_ij)
        g[self._re] = s.real
        d = c[self.pos[self._re]] - c[self.pos_t[self._re]]
        g[self._im] = -d.imag
        return g / self.scale


# ---------------------------------------------------------------------------
# Projected supergradient ascent for  max_y  lambda_min(x0 + N y)


def _ascent_py(x0, N, dims, offsets, weights, step, max_iter, patience, improve_tol):
    dim, m = N.shape
    y = np.zeros(m)
    best_y = y.copy()
    best = -np.inf
    last_mark = -np.inf
    since = 0
    it = 0
    for it in range(1, max_iter + 1):
        x = x0 + N @ y
        lam = np.inf
        kb = 0
        vb = np.zeros(1, dtype=np.complex128)
        for k in range(dims.shape[0]):
            n = dims[k]
            off = offsets[k]
            w = weights[k]
            X = np.zeros((n, n), dtype=np.complex128)
            s1 = 1.0 / math.sqrt(w)
            s2 = 1.0 / math.sqrt(2.0 * w)
            for i in range(n):
                X[i, i] = x[off + i] * s1
            p = off + n
            for i in range(n):
                for j in range(i + 1, n):
                    z = (x[p] + 1j * x[p + 1]) * s2
                    X[i, j] = z
                    X[j, i] = z.conjugate()
                    p += 2
            vals, vecs = np.linalg.eigh(X)
            if vals[0] < lam:
                lam = vals[0]
                kb = k
                vb = vecs[:, 0].copy()
        if lam > best:
            best = lam
            best_y[:] = y
        if best > last_mark + improve_tol:
            last_mark = best
            since = 0
        else:
            since += 1
            if since >= patience:
                break
        if m == 0:
            break
        g = np.zeros(dim)
        n = dims[kb]
        off = offsets[kb]
        w = weights[kb]
        s1 = 1.0 / math.sqrt(w)
        s2 = math.sqrt(2.0 / w)
        for i in range(n):
            g[off + i] = (vb[i].real ** 2 + vb[i].imag ** 2) * s1
        p = off + n
        for i in range(n):
            for j in range(i + 1, n):
                c = vb[i].conjugate() * vb[j]
                g[p] = s2 * c.real
                g[p + 1] = -s2 * c.imag
                p += 2
        gy = N.T @ g
        gn = math.sqrt(np.sum(gy * gy))
        if gn == 0.0:
            break
        y = y + (step / math.sqrt(it)) * gy / gn
    return best_y, best, it


_ascent_nb = njit(_ascent_py)


def _ascent_np(x0, N, layout, step, max_iter, patience, improve_tol):
    m = N.shape[1]
    y = np.zeros(m)
    best_y = y.copy()
    best = -np.inf
    last_mark = -np.inf
    since = 0
    it = 0
    blocks = [(int(n), int(off)) for n, off in zip(layout.dims, layout.offsets)]
    for it in range(1, max_iter + 1):
        flat = layout.to_flat(x0 + N @ y)
        lam, vb, kb = np.inf, None, 0
        for k, (n, off) in enumerate(blocks):
            vals, vecs = np.linalg.eigh(flat[off:off + n * n].reshape(n, n))
            if vals[0] < lam:
                lam, vb, kb = vals[0], vecs[:, 0], k
        if lam > best:
            best = lam
            best_y = y.copy()
        if best > last_mark + improve_tol:
            last_mark = best
            since = 0
        else:
            since += 1
            if since >= patience:
                break
        if m == 0:
            break
        n, off = blocks[kb]
        c = np.zeros(layout.size, dtype=np.complex128)
        c[off:off + n * n] = np.outer(vb.conj(), vb).ravel()
        gy = N.T @ layout.functional_gradient(c)
        gn = np.linalg.norm(gy)
        if gn == 0.0:
            break
        y = y + (step / math.sqrt(it)) * gy / gn
    return best_y, best, it


def supergradient_ascent(x0, directions, layout, *, step=0.5, max_iter=20_000,
                         patience=500, improve_tol=1e-10, numba=None):
    """Maximise the smallest eigenvalue over ``x0 + span(directions)``.

    ``x0`` and the columns of ``directions`` are hvec coordinates (see
    :class:`HvecLayout`); the columns must be orthonormal.  Steps are
    ``step / sqrt(iter)`` along the normalised projected supergradient; the
    loop stops after ``patience`` iterations without an improvement of the
    best value larger than ``improve_tol``.  Returns
    ``(best_y, best_value, iterations)``.
    """
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    N = np.ascontiguousarray(np.asarray(directions, dtype=np.float64).reshape(len(x0), -1))
    if use_numba(numba):
        return _ascent_nb(x0, N, layout.dims, layout.offsets, layout.weights,
                          float(step), int(max_iter), int(patience), float(improve_tol))
    return _ascent_np(x0, N, layout, float(step), int(max_iter), int(patience),
                      float(improve_tol))
