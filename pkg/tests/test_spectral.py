from __future__ import annotations

import numpy as np
import pytest

from ncftap import MultiMatrixAlgebra
from ncftap.spectral import (
    AffineSlice,
    _barrier_constrained,
    _barrier_parametric,
    _lambda_min_flat,
    maximize_min_eigenvalue,
    orthogonal_complement,
)

cp = pytest.importorskip("cvxpy")


def cvxpy_max_min_eig(alg, x0, N):
    """Reference optimum of ``lambda_min(x0 + N y)`` via a real-embedded SDP."""
    lay = alg.layout
    m = N.shape[1]
    y, t = cp.Variable(m), cp.Variable()
    F0, Fd = lay.to_flat(x0), lay.to_flat(N.T)
    cons = []
    for n, off in zip(alg.block_dims, lay.offsets):
        B0 = F0[off:off + n * n].reshape(n, n)
        Bs = Fd[:, off:off + n * n].reshape(m, n, n)
        expr = B0 + sum(y[j] * Bs[j] for j in range(m)) - t * np.eye(n)
        re, im = cp.real(expr), cp.imag(expr)
        cons.append(cp.bmat([[re, -im], [im, re]]) >> 0)
    cp.Problem(cp.Maximize(t), cons).solve(solver="CLARABEL")
    return float(t.value)


def random_slice(dims, seed):
    rng = np.random.default_rng(seed)
    alg = MultiMatrixAlgebra(dims)
    D = alg.size
    r = int(rng.integers(1, D - 1))
    K = np.linalg.qr(rng.standard_normal((D, r)))[0]
    ih = alg.hvec(alg.identity())
    p = ih - K @ (K.T @ ih)
    normals = np.linalg.qr(np.column_stack([ih, K]))[0]
    return alg, p / (p @ p), normals


CASES = [((3,), 0), ((2, 2), 1), ((4, 1), 2), ((3, 2, 1), 3), ((5,), 4), ((2,), 5), ((3, 3), 6)]


@pytest.mark.parametrize("dims, seed", CASES)
def test_barrier_forms_match_sdp_oracle(dims, seed):
    alg, x0, normals = random_slice(dims, seed)
    dirs = orthogonal_complement(normals)
    ref = cvxpy_max_min_eig(alg, x0, dirs)
    for engine, sl in ((_barrier_parametric, AffineSlice(alg, x0, directions=dirs)),
                       (_barrier_constrained, AffineSlice(alg, x0, normals=normals))):
        x, gap, _ = engine(sl, 1e-10, 10.0, 60)
        val = _lambda_min_flat(alg, alg.layout.to_flat(x))
        assert val == pytest.approx(ref, abs=1e-6)
        assert gap <= 1e-9
        # the maximiser stays on the slice
        assert np.abs(normals.T @ (x - x0)).max() <= 1e-10


@pytest.mark.parametrize("dims, seed", CASES[:4])
def test_supergradient_is_a_feasible_lower_bound(dims, seed):
    alg, x0, normals = random_slice(dims, seed)
    sl = AffineSlice(alg, x0, normals=normals)
    best = maximize_min_eigenvalue(sl)
    sg = maximize_min_eigenvalue(sl, method="supergradient")
    assert sg.method == "supergradient"
    assert sg.value <= best.value + 1e-9
    assert sg.value >= best.value - 5e-2
    assert np.abs(normals.T @ (sg.x - x0)).max() <= 1e-10


def test_zero_parameter_slice_is_exact():
    alg = MultiMatrixAlgebra((2,))
    x0 = alg.hvec(alg.diagonal([1.0, 3.0]))
    res = maximize_min_eigenvalue(AffineSlice(alg, x0, directions=np.zeros((4, 0))))
    assert res.method == "exact" and res.value == pytest.approx(1.0)


def test_known_optimum_diagonal():
    # over diagonal densities with tau = 1 in M_2 (w = 1/2) the optimum is rho = I
    alg = MultiMatrixAlgebra((2,))
    x0 = alg.hvec(alg.diagonal([2.0, 0.0]))
    d = alg.hvec(alg.diagonal([1.0, -1.0]))
    res = maximize_min_eigenvalue(AffineSlice(alg, x0, directions=(d / np.linalg.norm(d))[:, None]))
    assert res.value == pytest.approx(1.0, abs=1e-9)


def test_unknown_method():
    alg, x0, normals = random_slice((2,), 0)
    with pytest.raises(ValueError):
        maximize_min_eigenvalue(AffineSlice(alg, x0, normals=normals), method="simplex")
