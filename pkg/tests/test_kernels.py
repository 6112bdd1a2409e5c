"""Both backends against a loop-level oracle and against each other."""

import numpy as np
import pytest

from ordpool import kernels as K

needs_numba = pytest.mark.skipif(not K.NUMBA, reason="numba not installed")


def ordinal_oracle(x, w, m, n, sh, sw):
    N, H, W, C = x.shape
    Ho, Wo = (H - m) // sh + 1, (W - n) // sw + 1
    out = np.zeros((N, Ho, Wo, C))
    perm = np.zeros((N, Ho, Wo, C, m * n), dtype=int)
    for b in range(N):
        for i in range(Ho):
            for j in range(Wo):
                for c in range(C):
                    vals = [float(x[b, i * sh + p // n, j * sw + p % n, c]) for p in range(m * n)]
                    order = sorted(range(m * n), key=lambda p: (-vals[p], p))
                    out[b, i, j, c] = sum(w[c, r] * vals[p] for r, p in enumerate(order))
                    perm[b, i, j, c] = order
    return out, perm


GEOMS = [(2, 2, 2, 2), (3, 3, 3, 3), (2, 2, 1, 1), (8, 8, 8, 8), (1, 4, 1, 4), (2, 3, 2, 3)]


def _case(rng, m, n, sh, sw, ties=False):
    H, W = m + 2 * sh, n + 2 * sw
    x = rng.normal(size=(2, H, W, 3))
    if ties:
        x = np.round(x)
    w = rng.random((3, m * n))
    return x, w / w.sum(axis=1, keepdims=True)


@pytest.mark.parametrize("geom", GEOMS)
@pytest.mark.parametrize("ties", [False, True])
def test_numpy_matches_oracle(geom, ties):
    rng = np.random.default_rng(0)
    x, w = _case(rng, *geom, ties=ties)
    out, perm = K.ordinal_forward_np(x, w, *geom)
    ref, ref_perm = ordinal_oracle(x, w, *geom)
    assert np.allclose(out, ref, atol=1e-12)
    assert np.array_equal(perm, ref_perm)


@needs_numba
@pytest.mark.parametrize("geom", GEOMS)
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("ties", [False, True])
def test_backends_agree_ordinal(geom, dtype, ties):
    rng = np.random.default_rng(1)
    x, w = _case(rng, *geom, ties=ties)
    x = x.astype(dtype)
    a, pa = K.NUMPY["ordinal_forward"](x, w, *geom)
    b, pb = K.NUMBA["ordinal_forward"](x, w, *geom)
    assert np.array_equal(pa, pb)
    tol = 1e-5 if dtype == np.float32 else 1e-12
    assert np.allclose(a, b, rtol=tol, atol=tol)
    g = rng.normal(size=a.shape).astype(dtype)
    gxa, gwa = K.NUMPY["ordinal_backward"](g, x, w, pa, *geom)
    gxb, gwb = K.NUMBA["ordinal_backward"](g, x, w, pb, *geom)
    assert np.allclose(gxa, gxb, rtol=tol, atol=tol)
    assert np.allclose(gwa, gwb, rtol=tol, atol=tol)


@needs_numba
@pytest.mark.parametrize("mode", [K.AVG, K.MAX, K.MIN])
@pytest.mark.parametrize("geom", GEOMS)
def test_backends_agree_classic(mode, geom):
    rng = np.random.default_rng(2)
    x, _ = _case(rng, *geom, ties=True)
    a, arga = K.NUMPY["classic_forward"](x, mode, *geom)
    b, argb = K.NUMBA["classic_forward"](x, mode, *geom)
    assert np.allclose(a, b) and np.array_equal(arga, argb)
    g = rng.normal(size=a.shape)
    assert np.allclose(K.NUMPY["classic_backward"](g, arga, mode, x.shape, *geom),
                       K.NUMBA["classic_backward"](g, argb, mode, x.shape, *geom))


@needs_numba
def test_backends_agree_im2col():
    rng = np.random.default_rng(3)
    xp = rng.normal(size=(2, 9, 8, 3))
    a = K.NUMPY["im2col"](xp, 3, 2)
    assert np.array_equal(a, K.NUMBA["im2col"](xp, 3, 2))
    assert np.allclose(K.NUMPY["col2im"](a, xp.shape, 3, 2), K.NUMBA["col2im"](a, xp.shape, 3, 2))


def test_im2col_column_order():
    xp = np.arange(3 * 3 * 2, dtype=float).reshape(1, 3, 3, 2)
    cols = K.im2col(xp, 2, 2)
    # first output pixel: (kh, kw, C) row-major
    expected = [xp[0, i, j, c] for i in range(2) for j in range(2) for c in range(2)]
    assert cols[0].tolist() == expected


def test_col2im_is_adjoint():
    rng = np.random.default_rng(4)
    xp = rng.normal(size=(1, 6, 5, 2))
    cols = K.im2col(xp, 3, 3)
    y = rng.normal(size=cols.shape)
    assert np.isclose((cols * y).sum(), (xp * K.col2im(y, xp.shape, 3, 3)).sum())


def test_env_flag_selects_numpy(tmp_path):
    import os
    import subprocess
    import sys
    code = ("import numpy as np, ordpool\n"
            "from ordpool import kernels as K\n"
            "assert ordpool.BACKEND == 'numpy' and K.ACTIVE is K.NUMPY\n"
            "x = np.array([[1.0, 3.0], [2.0, 4.0]])[:, :, None]\n"
            "out, _ = ordpool.ordinal_pool_forward(x, ordpool.OrdinalKernelSet(2, 2, [[0.5, 0.3, 0.2, 0]]))\n"
            "assert abs(out[0, 0, 0] - 3.3) < 1e-12\n")
    env = dict(os.environ, ORDPOOL_NUMBA="0")
    subprocess.run([sys.executable, "-c", code], env=env, check=True)
