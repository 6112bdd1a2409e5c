"""Hot loops of the engine, in two interchangeable implementations.

Each kernel exists as a numba ``@njit`` function and as a vectorised numpy
function with the same contract.  The module-level names (``ordinal_forward``
etc.) are bound to the numba versions unless ``ORDPOOL_NUMBA=0`` was set
before import; both sets stay reachable through ``NUMPY`` and ``NUMBA`` so
tests and the benchmark can compare them.

Layout conventions
------------------
* feature maps are ``[N, H, W, C]``
* a pooling window is flattened row-major, ``src = row * n + col``
* ``perm[..., r]`` is the in-window source index of rank ``r`` (rank 0 is
  the largest value; ties go to the earlier source index)
* im2col columns are ordered ``(kernel_row, kernel_col, channel)``
"""

from __future__ import annotations

import numpy as np

from . import _accel

AVG, MAX, MIN = 0, 1, 2

PERM_DTYPE = np.int16


def _out_shape(shape, m, n, sh, sw):
    N, H, W, C = shape
    return N, (H - m) // sh + 1, (W - n) // sw + 1, C


# ---------------------------------------------------------------- numpy

def _windows_np(x, m, n, sh, sw):
    view = np.lib.stride_tricks.sliding_window_view(x, (m, n), axis=(1, 2))
    view = view[:, ::sh, ::sw]
    N, Ho, Wo, C = view.shape[:4]
    return view.reshape(N, Ho, Wo, C, m * n)


def _fold_np(gwin, shape, m, n, sh, sw):
    """Scatter-add per-window gradients ``[N, Ho, Wo, C, m*n]`` back onto the map."""
    N, Ho, Wo, C, _ = gwin.shape
    H, W = shape[1], shape[2]
    if sh == m and sw == n and H == Ho * m and W == Wo * n:
        g = gwin.reshape(N, Ho, Wo, C, m, n).transpose(0, 1, 4, 2, 5, 3)
        return np.ascontiguousarray(g.reshape(N, H, W, C))
    out = np.zeros(shape, dtype=gwin.dtype)
    g = gwin.reshape(N, Ho, Wo, C, m, n)
    for p in range(m):
        for q in range(n):
            out[:, p:p + sh * (Ho - 1) + 1:sh, q:q + sw * (Wo - 1) + 1:sw, :] += g[..., p, q]
    return out


def ordinal_forward_np(x, w, m, n, sh, sw):
    win = _windows_np(x, m, n, sh, sw)
    perm = np.argsort(-win, axis=-1, kind="stable")
    ranked = np.take_along_axis(win, perm, axis=-1)
    out = (ranked * w.astype(x.dtype)).sum(axis=-1)
    return out, perm.astype(PERM_DTYPE)


def ordinal_backward_np(g, x, w, perm, m, n, sh, sw):
    win = _windows_np(x, m, n, sh, sw)
    p64 = perm.astype(np.intp)
    ranked = np.take_along_axis(win, p64, axis=-1)
    C, mn = w.shape
    gw = (ranked.astype(np.float64) * g.astype(np.float64)[..., None]).reshape(-1, C, mn).sum(axis=0)
    gwin = np.empty(win.shape, dtype=x.dtype)
    np.put_along_axis(gwin, p64, w.astype(x.dtype) * g[..., None], axis=-1)
    return _fold_np(gwin, x.shape, m, n, sh, sw), gw


def classic_forward_np(x, mode, m, n, sh, sw):
    win = _windows_np(x, m, n, sh, sw)
    if mode == AVG:
        return win.sum(axis=-1) / x.dtype.type(m * n), np.empty(0, dtype=PERM_DTYPE)
    arg = win.argmax(axis=-1) if mode == MAX else win.argmin(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return out, arg.astype(PERM_DTYPE)


def classic_backward_np(g, arg, mode, shape, m, n, sh, sw):
    if mode == AVG:
        gwin = np.repeat((g / g.dtype.type(m * n))[..., None], m * n, axis=-1)
    else:
        gwin = np.zeros(g.shape + (m * n,), dtype=g.dtype)
        np.put_along_axis(gwin, arg.astype(np.intp)[..., None], g[..., None], axis=-1)
    return _fold_np(gwin, shape, m, n, sh, sw)


def im2col_np(xp, kh, kw):
    N, Hp, Wp, C = xp.shape
    Ho, Wo = Hp - kh + 1, Wp - kw + 1
    view = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    return view.transpose(0, 1, 2, 4, 5, 3).reshape(N * Ho * Wo, kh * kw * C)


def col2im_np(cols, shape, kh, kw):
    N, Hp, Wp, C = shape
    Ho, Wo = Hp - kh + 1, Wp - kw + 1
    g = cols.reshape(N, Ho, Wo, kh, kw, C)
    out = np.zeros(shape, dtype=cols.dtype)
    for p in range(kh):
        for q in range(kw):
            out[:, p:p + Ho, q:q + Wo, :] += g[:, :, :, p, q, :]
    return out


NUMPY = {
    "ordinal_forward": ordinal_forward_np,
    "ordinal_backward": ordinal_backward_np,
    "classic_forward": classic_forward_np,
    "classic_backward": classic_backward_np,
    "im2col": im2col_np,
    "col2im": col2im_np,
}


# ---------------------------------------------------------------- numba

NUMBA = {}

if _accel.HAVE_NUMBA:
    from numba import njit

    @njit(cache=True)
    def _ord_fwd_nb(x, w, m, n, sh, sw, out, perm):
        N, Ho, Wo, C = out.shape
        mn = m * n
        vals = np.empty((mn, C), dtype=x.dtype)
        idx = np.empty((mn, C), dtype=np.int64)
        for b in range(N):
            for i in range(Ho):
                for j in range(Wo):
                    for p in range(m):
                        for q in range(n):
                            k = p * n + q
                            for c in range(C):
                                vals[k, c] = x[b, i * sh + p, j * sw + q, c]
                                idx[k, c] = k
                    for c in range(C):
                        # stable insertion sort, descending
                        for r in range(1, mn):
                            t = idx[r, c]
                            v = vals[t, c]
                            s = r - 1
                            while s >= 0 and vals[idx[s, c], c] < v:
                                idx[s + 1, c] = idx[s, c]
                                s -= 1
                            idx[s + 1, c] = t
                    for c in range(C):
                        acc = 0.0
                        for r in range(mn):
                            acc += w[c, r] * vals[idx[r, c], c]
                            perm[b, i, j, c, r] = idx[r, c]
                        out[b, i, j, c] = acc

    @njit(cache=True)
    def _ord_fwd_2x2_nb(x, w, sh, sw, out, perm):
        # 5-comparator sorting network; the order (value desc, index asc) is
        # total, so the result equals the stable sort
        N, Ho, Wo, C = out.shape
        for b in range(N):
            for i in range(Ho):
                for j in range(Wo):
                    y = i * sh
                    z = j * sw
                    for c in range(C):
                        v0 = x[b, y, z, c]
                        v1 = x[b, y, z + 1, c]
                        v2 = x[b, y + 1, z, c]
                        v3 = x[b, y + 1, z + 1, c]
                        i0, i1, i2, i3 = 0, 1, 2, 3
                        if v1 > v0:
                            v0, v1 = v1, v0
                            i0, i1 = i1, i0
                        if v3 > v2:
                            v2, v3 = v3, v2
                            i2, i3 = i3, i2
                        if v2 > v0 or (v2 == v0 and i2 < i0):
                            v0, v2 = v2, v0
                            i0, i2 = i2, i0
                        if v3 > v1 or (v3 == v1 and i3 < i1):
                            v1, v3 = v3, v1
                            i1, i3 = i3, i1
                        if v2 > v1 or (v2 == v1 and i2 < i1):
                            v1, v2 = v2, v1
                            i1, i2 = i2, i1
                        acc = w[c, 0] * v0
                        acc += w[c, 1] * v1
                        acc += w[c, 2] * v2
                        acc += w[c, 3] * v3
                        out[b, i, j, c] = acc
                        perm[b, i, j, c, 0] = i0
                        perm[b, i, j, c, 1] = i1
                        perm[b, i, j, c, 2] = i2
                        perm[b, i, j, c, 3] = i3

    @njit(cache=True)
    def _ord_bwd_nb(g, x, w, perm, m, n, sh, sw, gx, gw):
        N, Ho, Wo, C = g.shape
        mn = m * n
        for b in range(N):
            for i in range(Ho):
                for j in range(Wo):
                    for c in range(C):
                        gv = g[b, i, j, c]
                        for r in range(mn):
                            src = perm[b, i, j, c, r]
                            y = i * sh + src // n
                            z = j * sw + src % n
                            gx[b, y, z, c] += w[c, r] * gv
                            gw[c, r] += x[b, y, z, c] * gv

    @njit(cache=True)
    def _classic_fwd_nb(x, mode, m, n, sh, sw, out, arg):
        N, Ho, Wo, C = out.shape
        inv = 1.0 / (m * n)
        for b in range(N):
            for i in range(Ho):
                for j in range(Wo):
                    for c in range(C):
                        if mode == 0:
                            acc = 0.0
                            for p in range(m):
                                for q in range(n):
                                    acc += x[b, i * sh + p, j * sw + q, c]
                            out[b, i, j, c] = acc * inv
                        else:
                            best = x[b, i * sh, j * sw, c]
                            k = 0
                            for p in range(m):
                                for q in range(n):
                                    v = x[b, i * sh + p, j * sw + q, c]
                                    if (mode == 1 and v > best) or (mode == 2 and v < best):
                                        best = v
                                        k = p * n + q
                            out[b, i, j, c] = best
                            arg[b, i, j, c] = k

    @njit(cache=True)
    def _classic_bwd_nb(g, arg, mode, m, n, sh, sw, gx):
        N, Ho, Wo, C = g.shape
        inv = 1.0 / (m * n)
        for b in range(N):
            for i in range(Ho):
                for j in range(Wo):
                    for c in range(C):
                        gv = g[b, i, j, c]
                        if mode == 0:
                            for p in range(m):
                                for q in range(n):
                                    gx[b, i * sh + p, j * sw + q, c] += gv * inv
                        else:
                            k = arg[b, i, j, c]
                            gx[b, i * sh + k // n, j * sw + k % n, c] += gv

    @njit(cache=True)
    def _im2col_nb(xp, kh, kw, cols):
        N, Hp, Wp, C = xp.shape
        Ho, Wo = Hp - kh + 1, Wp - kw + 1
        for b in range(N):
            for i in range(Ho):
                for j in range(Wo):
                    row = (b * Ho + i) * Wo + j
                    for p in range(kh):
                        for q in range(kw):
                            base = (p * kw + q) * C
                            for c in range(C):
                                cols[row, base + c] = xp[b, i + p, j + q, c]

    @njit(cache=True)
    def _col2im_nb(cols, kh, kw, out):
        N, Hp, Wp, C = out.shape
        Ho, Wo = Hp - kh + 1, Wp - kw + 1
        for b in range(N):
            for i in range(Ho):
                for j in range(Wo):
                    row = (b * Ho + i) * Wo + j
                    for p in range(kh):
                        for q in range(kw):
                            base = (p * kw + q) * C
                            for c in range(C):
                                out[b, i + p, j + q, c] += cols[row, base + c]

    def ordinal_forward_nb(x, w, m, n, sh, sw):
        shape = _out_shape(x.shape, m, n, sh, sw)
        out = np.empty(shape, dtype=x.dtype)
        perm = np.empty(shape + (m * n,), dtype=PERM_DTYPE)
        x = np.ascontiguousarray(x)
        w = np.ascontiguousarray(w, dtype=np.float64)
        if m == 2 and n == 2:
            _ord_fwd_2x2_nb(x, w, sh, sw, out, perm)
        else:
            _ord_fwd_nb(x, w, m, n, sh, sw, out, perm)
        return out, perm

    def ordinal_backward_nb(g, x, w, perm, m, n, sh, sw):
        gx = np.zeros(x.shape, dtype=x.dtype)
        gw = np.zeros(w.shape, dtype=np.float64)
        _ord_bwd_nb(np.ascontiguousarray(g, dtype=x.dtype), np.ascontiguousarray(x),
                    np.ascontiguousarray(w, dtype=x.dtype), perm, m, n, sh, sw, gx, gw)
        return gx, gw

    def classic_forward_nb(x, mode, m, n, sh, sw):
        shape = _out_shape(x.shape, m, n, sh, sw)
        out = np.empty(shape, dtype=x.dtype)
        arg = np.zeros(shape if mode != AVG else (0, 0, 0, 0), dtype=PERM_DTYPE)
        _classic_fwd_nb(np.ascontiguousarray(x), mode, m, n, sh, sw, out, arg)
        return out, (arg if mode != AVG else np.empty(0, dtype=PERM_DTYPE))

    def classic_backward_nb(g, arg, mode, shape, m, n, sh, sw):
        gx = np.zeros(shape, dtype=g.dtype)
        if mode == AVG:
            arg = np.zeros((0, 0, 0, 0), dtype=PERM_DTYPE)
        _classic_bwd_nb(np.ascontiguousarray(g), arg, mode, m, n, sh, sw, gx)
        return gx

    def im2col_nb(xp, kh, kw):
        N, Hp, Wp, C = xp.shape
        Ho, Wo = Hp - kh + 1, Wp - kw + 1
        cols = np.empty((N * Ho * Wo, kh * kw * C), dtype=xp.dtype)
        _im2col_nb(np.ascontiguousarray(xp), kh, kw, cols)
        return cols

    def col2im_nb(cols, shape, kh, kw):
        out = np.zeros(shape, dtype=cols.dtype)
        _col2im_nb(np.ascontiguousarray(cols), kh, kw, out)
        return out

    NUMBA = {
        "ordinal_forward": ordinal_forward_nb,
        "ordinal_backward": ordinal_backward_nb,
        "classic_forward": classic_forward_nb,
        "classic_backward": classic_backward_nb,
        "im2col": im2col_nb,
        "col2im": col2im_nb,
    }


ACTIVE = NUMBA if _accel.USE_NUMBA else NUMPY
BACKEND = _accel.BACKEND

ordinal_forward = ACTIVE["ordinal_forward"]
ordinal_backward = ACTIVE["ordinal_backward"]
classic_forward = ACTIVE["classic_forward"]
classic_backward = ACTIVE["classic_backward"]
im2col = ACTIVE["im2col"]
col2im = ACTIVE["col2im"]
