"""Classic and ordinal pooling.

Ordinal pooling sorts every ``m x n`` window in decreasing order and takes
the dot product with a per-channel kernel that lives on the probability
simplex.  Kernels are stored in rank order: entry 0 multiplies the largest
value of the window, entry ``m*n - 1`` the smallest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels as K
from .errors import ChannelMismatchError, InvalidKernelError, InvalidShapeError, RangeError
from .rng import RngStream
from .tensor import output_extent, require_finite

SIMPLEX_TOL = 1e-6
MODES = ("avg", "max", "min", "ordinal")
INIT_SCHEMES = ("average", "max", "min", "uniform")
_MODE_CODE = {"avg": K.AVG, "max": K.MAX, "min": K.MIN}


@dataclass(frozen=True)
class PoolMode:
    kind: str
    m: int = 2
    n: int = 2
    stride_h: int | None = None
    stride_w: int | None = None
    global_pool: bool = False

    def __post_init__(self):
        if self.kind not in MODES:
            raise ValueError(f"unknown pooling kind {self.kind!r}")

    def geometry(self, H: int, W: int) -> tuple[int, int, int, int]:
        """Resolved ``(m, n, stride_h, stride_w)`` for an ``H x W`` map."""
        if self.global_pool:
            return H, W, H, W
        sh = self.m if self.stride_h is None else self.stride_h
        sw = self.n if self.stride_w is None else self.stride_w
        return self.m, self.n, sh, sw


class OrdinalKernelSet:
    """``C`` rank-ordered kernels of ``m*n`` weights, stored as float64 ``[C, m*n]``."""

    def __init__(self, m: int, n: int, weights):
        w = np.array(weights, dtype=np.float64)
        if w.ndim == 3:
            w = w.reshape(w.shape[0], -1)
        if m < 1 or n < 1 or w.ndim != 2 or w.shape[1] != m * n or w.shape[0] < 1:
            raise InvalidShapeError(f"weights of shape {np.shape(weights)} do not fit {m}x{n} kernels")
        self.m, self.n = int(m), int(n)
        self.weights = w

    @property
    def C(self) -> int:
        return self.weights.shape[0]

    @property
    def param_count(self) -> int:
        return self.weights.size

    def __repr__(self):
        return f"OrdinalKernelSet(m={self.m}, n={self.n}, C={self.C})"

    def __eq__(self, other):
        return (isinstance(other, OrdinalKernelSet) and (self.m, self.n) == (other.m, other.n)
                and np.array_equal(self.weights, other.weights))

    def simplex_violation(self) -> float:
        w = self.weights
        return float(max(-w.min(), np.abs(w.sum(axis=1) - 1.0).max(), 0.0))

    def validate(self, tol: float = SIMPLEX_TOL) -> None:
        require_finite(self.weights, "ordinal kernel")
        v = self.simplex_violation()
        if v > tol:
            raise InvalidKernelError(f"kernel leaves the simplex by {v:.3g} (tolerance {tol:g})")

    def project(self) -> None:
        self.weights = project_simplex(self.weights)

    def copy(self) -> "OrdinalKernelSet":
        return OrdinalKernelSet(self.m, self.n, self.weights.copy())

    def to_dict(self) -> dict:
        return {"m": self.m, "n": self.n, "C": self.C, "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "OrdinalKernelSet":
        ks = cls(int(d["m"]), int(d["n"]), d["weights"])
        if ks.C != int(d["C"]):
            raise InvalidShapeError(f"C={d['C']} but {ks.C} kernels given")
        return ks


def ordinal_sort(region):
    """Sort a 2-D region in decreasing order.

    Returns ``(ranked, perm)``: ``ranked`` has the region's shape and is
    non-increasing when read row-major; ``perm[r]`` is the ``(row, col)`` of
    the value holding rank ``r`` (0-based).  Ties keep row-major order.
    """
    a = np.asarray(region)
    if a.ndim != 2:
        raise InvalidShapeError(f"expected an m x n region, got shape {a.shape}")
    require_finite(a, "region")
    flat = a.reshape(-1)
    order = np.argsort(-flat, kind="stable")
    perm = np.stack(np.unravel_index(order, a.shape), axis=1)
    return flat[order].reshape(a.shape), perm


def _as_batch(t):
    t = np.asarray(t)
    if t.ndim == 3:
        return t[None], True
    if t.ndim == 4:
        return t, False
    raise InvalidShapeError(f"expected [H, W, C] or [N, H, W, C], got shape {t.shape}")


def _geometry(shape, mode: PoolMode):
    m, n, sh, sw = mode.geometry(shape[1], shape[2])
    output_extent(shape[1], m, sh)
    output_extent(shape[2], n, sw)
    return m, n, sh, sw


def classic_pool_forward(t, mode: PoolMode):
    """Average, max or min pooling.

    ``argselect`` holds, for max/min, the in-window index (row-major) of the
    first element attaining the extremum; it is empty for avg.
    """
    if mode.kind not in _MODE_CODE:
        raise ValueError(f"classic pooling does not support {mode.kind!r}")
    x, squeeze = _as_batch(t)
    require_finite(x, "pooling input")
    m, n, sh, sw = _geometry(x.shape, mode)
    out, arg = K.classic_forward(x, _MODE_CODE[mode.kind], m, n, sh, sw)
    if squeeze:
        return out[0], (arg[0] if arg.size else arg)
    return out, arg


def classic_pool_backward(grad_out, mode: PoolMode, argselect, input_shape):
    g, squeeze = _as_batch(grad_out)
    shape = tuple(input_shape) if not squeeze else (1,) + tuple(input_shape)
    m, n, sh, sw = _geometry(shape, mode)
    expected = (shape[0], (shape[1] - m) // sh + 1, (shape[2] - n) // sw + 1, shape[3])
    if g.shape != expected:
        raise InvalidShapeError(f"grad_out shape {g.shape} does not match forward output {expected}")
    arg = np.asarray(argselect)
    if mode.kind != "avg":
        arg = arg[None] if squeeze else arg
        if arg.shape != g.shape:
            raise InvalidShapeError("argselect does not match grad_out")
    gx = K.classic_backward(g, arg, _MODE_CODE[mode.kind], shape, m, n, sh, sw)
    return gx[0] if squeeze else gx


def _check_kernels(x, kernels: OrdinalKernelSet, m, n, validate=True):
    if kernels.C != x.shape[3]:
        raise ChannelMismatchError(f"{kernels.C} kernels for {x.shape[3]} channels")
    if (kernels.m, kernels.n) != (m, n):
        raise InvalidShapeError(
            f"{kernels.m}x{kernels.n} kernels cannot pool {m}x{n} windows")
    if validate:
        kernels.validate()


def ordinal_pool_forward(t, kernels: OrdinalKernelSet, stride=None, global_pool=False,
                         validate=True):
    """Ordinal pooling of ``t`` (``[H, W, C]`` or ``[N, H, W, C]``).

    Returns ``(out, perms)`` where ``perms[..., r]`` is the in-window source
    index of rank ``r``; keep it for the backward pass.  ``validate=False``
    skips the simplex check (finite differences step off the simplex).
    """
    x, squeeze = _as_batch(t)
    require_finite(x, "pooling input")
    sh, sw = (None, None) if stride is None else stride
    mode = PoolMode("ordinal", kernels.m, kernels.n, sh, sw, global_pool)
    m, n, sh, sw = _geometry(x.shape, mode)
    _check_kernels(x, kernels, m, n, validate)
    out, perm = K.ordinal_forward(x, kernels.weights, m, n, sh, sw)
    return (out[0], perm[0]) if squeeze else (out, perm)


def ordinal_pool_backward(grad_out, kernels: OrdinalKernelSet, perms, t, stride=None,
                          global_pool=False):
    """Gradients of ordinal pooling w.r.t. its input and its kernels.

    The permutation recorded at forward time routes ``w[c, r] * grad`` to the
    source of rank ``r``; the kernel gradient sums ``ranked[r] * grad`` over
    all windows of channel ``c``.  ``grad_w`` is float64 ``[C, m*n]``.
    """
    x, squeeze = _as_batch(t)
    g = np.asarray(grad_out)
    p = np.asarray(perms)
    if squeeze:
        g, p = g[None], p[None]
    sh, sw = (None, None) if stride is None else stride
    mode = PoolMode("ordinal", kernels.m, kernels.n, sh, sw, global_pool)
    m, n, sh, sw = _geometry(x.shape, mode)
    expected = (x.shape[0], (x.shape[1] - m) // sh + 1, (x.shape[2] - n) // sw + 1, x.shape[3])
    if g.shape != expected or p.shape != expected + (m * n,):
        raise InvalidShapeError(
            f"grad_out {g.shape} / perms {p.shape} do not match forward output {expected}")
    gx, gw = K.ordinal_backward(g.astype(x.dtype, copy=False), x, kernels.weights, p, m, n, sh, sw)
    return (gx[0] if squeeze else gx), gw


def project_simplex(v):
    """Euclidean projection of each row of ``v`` onto ``{x >= 0, sum(x) = 1}``.

    Sort-based exact algorithm: with ``u`` sorted decreasingly, the active
    set is the largest ``k`` for which ``u_k > (sum(u_1..u_k) - 1) / k``.
    Accepts a single vector or a ``[rows, d]`` matrix.
    """
    a = np.asarray(v, dtype=np.float64)
    require_finite(a, "vector to project")
    single = a.ndim == 1
    if single:
        a = a[None]
    d = a.shape[1]
    u = -np.sort(-a, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    k = np.arange(1, d + 1)
    active = u - css / k > 0
    rho = d - np.argmax(active[:, ::-1], axis=1)
    theta = css[np.arange(a.shape[0]), rho - 1] / rho
    x = np.maximum(a - theta[:, None], 0.0)
    return x[0] if single else x


def init_kernels(scheme: str, m: int, n: int, C: int, rng: RngStream | None = None) -> OrdinalKernelSet:
    if m * n < 1 or C < 1:
        raise RangeError(f"need m*n >= 1 and C >= 1, got m={m}, n={n}, C={C}")
    mn = m * n
    if scheme == "average":
        w = np.full((C, mn), 1.0 / mn)
    elif scheme == "max":
        w = np.zeros((C, mn))
        w[:, 0] = 1.0
    elif scheme == "min":
        w = np.zeros((C, mn))
        w[:, -1] = 1.0
    elif scheme == "uniform":
        if rng is None:
            raise ValueError("uniform initialisation needs an RngStream")
        w = rng.uniform(C * mn, 0.0, 1.0).reshape(C, mn)
        w /= w.sum(axis=1, keepdims=True)
    else:
        raise ValueError(f"unknown init scheme {scheme!r}")
    return OrdinalKernelSet(m, n, w)
