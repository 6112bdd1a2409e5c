"""Central finite-difference checks for every layer kind.

Each check builds a small random float64 instance, contracts the layer
output with a fixed random tensor to get a scalar loss, and compares the
analytic gradients against central differences.  Inputs to sorting-based
layers are drawn so that values inside a window are pairwise separated by
far more than the step ``h``; the ranking therefore does not change under
perturbation and the gradient is well defined.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import Activation, ClassicPool, Conv2D, Dense, OrdinalPool, softmax_cross_entropy
from .pooling import OrdinalKernelSet, PoolMode
from .rng import RngStream

H = 1e-5
TOLERANCE = 1e-5

LAYER_KINDS = ("conv", "conv_zp", "fc", "relu", "tanh", "none", "avg", "max", "min",
               "ordinal", "ordinal_global", "softmax_ce")


def rel_error(analytic, numeric) -> float:
    a = np.asarray(analytic, dtype=np.float64).ravel()
    b = np.asarray(numeric, dtype=np.float64).ravel()
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)


def numeric_grad(f, x: np.ndarray, h: float = H) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. every entry of ``x`` (mutated in place)."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gf[i] = (fp - fm) / (2 * h)
    return g


def _separated(rng: RngStream, shape) -> np.ndarray:
    # distinct magnitudes 0.05 + k * 1e-2 with random signs: every pair of
    # values is >= 1e-2 apart and every value is >= 0.05 away from 0
    size = int(np.prod(shape))
    mags = 0.05 + 1e-2 * rng.permutation(size).astype(np.float64)
    signs = np.where(rng.uniform(size) < 0.5, -1.0, 1.0)
    return (signs * mags).reshape(shape)


def _random_simplex(rng: RngStream, rows: int, d: int) -> np.ndarray:
    w = rng.uniform(rows * d, 0.0, 1.0).reshape(rows, d)
    return w / w.sum(axis=1, keepdims=True)


@dataclass
class CheckResult:
    kind: str
    errors: dict = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0


def _check_layer(kind, layer, x, rng: RngStream, fault=False) -> CheckResult:
    out = layer.forward(x)
    R = rng.uniform(out.size, -1.0, 1.0).reshape(out.shape)

    def loss():
        return float((layer.forward(x) * R).sum())

    layer.forward(x)
    gx = layer.backward(R)
    grads = {k: v.copy() for k, v in layer.grads.items()}
    if fault:
        gx = gx * 1.1
    res = CheckResult(kind)
    res.errors["input"] = rel_error(gx, numeric_grad(loss, x))
    for name, p in layer.params.items():
        res.errors[name] = rel_error(grads[name], numeric_grad(loss, p))
    return res


def check_kind(kind: str, rng: RngStream, fault=False) -> CheckResult:
    """One randomized finite-difference check of a single layer kind."""
    u = lambda *s: rng.uniform(int(np.prod(s)), -1.0, 1.0).reshape(s)
    if kind in ("conv", "conv_zp"):
        layer = Conv2D(3, 3, 2, 3, zero_pad=kind == "conv_zp", dtype=np.float64)
        layer.params["W"][...] = u(3, 3, 2, 3)
        layer.params["b"][...] = u(3)
        return _check_layer(kind, layer, u(2, 6, 6, 2), rng, fault)
    if kind == "fc":
        layer = Dense(7, 5, dtype=np.float64)
        layer.params["W"][...] = u(7, 5)
        layer.params["b"][...] = u(5)
        return _check_layer(kind, layer, u(3, 7), rng, fault)
    if kind in ("relu", "tanh", "none"):
        return _check_layer(kind, Activation(kind), _separated(rng, (2, 4, 4, 3)), rng, fault)
    if kind in ("avg", "max", "min"):
        layer = ClassicPool(PoolMode(kind, 2, 2))
        return _check_layer(kind, layer, _separated(rng, (2, 6, 4, 3)), rng, fault)
    if kind == "ordinal":
        ks = OrdinalKernelSet(2, 2, _random_simplex(rng, 3, 4))
        return _check_layer(kind, OrdinalPool(ks, validate=False), _separated(rng, (2, 4, 6, 3)), rng, fault)
    if kind == "ordinal_global":
        ks = OrdinalKernelSet(3, 3, _random_simplex(rng, 2, 9))
        return _check_layer(kind, OrdinalPool(ks, global_pool=True, validate=False),
                            _separated(rng, (2, 3, 3, 2)), rng, fault)
    if kind == "softmax_ce":
        z = u(4, 10) * 3
        y = rng.permutation(10)[:4]
        _, g = softmax_cross_entropy(z, y)
        if fault:
            g = g * 1.1
        res = CheckResult(kind)
        res.errors["input"] = rel_error(g, numeric_grad(lambda: softmax_cross_entropy(z, y)[0], z))
        return res
    raise ValueError(f"unknown layer kind {kind!r}")


def run_suite(trials: int = 50, seed: int = 0, kinds=LAYER_KINDS, fault_kind: str | None = None):
    """Run ``trials`` checks per layer kind; returns ``{kind: max relative error}``."""
    rng = RngStream(seed)
    worst = {}
    for kind in kinds:
        worst[kind] = 0.0
        for _ in range(trials):
            res = check_kind(kind, rng, fault=kind == fault_kind)
            worst[kind] = max(worst[kind], res.max_error)
    return worst


def min_window_gap(x, m, n) -> float:
    """Smallest gap between two values sharing a non-overlapping ``m x n`` window."""
    N, Hh, W, C = x.shape
    win = x.reshape(N, Hh // m, m, W // n, n, C).transpose(0, 1, 3, 5, 2, 4).reshape(-1, m * n)
    s = np.sort(win, axis=1)
    return float(np.diff(s, axis=1).min()) if m * n > 1 else np.inf


def check_network(net, x, y, rng: RngStream, samples: int = 12) -> dict:
    """Finite-difference check of a whole float64 network on a sample of coordinates.

    Returns ``{param key: relative error}`` plus ``"input"``.
    """
    first = [l for l in net.layers if hasattr(l, "need_input_grad")]
    first[0].need_input_grad = True
    for layer in net.ordinal_layers():
        layer.validate = False
    x = np.array(x, dtype=np.float64)
    if x.ndim == 3:
        x = x[..., None]

    def loss():
        return softmax_cross_entropy(net.forward(x), y)[0]

    _, g = softmax_cross_entropy(net.forward(x), y)
    gx = g
    for layer in reversed(net.layers):
        gx = layer.backward(gx)
    errors = {}
    targets = [("input", x, gx)] + [
        (key, layer.params[name], layer.grads[name].copy()) for key, layer, name in net.named_params()]
    for key, arr, grad in targets:
        flat = arr.reshape(-1)
        idx = rng.permutation(flat.size)[:samples]
        num = np.empty(idx.size)
        for j, i in enumerate(idx):
            old = flat[i]
            flat[i] = old + H
            fp = loss()
            flat[i] = old - H
            fm = loss()
            flat[i] = old
            num[j] = (fp - fm) / (2 * H)
        errors[key] = rel_error(np.asarray(grad).reshape(-1)[idx], num)
    first[0].need_input_grad = False
    for layer in net.ordinal_layers():
        layer.validate = True
    return errors
