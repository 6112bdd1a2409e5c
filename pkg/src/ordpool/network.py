"""Layers, loss, optimizer and the three MNIST architectures."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import kernels as K
from .errors import IncompatibleSpecError, InvalidShapeError, RangeError
from .pooling import (INIT_SCHEMES, OrdinalKernelSet, PoolMode, classic_pool_backward,
                      classic_pool_forward, init_kernels, ordinal_pool_backward,
                      ordinal_pool_forward, project_simplex)
from .rng import RngStream

NETWORKS = ("baseline", "baseline2", "lenet5")
POOLINGS = ("avg", "max", "min", "ordinal")
ACTIVATIONS = ("none", "relu", "tanh")


# ------------------------------------------------------------------ layers

class Layer:
    kind = "layer"
    params: dict
    grads: dict

    def __init__(self):
        self.params = {}
        self.grads = {}

    def forward(self, x):
        raise NotImplementedError

    def backward(self, g):
        raise NotImplementedError

    def out_shape(self, in_shape):
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind}


class Conv2D(Layer):
    """Stride-1 cross-correlation; weights ``[kh, kw, cin, cout]``."""

    kind = "conv2d"

    def __init__(self, kh, kw, cin, cout, zero_pad=False, dtype=np.float32):
        super().__init__()
        if zero_pad and (kh % 2 == 0 or kw % 2 == 0):
            raise InvalidShapeError("zero padding needs odd kernel extents")
        self.kh, self.kw, self.cin, self.cout = kh, kw, cin, cout
        self.zero_pad = zero_pad
        self.need_input_grad = True
        self.params = {"W": np.zeros((kh, kw, cin, cout), dtype),
                       "b": np.zeros(cout, dtype)}

    @property
    def pad(self):
        return ((self.kh - 1) // 2, (self.kw - 1) // 2) if self.zero_pad else (0, 0)

    def out_shape(self, in_shape):
        H, W, C = in_shape
        if C != self.cin:
            raise InvalidShapeError(f"conv expects {self.cin} channels, got {C}")
        ph, pw = self.pad
        ho, wo = H + 2 * ph - self.kh + 1, W + 2 * pw - self.kw + 1
        if ho < 1 or wo < 1:
            raise InvalidShapeError(f"{self.kh}x{self.kw} kernel does not fit a {H}x{W} map")
        return ho, wo, self.cout

    def forward(self, x):
        N = x.shape[0]
        ho, wo, _ = self.out_shape(x.shape[1:])
        ph, pw = self.pad
        xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0))) if ph or pw else x
        cols = K.im2col(xp, self.kh, self.kw)
        W = self.params["W"].reshape(-1, self.cout)
        out = cols @ W + self.params["b"]
        self._cache = (cols, xp.shape)
        return out.reshape(N, ho, wo, self.cout)

    def backward(self, g):
        cols, xp_shape = self._cache
        g2 = g.reshape(-1, self.cout)
        self.grads["W"] = (cols.T @ g2).reshape(self.params["W"].shape)
        self.grads["b"] = g2.sum(axis=0)
        if not self.need_input_grad:
            return None
        gcols = g2 @ self.params["W"].reshape(-1, self.cout).T
        gxp = K.col2im(gcols, xp_shape, self.kh, self.kw)
        ph, pw = self.pad
        return gxp[:, ph:xp_shape[1] - ph, pw:xp_shape[2] - pw, :]

    def describe(self):
        return {"kind": self.kind, "kh": self.kh, "kw": self.kw, "cin": self.cin,
                "cout": self.cout, "zero_pad": self.zero_pad}


class Dense(Layer):
    kind = "fully_connected"

    def __init__(self, nin, nout, dtype=np.float32):
        super().__init__()
        self.nin, self.nout = nin, nout
        self.need_input_grad = True
        self.params = {"W": np.zeros((nin, nout), dtype), "b": np.zeros(nout, dtype)}

    def out_shape(self, in_shape):
        if tuple(in_shape) != (self.nin,):
            raise InvalidShapeError(f"dense layer expects ({self.nin},), got {tuple(in_shape)}")
        return (self.nout,)

    def forward(self, x):
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, g):
        self.grads["W"] = self._x.T @ g
        self.grads["b"] = g.sum(axis=0)
        return g @ self.params["W"].T if self.need_input_grad else None

    def describe(self):
        return {"kind": self.kind, "nin": self.nin, "nout": self.nout}


class Activation(Layer):
    kind = "activation"

    def __init__(self, fn="relu"):
        super().__init__()
        if fn not in ACTIVATIONS:
            raise ValueError(f"unknown activation {fn!r}")
        self.fn = fn

    def out_shape(self, in_shape):
        return tuple(in_shape)

    def forward(self, x):
        if self.fn == "relu":
            self._mask = x > 0
            return np.maximum(x, x.dtype.type(0))
        if self.fn == "tanh":
            self._y = np.tanh(x)
            return self._y
        return x

    def backward(self, g):
        if self.fn == "relu":
            return g * self._mask
        if self.fn == "tanh":
            return g * (1 - self._y * self._y)
        return g

    def describe(self):
        return {"kind": self.kind, "fn": self.fn}


class Flatten(Layer):
    kind = "flatten"

    def out_shape(self, in_shape):
        return (math.prod(in_shape),)

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, g):
        return g.reshape(self._shape)


class ClassicPool(Layer):
    kind = "pool"

    def __init__(self, mode: PoolMode):
        super().__init__()
        self.mode = mode

    def out_shape(self, in_shape):
        H, W, C = in_shape
        m, n, sh, sw = self.mode.geometry(H, W)
        return (H - m) // sh + 1, (W - n) // sw + 1, C

    def forward(self, x):
        out, self._arg = classic_pool_forward(x, self.mode)
        self._shape = x.shape
        return out

    def backward(self, g):
        return classic_pool_backward(g, self.mode, self._arg, self._shape)

    def describe(self):
        return {"kind": self.kind, "mode": self.mode.kind, "m": self.mode.m,
                "n": self.mode.n, "global": self.mode.global_pool}


class OrdinalPool(Layer):
    """Ordinal pooling with one trainable simplex kernel per channel.

    The kernel array is float64 regardless of the activation precision so the
    simplex constraint survives long runs at 1e-9.
    """

    kind = "pool"

    def __init__(self, kernels: OrdinalKernelSet, global_pool=False, name="pool", validate=True):
        super().__init__()
        self.kernels = kernels
        self.validate = validate
        self.global_pool = global_pool
        self.name = name
        self.params = {"w": kernels.weights}

    def out_shape(self, in_shape):
        H, W, C = in_shape
        if C != self.kernels.C:
            raise InvalidShapeError(f"{self.kernels.C} kernels for {C} channels")
        if self.global_pool:
            if (H, W) != (self.kernels.m, self.kernels.n):
                raise InvalidShapeError(
                    f"global {self.kernels.m}x{self.kernels.n} kernels on a {H}x{W} map")
            return 1, 1, C
        return H // self.kernels.m, W // self.kernels.n, C

    def forward(self, x):
        out, self._perm = ordinal_pool_forward(x, self.kernels, global_pool=self.global_pool,
                                               validate=self.validate)
        self._x = x
        return out

    def backward(self, g):
        gx, gw = ordinal_pool_backward(g, self.kernels, self._perm, self._x,
                                       global_pool=self.global_pool)
        self.grads["w"] = gw
        return gx

    def constrain(self):
        self.params["w"][...] = project_simplex(self.params["w"])

    def describe(self):
        return {"kind": self.kind, "mode": "ordinal", "m": self.kernels.m,
                "n": self.kernels.n, "global": self.global_pool, "name": self.name}


# ------------------------------------------------------------------ loss

def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch and its gradient w.r.t. ``logits``."""
    z = np.asarray(logits)
    y = np.asarray(labels, dtype=np.intp).reshape(-1)
    if z.ndim == 1:
        z = z[None]
    N, k = z.shape
    if y.shape[0] != N:
        raise InvalidShapeError(f"{N} logit rows but {y.shape[0]} labels")
    if y.min() < 0 or y.max() >= k:
        raise RangeError(f"labels must lie in 0..{k - 1}")
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e.sum(axis=1, keepdims=True)
    rows = np.arange(N)
    loss = float((np.log(s[:, 0]) - shifted[rows, y]).astype(np.float64).mean())
    grad = e / s
    grad[rows, y] -= 1
    return loss, grad / z.dtype.type(N)


# ------------------------------------------------------------------ specs

@dataclass(frozen=True)
class NetworkSpec:
    name: str = "baseline"
    pooling: str = "avg"
    activation: str = "relu"
    init: str = "average"

    def __post_init__(self):
        if self.name not in NETWORKS:
            raise ValueError(f"unknown network {self.name!r}; choose from {NETWORKS}")
        if self.pooling not in POOLINGS:
            raise ValueError(f"unknown pooling {self.pooling!r}; choose from {POOLINGS}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.init not in INIT_SCHEMES:
            raise ValueError(f"unknown init scheme {self.init!r}")

    def to_dict(self):
        return asdict(self)


def layer_specs(spec: NetworkSpec) -> list[tuple]:
    """Architecture as a list of plain tuples, input 28x28x1."""
    act, pool = spec.activation, spec.pooling
    if spec.name == "baseline":
        return [("conv", 5, 1, 32, False), ("act", act), ("pool", pool, 2, False),
                ("conv", 5, 32, 64, False), ("act", act), ("pool", pool, 8, True),
                ("flatten",), ("fc", 64, 10)]
    if spec.name == "baseline2":
        return [("conv", 3, 1, 16, True), ("act", act), ("pool", pool, 2, False),
                ("conv", 3, 16, 32, True), ("act", act), ("pool", pool, 2, False),
                ("conv", 3, 32, 64, True), ("act", act), ("pool", pool, 7, True),
                ("flatten",), ("fc", 64, 10)]
    return [("conv", 5, 1, 6, True), ("act", act), ("pool", pool, 2, False),
            ("conv", 5, 6, 16, False), ("act", act), ("pool", pool, 2, False),
            ("flatten",), ("fc", 400, 120), ("act", "relu"), ("fc", 120, 84),
            ("act", "relu"), ("fc", 84, 10)]


class Network:
    input_shape = (28, 28, 1)

    def __init__(self, spec: NetworkSpec, layers: list[Layer], dtype=np.float32):
        self.spec = spec
        self.layers = layers
        self.dtype = np.dtype(dtype)
        shape = self.input_shape
        for layer in layers:
            shape = layer.out_shape(shape)
        if shape != (10,):
            raise InvalidShapeError(f"network ends in shape {shape}, expected (10,)")
        trainable = [l for l in layers if isinstance(l, (Conv2D, Dense))]
        if trainable:
            trainable[0].need_input_grad = False

    def forward(self, x):
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 3:
            x = x[..., None]
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, g):
        for layer in reversed(self.layers):
            g = layer.backward(g)
            if g is None:
                break

    def loss_and_grad(self, x, y):
        loss, g = softmax_cross_entropy(self.forward(x), y)
        self.backward(g)
        return loss

    def named_params(self):
        """``(key, layer, name)`` for every trainable array, in layer order."""
        for i, layer in enumerate(self.layers):
            for name in layer.params:
                yield f"{i}.{name}", layer, name

    def ordinal_layers(self) -> list[OrdinalPool]:
        return [l for l in self.layers if isinstance(l, OrdinalPool)]

    def param_count(self) -> int:
        return sum(layer.params[name].size for _, layer, name in self.named_params())

    def ordinal_param_count(self) -> int:
        return sum(l.kernels.param_count for l in self.ordinal_layers())

    def kernel_sets(self) -> dict[str, OrdinalKernelSet]:
        return {l.name: l.kernels.copy() for l in self.ordinal_layers()}

    def to_dict(self) -> dict:
        layers = []
        for layer in self.layers:
            d = layer.describe()
            d["params"] = {k: {"shape": list(v.shape),
                               "data": v.astype(np.float64).ravel().tolist()}
                           for k, v in layer.params.items()}
            layers.append(d)
        return {"spec": self.spec.to_dict(), "dtype": self.dtype.name, "layers": layers}

    def load_dict(self, d: dict) -> None:
        if len(d["layers"]) != len(self.layers):
            raise IncompatibleSpecError("checkpoint layer count differs from the network")
        for layer, ld in zip(self.layers, d["layers"]):
            for k, v in ld["params"].items():
                arr = np.array(v["data"], dtype=layer.params[k].dtype).reshape(v["shape"])
                layer.params[k][...] = arr


def _glorot(rng: RngStream, shape, fan_in, fan_out, dtype):
    lim = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(math.prod(shape), -lim, lim).reshape(shape).astype(dtype)


def build_network(spec: NetworkSpec, seed: int, dtype=np.float32) -> Network:
    """Instantiate ``spec``.

    Conv and dense weights are Glorot-uniform draws from ``RngStream(seed)``
    taken in layer order; biases start at zero.  Pooling layers never touch
    that stream, so two specs differing only in pooling get identical
    non-pooling weights.  Uniform kernel init uses a derived stream.
    """
    rng = RngStream(seed)
    kernel_rng = rng.child(1)
    layers: list[Layer] = []
    shape = Network.input_shape
    npool = 0
    for ls in layer_specs(spec):
        kind = ls[0]
        if kind == "conv":
            _, k, cin, cout, zp = ls
            layer = Conv2D(k, k, cin, cout, zp, dtype)
            layer.params["W"][...] = _glorot(rng, (k, k, cin, cout), k * k * cin, k * k * cout, dtype)
        elif kind == "fc":
            _, nin, nout = ls
            layer = Dense(nin, nout, dtype)
            layer.params["W"][...] = _glorot(rng, (nin, nout), nin, nout, dtype)
        elif kind == "act":
            layer = Activation(ls[1])
        elif kind == "flatten":
            layer = Flatten()
        else:
            _, mode, size, is_global = ls
            npool += 1
            if mode == "ordinal":
                scheme = "average" if is_global else spec.init
                ks = init_kernels(scheme, size, size, shape[2], kernel_rng)
                layer = OrdinalPool(ks, is_global, name=f"pool{npool}")
            else:
                # global pooling stays average in every classic arm
                kind_ = "avg" if is_global else mode
                layer = ClassicPool(PoolMode(kind_, size, size, global_pool=is_global))
        shape = layer.out_shape(shape)
        layers.append(layer)
    return Network(spec, layers, dtype)


def build_paired(spec_classic: NetworkSpec, spec_ordinal: NetworkSpec, seed: int,
                 dtype=np.float32) -> tuple[Network, Network]:
    if spec_ordinal.pooling != "ordinal" or spec_classic.pooling == "ordinal":
        raise IncompatibleSpecError("need one classic and one ordinal spec")
    if replace(spec_classic, pooling="ordinal", init=spec_ordinal.init) != spec_ordinal:
        raise IncompatibleSpecError(
            f"specs differ beyond pooling: {spec_classic} vs {spec_ordinal}")
    classic = build_network(spec_classic, seed, dtype)
    ordinal = build_network(spec_ordinal, seed, dtype)
    for a, b in zip(classic.layers, ordinal.layers):
        if isinstance(a, (Conv2D, Dense)):
            for k in a.params:
                b.params[k][...] = a.params[k]
    return classic, ordinal


def extra_ordinal_params(name: str) -> tuple[int, int]:
    """``(classic parameter count, extra ordinal parameters)`` for a network."""
    classic = build_network(NetworkSpec(name, "avg"), 0)
    ordinal = build_network(NetworkSpec(name, "ordinal"), 0)
    return classic.param_count(), ordinal.param_count() - classic.param_count()


# ------------------------------------------------------------------ optimizer

class SGD:
    """Classical momentum: ``v = mu * v - lr * g``; ``p += v``.

    Every ordinal kernel is projected back onto the simplex after the step.
    """

    def __init__(self, lr=0.01, momentum=0.9):
        self.lr = lr
        self.momentum = momentum
        self._velocity: dict[str, np.ndarray] = {}

    def step(self, net: Network) -> None:
        for key, layer, name in net.named_params():
            p = layer.params[name]
            g = layer.grads.get(name)
            if g is None:
                continue
            v = self._velocity.get(key)
            if v is None:
                v = self._velocity[key] = np.zeros_like(p)
            v *= p.dtype.type(self.momentum)
            v -= p.dtype.type(self.lr) * g.astype(p.dtype, copy=False)
            p += v
        for layer in net.ordinal_layers():
            layer.constrain()


def sgd_step(net: Network, opt: SGD) -> None:
    opt.step(net)
