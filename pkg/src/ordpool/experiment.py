"""MNIST ingestion and the paired-training protocol.

A paired run trains a classic-pooling network and its ordinal counterpart
from the same initial non-pooling weights, feeding both the exact same
minibatches in the same order.  Everything is driven by counter-based
streams derived from the run seed, so a run is a pure function of
``(config, seed, data)``.
"""

from __future__ import annotations

import csv
import gzip
import hashlib
import io
import json
import os
import struct
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (IdxCountMismatchError, IdxError, IdxMagicError, IdxTruncatedError,
                     RangeError)
from .network import (SGD, Network, NetworkSpec, build_network, build_paired,
                      extra_ordinal_params, softmax_cross_entropy)
from .rng import RngStream

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
METRIC_COLUMNS = ("run_id", "arm", "epoch", "train_loss", "test_loss", "test_error")
FINAL_METRICS = ("train_loss", "test_loss", "test_error")

_BATCH_STREAM, _AUGMENT_STREAM = 2, 3


# ------------------------------------------------------------------ data

def _read_bytes(path) -> bytes:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _parse_idx(raw: bytes, magic: int, ndim: int, path) -> tuple[tuple[int, ...], bytes]:
    if len(raw) < 4 + 4 * ndim:
        raise IdxTruncatedError(f"{path}: header shorter than {4 + 4 * ndim} bytes")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise IdxMagicError(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    payload = raw[4 + 4 * ndim:]
    need = int(np.prod(dims))
    if len(payload) < need:
        raise IdxTruncatedError(f"{path}: payload has {len(payload)} bytes, header promises {need}")
    return dims, payload[:need]


def write_idx(path, array: np.ndarray) -> None:
    """Write a uint8 array as IDX (3-D images or 1-D labels); gzip if ``path`` ends in .gz."""
    a = np.ascontiguousarray(array, dtype=np.uint8)
    magic = IMAGES_MAGIC if a.ndim == 3 else LABELS_MAGIC
    raw = struct.pack(">I", magic) + struct.pack(f">{a.ndim}I", *a.shape) + a.tobytes()
    if str(path).endswith(".gz"):
        raw = gzip.compress(raw, mtime=0)
    Path(path).write_bytes(raw)


@dataclass
class Dataset:
    images: np.ndarray     # [N, 28, 28] float32 in [0, 1]
    labels: np.ndarray     # [N] int64
    split: str = "train"

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise IdxCountMismatchError(
                f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self):
        return len(self.labels)

    def subset(self, n: int | None) -> "Dataset":
        if n is None or n >= len(self):
            return self
        if n < 1:
            raise RangeError(f"subset size must be >= 1, got {n}")
        return Dataset(self.images[:n], self.labels[:n], self.split)


def load_mnist_idx(images_path, labels_path, split="train") -> Dataset:
    """Parse an IDX image/label pair (plain or gzipped); pixels are scaled by 1/255."""
    (n, rows, cols), pix = _parse_idx(_read_bytes(images_path), IMAGES_MAGIC, 3, images_path)
    if (rows, cols) != (28, 28):
        raise IdxError(f"{images_path}: images are {rows}x{cols}, expected 28x28")
    (nl,), lab = _parse_idx(_read_bytes(labels_path), LABELS_MAGIC, 1, labels_path)
    if nl != n:
        raise IdxCountMismatchError(f"{images_path} holds {n} images but {labels_path} holds {nl} labels")
    labels = np.frombuffer(lab, dtype=np.uint8).astype(np.int64)
    if labels.size and labels.max() > 9:
        raise IdxError(f"{labels_path}: label {labels.max()} outside 0..9")
    images = np.frombuffer(pix, dtype=np.uint8).reshape(n, rows, cols).astype(np.float32) / 255.0
    return Dataset(images, labels, split)


def default_data_dir() -> Path | None:
    env = os.environ.get("ORD_DATA_DIR")
    if env:
        return Path(env)
    here = Path(__file__).resolve().parents[2] / "data" / "mnist"
    return here if here.is_dir() else None


def _find(data_dir: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz"):
        if (data_dir / name).is_file():
            return data_dir / name
    raise FileNotFoundError(f"no {stem}[.gz] under {data_dir}")


def load_mnist(data_dir=None, split="train", limit: int | None = None) -> Dataset:
    d = Path(data_dir) if data_dir else default_data_dir()
    if d is None:
        raise FileNotFoundError("MNIST directory not given; pass --data-dir or set ORD_DATA_DIR")
    img, lab = FILES[split]
    return load_mnist_idx(_find(d, img), _find(d, lab), split).subset(limit)


# ------------------------------------------------------------------ config

@dataclass(frozen=True)
class ExperimentConfig:
    network: str = "baseline"
    arms: tuple[str, ...] = ("avg", "ordinal")
    activation: str = "relu"
    init: str = "average"
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    epochs: int = 5
    batch_size: int = 64
    lr: float = 0.01
    momentum: float = 0.9
    train_size: int = 10000
    test_size: int = 2000
    augment: bool = False
    dtype: str = "float32"

    def __post_init__(self):
        if self.epochs < 0:
            raise RangeError("epochs must be >= 0")
        if self.batch_size < 1:
            raise RangeError("batch size must be >= 1")
        if not self.arms:
            raise RangeError("at least one pooling arm is needed")
        for arm in self.arms:
            self.spec(arm)

    def spec(self, arm: str) -> NetworkSpec:
        return NetworkSpec(self.network, arm, self.activation, self.init)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["arms"], d["seeds"] = list(self.arms), list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        for k in ("arms", "seeds"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    test_loss: float
    test_error: float


@dataclass
class ArmResult:
    arm: str
    history: list[EpochMetrics] = field(default_factory=list)
    batch_digest: str = ""
    kernels: dict = field(default_factory=dict)
    param_count: int = 0

    @property
    def final(self) -> EpochMetrics:
        return self.history[-1]


@dataclass
class PairedRunResult:
    seed: int
    arms: dict[str, ArmResult]

    @property
    def run_id(self) -> str:
        return f"seed-{self.seed}"


# ------------------------------------------------------------------ training

def evaluate(net: Network, ds: Dataset, batch: int = 500) -> tuple[float, float]:
    """``(mean cross-entropy, error rate in %)`` over ``ds``."""
    total, wrong = 0.0, 0
    for s in range(0, len(ds), batch):
        x, y = ds.images[s:s + batch], ds.labels[s:s + batch]
        logits = net.forward(x)
        loss, _ = softmax_cross_entropy(logits, y)
        total += loss * len(y)
        wrong += int((logits.argmax(axis=1) != y).sum())
    return total / len(ds), 100.0 * wrong / len(ds)


def shift_images(images: np.ndarray, rng: RngStream, max_shift: int = 2) -> np.ndarray:
    """Translate each image by up to ``max_shift`` pixels per axis, zero-filled."""
    out = np.zeros_like(images)
    shifts = np.floor(rng.uniform(2 * len(images)) * (2 * max_shift + 1)).astype(int) - max_shift
    H, W = images.shape[1:3]
    for k, (dy, dx) in enumerate(shifts.reshape(-1, 2)):
        ys, yd = (slice(0, H - dy), slice(dy, H)) if dy >= 0 else (slice(-dy, H), slice(0, H + dy))
        xs, xd = (slice(0, W - dx), slice(dx, W)) if dx >= 0 else (slice(-dx, W), slice(0, W + dx))
        out[k, yd, xd] = images[k, ys, xs]
    return out


def build_arms(cfg: ExperimentConfig, seed: int) -> dict[str, Network]:
    dtype = np.dtype(cfg.dtype)
    classic = [a for a in cfg.arms if a != "ordinal"]
    if len(cfg.arms) == 2 and len(classic) == 1:
        nets = build_paired(cfg.spec(classic[0]), cfg.spec("ordinal"), seed, dtype)
        return {classic[0]: nets[0], "ordinal": nets[1]}
    return {arm: build_network(cfg.spec(arm), seed, dtype) for arm in cfg.arms}


def run_arms(cfg: ExperimentConfig, seed: int, train: Dataset, test: Dataset,
             log=None) -> PairedRunResult:
    """Train every arm of ``cfg`` in lock-step on one shared batch sequence.

    Epoch 0 records the untrained networks evaluated on the training and test
    subsets.  For later epochs ``train_loss`` is the mean minibatch loss seen
    during that epoch and the test metrics are measured after it.
    """
    train = train.subset(cfg.train_size)
    test = test.subset(cfg.test_size)
    nets = build_arms(cfg, seed)
    opts = {arm: SGD(cfg.lr, cfg.momentum) for arm in nets}
    results = {arm: ArmResult(arm, param_count=net.param_count()) for arm, net in nets.items()}
    digests = {arm: hashlib.sha256() for arm in nets}
    root = RngStream(seed)
    batch_rng = root.child(_BATCH_STREAM)
    aug_rng = root.child(_AUGMENT_STREAM)

    for arm, net in nets.items():
        tl, _ = evaluate(net, train)
        el, ee = evaluate(net, test)
        results[arm].history.append(EpochMetrics(0, tl, el, ee))

    N = len(train)
    for epoch in range(1, cfg.epochs + 1):
        order = batch_rng.permutation(N)
        sums = {arm: 0.0 for arm in nets}
        for s in range(0, N, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            x, y = train.images[idx], train.labels[idx]
            if cfg.augment:
                x = shift_images(x, aug_rng)
            for arm, net in nets.items():
                digests[arm].update(idx.astype("<i8").tobytes())
                loss = net.loss_and_grad(x, y)
                opts[arm].step(net)
                sums[arm] += loss * len(idx)
        for arm, net in nets.items():
            el, ee = evaluate(net, test)
            results[arm].history.append(EpochMetrics(epoch, sums[arm] / N, el, ee))
            if log:
                log(f"seed {seed} epoch {epoch} {arm}: train {sums[arm] / N:.4f} "
                    f"test {el:.4f} err {ee:.2f}%")

    for arm, net in nets.items():
        results[arm].batch_digest = digests[arm].hexdigest()
        results[arm].kernels = net.kernel_sets()
    return PairedRunResult(seed, results)


def paired_run(cfg: ExperimentConfig, seed: int, train: Dataset, test: Dataset,
               log=None) -> PairedRunResult:
    classic = [a for a in cfg.arms if a != "ordinal"]
    if len(cfg.arms) != 2 or len(classic) != 1:
        raise RangeError(f"a paired run needs one classic arm and 'ordinal', got {cfg.arms}")
    return run_arms(cfg, seed, train, test, log)


# ------------------------------------------------------------------ aggregation

def relative_variation(classic: dict, ordinal: dict, params: tuple[int, int] | None = None) -> dict:
    """Percent change from the classic arm to the ordinal arm.

    ``classic`` and ``ordinal`` map a metric name to per-run values (at least
    two each).  For every metric the mean and the unbiased variance are
    compared as ``100 * (ordinal - classic) / classic``; a zero classic value
    gives ``None`` and is listed under ``"degenerate"``.  ``params`` is
    ``(classic count, extra ordinal parameters)``.
    """
    out: dict = {"metrics": {}, "degenerate": []}
    for metric in classic:
        a = np.asarray(classic[metric], dtype=np.float64)
        b = np.asarray(ordinal[metric], dtype=np.float64)
        if a.size < 2 or b.size < 2:
            raise RangeError(f"{metric}: need >= 2 runs per arm")
        row = {}
        for stat, fa, fb in (("mean", a.mean(), b.mean()),
                             ("variance", a.var(ddof=1), b.var(ddof=1))):
            if fa == 0.0:
                row[stat] = None
                out["degenerate"].append(f"{metric}.{stat}")
            else:
                row[stat] = float(100.0 * (fb - fa) / fa)
        out["metrics"][metric] = row
    if params is not None:
        base, extra = params
        out["parameters"] = {"classic": base, "extra": extra, "percent": 100.0 * extra / base}
    return out


def final_metrics(runs: list[PairedRunResult], arm: str) -> dict[str, list[float]]:
    return {m: [getattr(r.arms[arm].final, m) for r in runs] for m in FINAL_METRICS}


def summarize(cfg: ExperimentConfig, runs: list[PairedRunResult]) -> dict:
    """Pair table, win fractions and (with >= 2 seeds) the relative-variation table."""
    classic = next(a for a in cfg.arms if a != "ordinal")
    pairs = []
    for r in runs:
        c, o = r.arms[classic].final, r.arms["ordinal"].final
        pairs.append({"run_id": r.run_id, "seed": r.seed,
                      "classic_train_loss": c.train_loss, "ordinal_train_loss": o.train_loss,
                      "classic_test_loss": c.test_loss, "ordinal_test_loss": o.test_loss,
                      "classic_test_error": c.test_error, "ordinal_test_error": o.test_error,
                      "same_batches": r.arms[classic].batch_digest == r.arms["ordinal"].batch_digest})
    n = len(pairs)
    wins = {m: sum(p[f"ordinal_{m}"] < p[f"classic_{m}"] for p in pairs) / n for m in FINAL_METRICS}
    out = {"config": cfg.to_dict(), "classic_arm": classic, "pairs": pairs, "win_fraction": wins}
    base, extra = extra_ordinal_params(cfg.network)
    out["parameters"] = {"classic": base, "extra": extra, "percent": 100.0 * extra / base}
    if n >= 2:
        out["relative_variation"] = relative_variation(
            final_metrics(runs, classic), final_metrics(runs, "ordinal"), (base, extra))
    return out


@dataclass
class SweepResult:
    cells: dict = field(default_factory=dict)    # (init, activation, arm) -> mean test error
    raw: dict = field(default_factory=dict)      # same key -> per-seed test errors

    def rows(self):
        for (init, act, arm), mean in sorted(self.cells.items()):
            yield {"init": init, "activation": act, "arm": arm, "mean_test_error": mean,
                   "test_errors": self.raw[(init, act, arm)]}


CLASSIC_FOR_INIT = {"average": "avg", "max": "max", "min": "min"}


def sweep(cfg: ExperimentConfig, inits, activations, train: Dataset, test: Dataset,
          log=None) -> SweepResult:
    """Average test error for each (init, activation) and both pooling families.

    The classic arm for init ``X`` is kernel-free ``X`` pooling; the ordinal
    arm starts from ``X`` kernels.  ``uniform`` has no classic counterpart and
    is run as an ordinal-only arm.
    """
    if not inits or not activations:
        raise RangeError("sweep grid is empty")
    res = SweepResult()
    for init in inits:
        for act in activations:
            classic = CLASSIC_FOR_INIT.get(init)
            arms = (classic, "ordinal") if classic else ("ordinal",)
            c = replace(cfg, arms=arms, init=init, activation=act)
            runs = [run_arms(c, seed, train, test, log) for seed in c.seeds]
            for arm in arms:
                label = "ordinal" if arm == "ordinal" else "classic"
                errs = [r.arms[arm].final.test_error for r in runs]
                res.raw[(init, act, label)] = errs
                res.cells[(init, act, label)] = float(np.mean(errs))
    return res


# ------------------------------------------------------------------ output

def metrics_csv(runs: list[PairedRunResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for r in runs:
        for arm, res in r.arms.items():
            for e in res.history:
                w.writerow([r.run_id, arm, e.epoch, repr(e.train_loss), repr(e.test_loss),
                            repr(e.test_error)])
    return buf.getvalue()


def kernels_document(runs: list[PairedRunResult]) -> dict:
    """``{"runs": {run_id: {layer: kernel set}}}`` for every ordinal arm."""
    return {"runs": {r.run_id: {name: ks.to_dict() for name, ks in r.arms["ordinal"].kernels.items()}
                     for r in runs if "ordinal" in r.arms}}


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"
