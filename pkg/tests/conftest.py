import os
import sys
from pathlib import Path

import numpy as np
import pytest

from ordpool.experiment import write_idx

REPO = Path(__file__).resolve().parents[1]
MNIST_DIR = Path(os.environ.get("ORD_DATA_DIR", REPO / "data" / "mnist"))


def have_mnist():
    return (MNIST_DIR / "train-images-idx3-ubyte.gz").exists() or \
        (MNIST_DIR / "train-images-idx3-ubyte").exists()


needs_mnist = pytest.mark.skipif(not have_mnist(), reason="MNIST IDX files not available")


def synthetic_digits(n, seed=0):
    """Tiny learnable stand-in for MNIST: each class lights up its own 6x6 patch."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 10
    rng.shuffle(labels)
    imgs = (rng.random((n, 28, 28)) * 60).astype(np.uint8)
    for k, y in enumerate(labels):
        r, c = 2 + 8 * (y // 3), 2 + 8 * (y % 3)
        imgs[k, r:r + 6, c:c + 6] = 255
    return imgs, labels.astype(np.uint8)


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("mnist")
    for split, n, seed in (("train", 300, 0), ("t10k", 100, 1)):
        imgs, labels = synthetic_digits(n, seed)
        write_idx(d / f"{split}-images-idx3-ubyte.gz", imgs)
        write_idx(d / f"{split}-labels-idx1-ubyte", labels)
    return d


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if not mod or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
