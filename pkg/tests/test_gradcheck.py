import numpy as np
import pytest

from ordpool.gradcheck import LAYER_KINDS, _separated, min_window_gap, numeric_grad, rel_error, run_suite
from ordpool.rng import RngStream


def test_numeric_grad_quadratic():
    x = np.array([1.0, -2.0, 0.5])
    assert np.allclose(numeric_grad(lambda: float((x ** 2).sum()), x), 2 * x, atol=1e-8)


def test_rel_error():
    assert rel_error([1, 2], [1, 2]) == 0
    assert rel_error([0, 0], [0, 0]) == 0
    assert rel_error([1, 0], [-1, 0]) == 1


def test_inputs_are_separated():
    x = _separated(RngStream(0), (2, 4, 6, 3))
    assert min_window_gap(x, 2, 2) >= 1e-2 - 1e-12
    assert np.abs(x).min() >= 0.05 - 1e-12


@pytest.mark.parametrize("kind", LAYER_KINDS)
def test_each_kind(kind):
    assert run_suite(5, seed=1, kinds=(kind,))[kind] <= 1e-6


def test_fault_detected():
    res = run_suite(2, kinds=("ordinal", "relu"), fault_kind="ordinal")
    assert res["ordinal"] > 1e-3 and res["relu"] <= 1e-6
