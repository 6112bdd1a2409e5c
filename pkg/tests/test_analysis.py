import numpy as np
import pytest

from ordpool.analysis import (argmax_rank, distribution, enumerate_templates, min_template_distance,
                              nearest_template)
from ordpool.errors import InvalidShapeError, RangeError
from ordpool.pooling import OrdinalKernelSet

IDS_2x2 = ["w1", "w2", "w3", "w4", "w12", "w13", "w14", "w23", "w24", "w34",
           "w123", "w124", "w134", "w234", "w1234"]


def test_enumeration():
    t = enumerate_templates(2, 2)
    assert [x.id for x in t] == IDS_2x2
    assert [x.size for x in t] == [1] * 4 + [2] * 6 + [3] * 4 + [4]
    assert t[4].weights.tolist() == [0.5, 0.5, 0, 0]
    one = enumerate_templates(1, 1)
    assert len(one) == 1 and one[0].weights.tolist() == [1.0]
    assert len(enumerate_templates(3, 3)) == 511
    with pytest.raises(RangeError):
        enumerate_templates(5, 5)


def test_nearest():
    t = enumerate_templates(2, 2)
    assert nearest_template([0.25] * 4, t) == ("w1234", 0.0)
    assert nearest_template([1, 0, 0, 0], t) == ("w1", 0.0)
    tid, d = nearest_template([0.6, 0.3, 0.1, 0.0], t)
    assert tid == "w12" and d == pytest.approx(0.2449489743, abs=1e-9)


def test_nearest_tie_goes_to_canonical_order():
    # halfway between w1 and w2
    tid, _ = nearest_template([0.5, 0.5, 0, 0], enumerate_templates(2, 2)[:4])
    assert tid == "w1"


def test_min_distance():
    assert min_template_distance(enumerate_templates(2, 2)) == pytest.approx(np.sqrt(1 / 12))


def test_distribution_counts():
    sets = [OrdinalKernelSet(2, 2, [[0.25] * 4] * 3)]
    d = distribution(sets)
    assert dict(d.by_template) == {"w1234": 3}
    assert d.grouped("support_size") == {4: 3}
    d = distribution([OrdinalKernelSet(2, 2, [[1, 0, 0, 0], [0, 0, 0, 1]])])
    assert d.grouped("argmax") == {1: 1, 4: 1}
    assert d.total == 2


def test_distribution_csv():
    sets = [OrdinalKernelSet(2, 2, [[1, 0, 0, 0], [0.25] * 4]), OrdinalKernelSet(2, 2, [[0, 0, 0, 1]] * 2)]
    text = distribution(sets, ["a", "b"]).to_csv()
    assert text.splitlines() == [
        "template_id,support_size,argmax_rank,count,run_id",
        "w1,1,1,1,a", "w1234,4,1,1,a", "w4,1,4,2,b"]


def test_distribution_errors():
    with pytest.raises(ValueError):
        distribution([])
    with pytest.raises(InvalidShapeError):
        distribution([OrdinalKernelSet(2, 2, [[1, 0, 0, 0]]), OrdinalKernelSet(1, 2, [[1, 0]])])


def test_large_windows_group_by_argmax_only():
    w = np.zeros((2, 64))
    w[0, 0] = w[1, 5] = 1
    d = distribution([OrdinalKernelSet(8, 8, w)])
    assert not d.enumerated and d.grouped("argmax") == {1: 1, 6: 1}
    assert argmax_rank(w[1]) == 6
