import numpy as np
import pytest

from ordpool.errors import RangeError
from ordpool.rng import RngStream, rng_uniform, shuffled_indices, splitmix64

MASK = (1 << 64) - 1


def splitmix64_ref(seed, count):
    # straight transcription of the reference C generator
    state, out = seed & MASK, []
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        out.append(z ^ (z >> 31))
    return out


def test_published_vector():
    assert splitmix64(1234567, 0, 3).tolist() == [
        6457827717110365317, 3203168211198807973, 9817491932198370423]


@pytest.mark.parametrize("seed", [0, 1, 7, 2**63 + 5, MASK])
def test_matches_reference(seed):
    assert splitmix64(seed, 0, 50).tolist() == splitmix64_ref(seed, 50)


def test_counter_access():
    full = splitmix64(42, 0, 20)
    assert np.array_equal(splitmix64(42, 7, 5), full[7:12])
    r = RngStream(42)
    a = r.raw(7)
    b = r.raw(13)
    assert np.array_equal(np.concatenate([a, b]), full)
    assert r.position == 20


def test_uniform_repeatable_and_bounded():
    a = rng_uniform(RngStream(7), 3, 0, 1)
    b = rng_uniform(RngStream(7), 3, 0, 1)
    assert a == b and len(a) == 3
    u = RngStream(3).uniform(10000, -2.0, 5.0)
    assert u.min() >= -2.0 and u.max() < 5.0
    assert abs(u.mean() - 1.5) < 0.1


def test_empty_draw_keeps_position():
    r = RngStream(7)
    assert rng_uniform(r, 0, 0, 1) == []
    assert r.position == 0


def test_seeds_differ():
    assert rng_uniform(RngStream(7), 100, 0, 1) != rng_uniform(RngStream(8), 100, 0, 1)


@pytest.mark.parametrize("lo,hi", [(1, 1), (2, 1)])
def test_bad_range(lo, hi):
    with pytest.raises(RangeError):
        RngStream(0).uniform(3, lo, hi)


def test_permutation():
    assert shuffled_indices(RngStream(1), 1).tolist() == [0]
    p = shuffled_indices(RngStream(5), 1000)
    assert sorted(p.tolist()) == list(range(1000))
    assert np.array_equal(p, shuffled_indices(RngStream(5), 1000))
    assert not np.array_equal(p, np.arange(1000))
    with pytest.raises(RangeError):
        shuffled_indices(RngStream(1), 0)


def test_children_independent():
    root = RngStream(9)
    a, b = root.child(1), root.child(2)
    assert not np.array_equal(a.raw(10), b.raw(10))
    assert np.array_equal(RngStream(9).child(1).raw(10), RngStream(9).child(1).raw(10))
    assert root.position == 0
