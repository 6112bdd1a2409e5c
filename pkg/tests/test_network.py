import numpy as np
import pytest

from ordpool.errors import IncompatibleSpecError, RangeError
from ordpool.gradcheck import check_network
from ordpool.network import (SGD, Activation, Conv2D, Dense, NetworkSpec, build_network, build_paired,
                             extra_ordinal_params, softmax_cross_entropy)
from ordpool.rng import RngStream


def test_conv_identity_and_shapes():
    c = Conv2D(1, 1, 1, 1, dtype=np.float64)
    c.params["W"][...] = 1
    x = np.random.default_rng(0).normal(size=(2, 5, 5, 1))
    assert np.allclose(c.forward(x), x)
    assert Conv2D(5, 5, 1, 4).out_shape((28, 28, 1)) == (24, 24, 4)
    assert Conv2D(3, 3, 1, 4, zero_pad=True).out_shape((28, 28, 1)) == (28, 28, 4)


def test_dense_identity_and_bias():
    d = Dense(3, 3, dtype=np.float64)
    d.params["W"][...] = np.eye(3)
    x = np.array([[1.0, -2.0, 3.0]])
    assert d.forward(x).tolist() == x.tolist()
    d.params["W"][...] = 0
    d.params["b"][...] = 1
    assert d.forward(x).tolist() == [[1, 1, 1]]


def test_activations():
    x = np.array([-1.0, 0.0, 2.0])
    assert Activation("relu").forward(x).tolist() == [0, 0, 2]
    assert Activation("none").forward(x).tolist() == x.tolist()
    assert Activation("tanh").forward(np.zeros(1))[0] == 0


def test_softmax_ce():
    loss, g = softmax_cross_entropy(np.zeros((1, 10)), [3])
    assert loss == pytest.approx(np.log(10))
    assert g.sum() == pytest.approx(0)
    z = np.zeros((1, 10))
    z[0, 2] = 40
    assert softmax_cross_entropy(z, [2])[0] == pytest.approx(0, abs=1e-15)
    with pytest.raises(RangeError):
        softmax_cross_entropy(np.zeros((1, 10)), [10])


@pytest.mark.parametrize("name,base,extra", [("baseline", 52746, 4224), ("baseline2", 23946, 3328),
                                             ("lenet5", 61706, 88)])
def test_parameter_counts(name, base, extra):
    assert extra_ordinal_params(name) == (base, extra)


def test_paired_same_logits():
    c, o = build_paired(NetworkSpec("baseline", "avg"), NetworkSpec("baseline", "ordinal"), 1)
    x = RngStream(4).uniform(3 * 784).reshape(3, 28, 28)
    assert np.max(np.abs(c.forward(x) - o.forward(x))) <= 1e-6


def test_paired_rejects_structural_difference():
    with pytest.raises(IncompatibleSpecError):
        build_paired(NetworkSpec("baseline", "avg"), NetworkSpec("lenet5", "ordinal"), 1)
    with pytest.raises(IncompatibleSpecError):
        build_paired(NetworkSpec("baseline", "avg", "relu"), NetworkSpec("baseline", "ordinal", "tanh"), 1)


def test_build_deterministic():
    a = build_network(NetworkSpec("lenet5", "ordinal", init="uniform"), 3)
    b = build_network(NetworkSpec("lenet5", "ordinal", init="uniform"), 3)
    assert a.to_dict() == b.to_dict()
    c = build_network(NetworkSpec("lenet5", "ordinal", init="uniform"), 4)
    assert a.to_dict() != c.to_dict()


def test_checkpoint_roundtrip():
    a = build_network(NetworkSpec("baseline2", "ordinal", init="uniform"), 3)
    b = build_network(NetworkSpec("baseline2", "ordinal", init="uniform"), 9)
    b.load_dict(a.to_dict())
    x = RngStream(1).uniform(2 * 784).reshape(2, 28, 28)
    assert np.array_equal(a.forward(x), b.forward(x))


def test_sgd_plain_step():
    net = build_network(NetworkSpec("baseline", "avg"), 0, dtype=np.float64)
    before = {k: l.params[n].copy() for k, l, n in net.named_params()}
    for _, l, n in net.named_params():
        l.grads[n] = np.ones_like(l.params[n])
    SGD(lr=1.0, momentum=0.0).step(net)
    for k, l, n in net.named_params():
        assert np.allclose(l.params[n], before[k] - 1)


def test_sgd_zero_grads_and_projection():
    net = build_network(NetworkSpec("baseline", "ordinal", init="uniform"), 0)
    before = {k: l.params[n].copy() for k, l, n in net.named_params()}
    for _, l, n in net.named_params():
        l.grads[n] = np.zeros_like(l.params[n])
    SGD().step(net)
    for k, l, n in net.named_params():
        assert np.allclose(l.params[n], before[k], atol=1e-15)
    for _, l, n in net.named_params():
        l.grads[n] = np.random.default_rng(0).normal(size=l.params[n].shape)
    SGD(lr=0.5).step(net)
    for l in net.ordinal_layers():
        assert l.kernels.simplex_violation() <= 1e-9


@pytest.mark.parametrize("name", ["baseline", "baseline2", "lenet5"])
@pytest.mark.parametrize("act", ["none", "tanh"])
def test_whole_network_gradient(name, act):
    net = build_network(NetworkSpec(name, "ordinal", act, "uniform"), 2, dtype=np.float64)
    rng = RngStream(11)
    x = rng.uniform(2 * 784).reshape(2, 28, 28)
    errs = check_network(net, x, np.array([3, 7]), rng, samples=6)
    assert max(errs.values()) <= 1e-5, errs
