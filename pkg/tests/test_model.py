"""Classifier forward/backward unit tests.

Gradient assertions use central finite differences at pinned seeds; the
relu/maxpool kinks make unlucky probes possible in principle, so seeds
stay fixed and tolerances follow the operator contracts.
"""

import numpy as np
import pytest

from patchpose.data import N_CLASSES
from patchpose.model import (
    TinyConvNet,
    _conv_forward,
    _maxpool_backward,
    _maxpool_forward,
    accuracy,
    cross_entropy_and_grad,
    load_model,
    log_softmax,
    save_model,
    softmax,
    train_classifier,
)

from conftest import constant_net


def test_parameter_count():
    # 432+16 + 4608+32 + 18432+64 + 768+12, summed by hand
    assert TinyConvNet(12).n_params() == 24364


def test_zero_params_give_uniform_distribution():
    net = TinyConvNet(N_CLASSES)
    x = np.random.default_rng(0).uniform(0, 1, size=(3, 64, 64, 3))
    logits = net.forward(x)
    assert logits.shape == (3, N_CLASSES)
    assert np.allclose(logits, 0.0)
    assert np.allclose(net.target_log_prob(x, 5), -np.log(N_CLASSES))


def test_input_shapes():
    net = TinyConvNet(N_CLASSES)
    one = np.zeros((64, 64, 3))
    assert net.forward(one).shape == (1, N_CLASSES)
    assert net.predict(np.zeros((2, 64, 64, 3))).shape == (2,)
    with pytest.raises(ValueError):
        net.forward(np.zeros((64, 64)))
    with pytest.raises(ValueError):
        net.forward(np.zeros((1, 32, 64, 3)))
    with pytest.raises(ValueError):
        net.target_log_prob(one, N_CLASSES)


def test_softmax_normalization_and_stability():
    rng = np.random.default_rng(1)
    logits = rng.normal(size=(8, 12)) * 3
    p = softmax(logits)
    assert np.allclose(p.sum(axis=1), 1.0)
    assert np.allclose(np.log(p), log_softmax(logits))
    huge = np.array([[1e4, 0.0, -1e4]])
    p = softmax(huge)
    assert np.isfinite(p).all() and abs(p.sum() - 1.0) < 1e-12


def test_conv_identity_kernel():
    x = np.random.default_rng(2).uniform(size=(2, 8, 8, 3))
    w = np.zeros((3, 3, 3, 3))
    for c in range(3):
        w[1, 1, c, c] = 1.0
    out, _ = _conv_forward(x, w, np.zeros(3))
    assert np.max(np.abs(out - x)) < 1e-12


def test_maxpool_forward_and_tie_routing():
    x = np.array([[1.0, 2.0, 0.0, 0.0],
                  [3.0, 4.0, 0.0, 0.0],
                  [5.0, 5.0, 7.0, 6.0],
                  [5.0, 5.0, 8.0, 8.0]]).reshape(1, 4, 4, 1)
    out, arg = _maxpool_forward(x)
    assert out.ravel().tolist() == [4.0, 0.0, 5.0, 8.0]
    g = _maxpool_backward(np.ones_like(out), arg, x.shape).reshape(4, 4)
    assert g[1, 1] == 1.0  # the unique max
    assert g[0, 2] == 1.0  # all-zero window routes to its first element
    assert g[2, 0] == 1.0 and g[2, 1] == 0.0  # tie -> first occurrence
    assert g[3, 2] == 1.0 and g[3, 3] == 0.0
    assert g.sum() == 4.0


def test_input_gradient_finite_difference(rand_net):
    rng = np.random.default_rng(3)
    x = rng.uniform(0.2, 0.8, size=(2, 64, 64, 3))
    target = 4
    logp, gx = rand_net.objective_and_input_grad(x, target)
    assert logp.shape == (2,) and gx.shape == x.shape

    eps = 1e-5
    for n, i, j, c in [(0, 10, 20, 0), (1, 40, 7, 2), (0, 63, 63, 1),
                       (1, 0, 0, 0), (0, 31, 32, 2), (1, 17, 55, 1),
                       (0, 5, 44, 0), (1, 28, 12, 2), (0, 50, 3, 1),
                       (1, 60, 33, 0)]:
        xp, xm = x.copy(), x.copy()
        xp[n, i, j, c] += eps
        xm[n, i, j, c] -= eps
        fp = float(rand_net.target_log_prob(xp, target).mean())
        fm = float(rand_net.target_log_prob(xm, target).mean())
        fd = (fp - fm) / (2 * eps)
        assert abs(fd - gx[n, i, j, c]) < 1e-3 * max(1.0, abs(fd))


def test_param_gradient_finite_difference(rand_net):
    rng = np.random.default_rng(4)
    x = rng.uniform(0, 1, size=(2, 64, 64, 3))
    y = np.array([3, 7])

    def loss():
        return cross_entropy_and_grad(rand_net.forward(x), y)[0]

    logits, cache = rand_net.forward_with_cache(x)
    _, grad_logits = cross_entropy_and_grad(logits, y)
    grads, _ = rand_net.backward(grad_logits, cache)

    eps = 1e-5
    for name, idx in [("wf", (10, 3)), ("bf", (7,)), ("b2", (5,)),
                      ("w1", (1, 2, 0, 3)), ("w3", (0, 1, 8, 20))]:
        orig = rand_net.params[name][idx]
        rand_net.params[name][idx] = orig + eps
        lp = loss()
        rand_net.params[name][idx] = orig - eps
        lm = loss()
        rand_net.params[name][idx] = orig
        fd = (lp - lm) / (2 * eps)
        assert abs(fd - grads[name][idx]) < 1e-3 * max(1.0, abs(fd))


def test_backward_linear_in_upstream_gradient(rand_net):
    x = np.random.default_rng(5).uniform(size=(2, 64, 64, 3))
    _, cache = rand_net.forward_with_cache(x)
    rng = np.random.default_rng(6)
    g1 = rng.normal(size=(2, N_CLASSES))
    g2 = rng.normal(size=(2, N_CLASSES))
    _, gx1 = rand_net.backward(g1, cache, want_input_grad=True)
    _, gx2 = rand_net.backward(g2, cache, want_input_grad=True)
    _, gmix = rand_net.backward(2.0 * g1 - 0.5 * g2, cache, want_input_grad=True)
    assert np.max(np.abs(gmix - (2.0 * gx1 - 0.5 * gx2))) < 1e-10


def test_objective_matches_log_prob(rand_net):
    x = np.random.default_rng(7).uniform(size=(3, 64, 64, 3))
    logp, _ = rand_net.objective_and_input_grad(x, 2)
    assert np.allclose(logp, rand_net.target_log_prob(x, 2))


def test_cross_entropy_uniform_oracle():
    logits = np.zeros((4, 12))
    y = np.array([0, 3, 6, 11])
    loss, grad = cross_entropy_and_grad(logits, y)
    assert abs(loss - np.log(12)) < 1e-12
    assert abs(grad[0, 0] - (1 / 12 - 1) / 4) < 1e-12
    assert abs(grad[0, 1] - (1 / 12) / 4) < 1e-12


def test_accuracy_with_constant_predictor():
    net = constant_net(5)
    x = np.zeros((10, 64, 64, 3))
    y = np.array([5] * 4 + [0] * 6)
    assert accuracy(net, x, y) == 0.4


def test_train_classifier_deterministic():
    rng = np.random.default_rng(8)
    x = rng.uniform(size=(24, 64, 64, 3))
    y = rng.integers(0, N_CLASSES, size=24)
    nets = []
    for _ in range(2):
        net = TinyConvNet(N_CLASSES)
        train_classifier(net, x, y, x[:6], y[:6], epochs=2, seed=11)
        nets.append(net)
    for k in nets[0].params:
        assert np.array_equal(nets[0].params[k], nets[1].params[k])

    other = TinyConvNet(N_CLASSES)
    train_classifier(other, x, y, x[:6], y[:6], epochs=2, seed=12)
    assert any(not np.array_equal(other.params[k], nets[0].params[k])
               for k in other.params)


def test_save_load_roundtrip(tmp_path, rand_net):
    p = tmp_path / "net.ppnet"
    save_model(rand_net, p)
    back = load_model(p)
    assert back.n_classes == rand_net.n_classes
    for k in rand_net.params:
        assert np.array_equal(back.params[k], rand_net.params[k])

    save_model(rand_net, tmp_path / "again.ppnet")
    assert p.read_bytes() == (tmp_path / "again.ppnet").read_bytes()


def test_load_model_rejects_corrupt_files(tmp_path, rand_net):
    p = tmp_path / "net.ppnet"
    save_model(rand_net, p)
    raw = p.read_bytes()

    bad = tmp_path / "bad.ppnet"
    bad.write_bytes(b"NOPE12" + raw[6:])
    with pytest.raises(ValueError, match="magic"):
        load_model(bad)

    bad.write_bytes(raw[:-16])  # truncated parameter blob
    with pytest.raises(ValueError, match="expected"):
        load_model(bad)
