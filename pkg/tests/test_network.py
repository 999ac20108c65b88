import os

import numpy as np
import pytest

from lazynet.errors import DimensionError, InvalidLabelError
from lazynet.network import (NetworkParams, accuracy, cone_scale, forward,
                             forward_batch, init_network, input_gradient,
                             input_gradient_batch, lazy_deviation,
                             load_checkpoint, logistic_loss, project_weights,
                             save_checkpoint, weight_gradient)
from lazynet.numerics import EPS, make_rng

ROOT2 = np.sqrt(2.0)


def hand_net():
    # two units, identity-ish weights; worked out on paper
    w = np.array([[1.0, 0.0], [0.0, 1.0]], order="F")
    w0 = w.copy(order="F")
    w0.flags.writeable = False
    return NetworkParams(a=np.array([1.0, -1.0]), w=w, w0=w0)


def test_forward_hand_value():
    p = hand_net()
    x = np.array([0.6, 0.8])
    # (relu(0.6) - relu(0.8)) / sqrt(2)
    assert abs(forward(p, x) - (-0.2 / ROOT2)) < 1e-15
    np.testing.assert_allclose(forward_batch(p, x[None, :]), [-0.2 / ROOT2],
                               rtol=1e-15)


def test_gradient_hand_value():
    p = hand_net()
    g = input_gradient(p, np.array([0.6, 0.8]))
    np.testing.assert_allclose(g, [1.0 / ROOT2, -1.0 / ROOT2], rtol=1e-15)
    assert abs(np.linalg.norm(g) - 1.0) < 1e-15


def test_relu_derivative_is_zero_at_kink():
    # unit sitting exactly at z=0 contributes nothing to the gradient
    p = hand_net()
    g = input_gradient(p, np.array([0.0, 1.0]))
    np.testing.assert_allclose(g, [0.0, -1.0 / ROOT2], rtol=1e-15)


def test_init_network_layout():
    rng = make_rng(0)
    p = init_network(rng, 5, 64, c0=10.0, seed=0)
    assert p.w.shape == (5, 64) and p.w.flags.f_contiguous
    assert set(np.unique(p.a)) == {-1.0, 1.0}
    assert np.array_equal(p.w, p.w0)
    assert not p.w0.flags.writeable
    with pytest.raises(ValueError):
        p.w0[0, 0] = 1.0
    q = init_network(make_rng(0), 5, 64, c0=10.0, seed=0)
    assert np.array_equal(p.w, q.w) and np.array_equal(p.a, q.a)


def test_init_network_column_scale():
    # E||w_s||^2 = d
    p = init_network(make_rng(1), 20, 2000)
    sq = (p.w0 ** 2).sum(axis=0)
    assert abs(sq.mean() - 20.0) < 4.0 * np.sqrt(2.0 * 20.0 / 2000)


def test_input_gradient_finite_difference():
    # central differences away from relu kinks
    h, checked = 1e-6, 0
    for seed in range(40):
        rng = make_rng(seed)
        d = int(rng.integers(2, 10))
        m = int(rng.integers(2, 20))
        p = init_network(rng, d, m)
        x = rng.standard_normal(d)
        if np.min(np.abs(x @ p.w)) < 1e-3:
            continue
        g = input_gradient(p, x)
        fd = np.empty(d)
        for j in range(d):
            e = np.zeros(d)
            e[j] = h
            fd[j] = (forward(p, x + e) - forward(p, x - e)) / (2.0 * h)
        assert np.linalg.norm(fd - g) <= 1e-5 * max(np.linalg.norm(g), 1e-12)
        checked += 1
    assert checked >= 25


def test_weight_gradient_finite_difference():
    h = 1e-6
    for seed in range(20):
        rng = make_rng(100 + seed)
        d, m, n = 4, 6, 8
        p = init_network(rng, d, m)
        x = rng.standard_normal((n, d))
        y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
        if np.min(np.abs(x @ p.w)) < 1e-3:
            continue
        grad = weight_gradient(p, x, y)
        for _ in range(5):
            i, j = int(rng.integers(d)), int(rng.integers(m))
            wp = p.w.copy(order="F")
            wp[i, j] += h
            wm = p.w.copy(order="F")
            wm[i, j] -= h
            up = NetworkParams(a=p.a, w=wp, w0=p.w0)
            um = NetworkParams(a=p.a, w=wm, w0=p.w0)
            fd = (logistic_loss(up, x, y) - logistic_loss(um, x, y)) / (2.0 * h)
            assert abs(fd - grad[i, j]) <= 1e-5 * max(abs(grad[i, j]), 1e-6)


def test_piecewise_linearity():
    # f is linear along any direction while no unit changes sign
    for seed in range(20):
        rng = make_rng(200 + seed)
        p = init_network(rng, 6, 12)
        x = rng.standard_normal(6)
        if np.min(np.abs(x @ p.w)) < 1e-2:
            continue
        u = rng.standard_normal(6)
        u *= 1e-4 / np.linalg.norm(u)
        f0, f1, f2 = forward(p, x - u), forward(p, x), forward(p, x + u)
        assert abs(f2 - 2.0 * f1 + f0) < 1e-9


def test_positive_homogeneity():
    p = init_network(make_rng(3), 8, 16)
    x = make_rng(4).standard_normal(8)
    np.testing.assert_allclose(forward(p, 2.0 * x), 2.0 * forward(p, x),
                               rtol=1e-12)


def test_loss_decreases_along_negative_gradient():
    rng = make_rng(9)
    p = init_network(rng, 10, 50)
    x = rng.standard_normal((30, 10))
    y = np.where(rng.random(30) < 0.5, 1.0, -1.0)
    g = weight_gradient(p, x, y)
    stepped = NetworkParams(a=p.a, w=np.asfortranarray(p.w - 0.05 * g), w0=p.w0)
    assert logistic_loss(stepped, x, y) < logistic_loss(p, x, y)


def test_accuracy_and_loss_hand_values():
    p = hand_net()
    x = np.array([[0.6, 0.8], [0.8, 0.6]])   # f = -0.2/sqrt2, +0.2/sqrt2
    y = np.array([-1.0, 1.0])
    assert accuracy(p, x, y) == 1.0
    assert accuracy(p, x, -y) == 0.0
    want = np.log1p(np.exp(-0.2 / ROOT2))
    assert abs(logistic_loss(p, x, y) - want) < 1e-12


def test_lazy_deviation_hand_value():
    p = hand_net()
    w = p.w.copy(order="F")
    w[:, 0] += np.array([0.3, 0.4])
    shifted = NetworkParams(a=p.a, w=w, w0=p.w0)
    assert abs(lazy_deviation(shifted) - 0.5) < 1e-15
    assert lazy_deviation(p) == 0.0


def test_project_weights():
    rng = make_rng(12)
    p = init_network(rng, 6, 40)
    w = p.w + 0.2 * rng.standard_normal((6, 40))
    moved = NetworkParams(a=p.a, w=np.asfortranarray(w), w0=p.w0)
    radius = 0.1
    proj = project_weights(moved, radius)
    assert lazy_deviation(proj) <= radius * (1.0 + 4.0 * EPS)
    # inside columns untouched, projection idempotent, a and w0 shared
    inside = np.linalg.norm(moved.w - p.w0, axis=0) <= radius
    assert np.array_equal(proj.w[:, inside], moved.w[:, inside])
    again = project_weights(proj, radius)
    assert np.array_equal(again.w, proj.w)
    assert proj.a is p.a and proj.w0 is p.w0


def test_project_weights_zero_radius_pins_to_init():
    rng = make_rng(13)
    p = init_network(rng, 4, 10)
    moved = NetworkParams(a=p.a, w=np.asfortranarray(p.w + 1.0), w0=p.w0)
    proj = project_weights(moved, 0.0)
    np.testing.assert_allclose(proj.w, p.w0, atol=1e-12)


def test_cone_scale():
    p = hand_net()
    q = cone_scale(p, 3.0)
    np.testing.assert_allclose(q.w, 3.0 * p.w, rtol=1e-15)
    np.testing.assert_allclose(q.w0, 3.0 * p.w0, rtol=1e-15)
    assert np.array_equal(q.a, p.a)
    x = np.array([0.6, 0.8])
    np.testing.assert_allclose(forward(q, x), 3.0 * forward(p, x), rtol=1e-12)
    with pytest.raises(ValueError):
        cone_scale(p, 0.0)


def test_checkpoint_roundtrip(tmp_path):
    rng = make_rng(21)
    p = init_network(rng, 7, 33, c0=5.5, seed=21)
    p.w[2, 5] += 0.25            # trained state differs from init
    path = os.path.join(tmp_path, "net.bin")
    save_checkpoint(p, path)
    q = load_checkpoint(path)
    assert q.w.tobytes() == p.w.tobytes()
    assert q.w0.tobytes() == p.w0.tobytes()
    assert np.array_equal(q.a, p.a)
    assert q.seed == 21 and q.c0 == 5.5
    assert not q.w0.flags.writeable


def test_checkpoint_none_c0(tmp_path):
    p = init_network(make_rng(22), 3, 4)
    path = os.path.join(tmp_path, "net.bin")
    save_checkpoint(p, path)
    assert load_checkpoint(path).c0 is None


def test_checkpoint_rejects_garbage(tmp_path):
    p = init_network(make_rng(23), 3, 4)
    path = os.path.join(tmp_path, "net.bin")
    save_checkpoint(p, path)
    blob = open(path, "rb").read()
    bad_magic = os.path.join(tmp_path, "bad.bin")
    with open(bad_magic, "wb") as fh:
        fh.write(b"XXXXXXXX" + blob[8:])
    with pytest.raises(ValueError):
        load_checkpoint(bad_magic)
    truncated = os.path.join(tmp_path, "short.bin")
    with open(truncated, "wb") as fh:
        fh.write(blob[:-9])
    with pytest.raises(ValueError):
        load_checkpoint(truncated)


def test_input_validation():
    p = hand_net()
    with pytest.raises(DimensionError):
        forward(p, np.zeros(3))
    with pytest.raises(DimensionError):
        forward_batch(p, np.zeros((4, 3)))
    with pytest.raises(InvalidLabelError):
        accuracy(p, np.zeros((2, 2)), np.array([0.0, 1.0]))
    with pytest.raises(InvalidLabelError):
        logistic_loss(p, np.zeros((2, 2)), np.array([2.0, -1.0]))


def test_batch_matches_scalar():
    rng = make_rng(31)
    p = init_network(rng, 9, 17)
    x = rng.standard_normal((25, 9))
    fb = forward_batch(p, x)
    gb = input_gradient_batch(p, x)
    for i in range(25):
        assert abs(fb[i] - forward(p, x[i])) < 1e-14
        np.testing.assert_allclose(gb[i], input_gradient(p, x[i]), atol=1e-14)
