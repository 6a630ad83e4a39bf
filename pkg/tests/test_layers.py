import math

import numpy as np
import pytest

from fontnet import layers as L
from oracles import ReceptiveField, cccp_by_matvec, conv_by_loops


def make_conv(rng, cin, cout, k, stride=1, pad=0):
    conv = L.Conv(cin, cout, k, stride=stride, pad=pad)
    conv.init_params(rng)
    conv.bias[...] = rng.normal(0, 0.1, conv.bias.shape)
    return conv


def fd_input_grad(layer, x, w, eps=1e-6):
    fd = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        orig = x[i]
        x[i] = orig + eps
        hi = float((layer.forward(x) * w).sum())
        x[i] = orig - eps
        lo = float((layer.forward(x) * w).sum())
        x[i] = orig
        fd[i] = (hi - lo) / (2 * eps)
    return fd


def fd_param_grads(layer, x, w, eps=1e-6):
    out = {}
    for name, p, _ in layer.params():
        flat = p.reshape(-1)
        fd = np.zeros(flat.shape)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float((layer.forward(x) * w).sum())
            flat[i] = orig - eps
            lo = float((layer.forward(x) * w).sum())
            flat[i] = orig
            fd[i] = (hi - lo) / (2 * eps)
        out[name] = fd.reshape(p.shape)
    return out


# ---------------------------------------------------------------------------
# shapes
# ---------------------------------------------------------------------------

def test_conv_shape_64_to_58():
    conv = L.Conv(1, 96, 7)
    assert conv.out_shape((64, 64, 1)) == (58, 58, 96)


def test_conv_non_positive_output_rejected():
    conv = L.Conv(1, 4, 9)
    with pytest.raises(ValueError):
        conv.out_shape((8, 8, 1))


def test_pool_shapes_use_ceiling():
    pool = L.MaxPool(3, 2)
    assert pool.out_shape((58, 58, 96)) == (29, 29, 96)
    assert pool.out_shape((23, 23, 256)) == (11, 11, 256)


def test_pool_window_too_large():
    with pytest.raises(ValueError):
        L.MaxPool(5, 1).out_shape((4, 4, 1))


# ---------------------------------------------------------------------------
# forward correctness against loop oracles
# ---------------------------------------------------------------------------

def test_conv_identity_1x1():
    x = np.random.default_rng(0).normal(size=(6, 5, 1))
    conv = L.Conv(1, 1, 1)
    conv.kernels[0, 0, 0, 0] = 1.0
    assert np.array_equal(conv.forward(x), x)


def test_conv_matches_quadruple_loop():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(6, 6, 2))
    conv = make_conv(rng, 2, 3, 3)
    got = conv.forward(x)
    expect = conv_by_loops(x, conv.kernels, conv.bias)
    assert np.abs(got - expect).max() < 1e-12


def test_conv_stride_pad_matches_loop():
    rng = np.random.default_rng(2)
    for stride, pad in [(2, 0), (1, 1), (2, 1), (1, (0, 1, 0, 1))]:
        x = rng.normal(size=(7, 9, 3))
        conv = make_conv(rng, 3, 2, 2 if pad == (0, 1, 0, 1) else 3, stride=stride, pad=pad)
        got = conv.forward(x)
        expect = conv_by_loops(x, conv.kernels, conv.bias, stride=stride, pad=conv.pad)
        assert np.abs(got - expect).max() < 1e-12


def test_cccp_is_per_pixel_matvec():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(5, 4, 6))
    conv = make_conv(rng, 6, 3, 1)
    got = conv.forward(x)
    expect = cccp_by_matvec(x, conv.kernels, conv.bias)
    assert np.abs(got - expect).max() < 1e-12


def test_maxpool_blocks():
    vals = np.arange(16, dtype=np.float64).reshape(4, 4, 1)
    pool = L.MaxPool(2, 2)
    out = pool.forward(vals)
    assert out[:, :, 0].tolist() == [[5, 7], [13, 15]]


def test_maxpool_clamped_last_window():
    x = np.random.default_rng(4).normal(size=(5, 5, 2))
    pool = L.MaxPool(3, 2)
    out = pool.forward(x)
    assert out.shape == (2, 2, 2)
    # last window covers rows/cols 2..4 only
    assert out[1, 1, 0] == x[2:5, 2:5, 0].max()


def test_relu_cases():
    assert (L.relu(np.full((2, 2, 1), -3.0)) == 0).all()
    zero = np.zeros((2, 2, 1))
    assert (L.relu(zero) == 0).all()
    rng = np.random.default_rng(5)
    x = rng.normal(size=(4, 4, 3))
    assert np.array_equal(L.relu(x), np.where(x > 0, x, 0))


def test_concat_channels():
    rng = np.random.default_rng(6)
    parts = [rng.normal(size=(11, 11, c)) for c in (128, 128, 128, 128, 92)]
    out = L.concat_channels(parts)
    assert out.shape == (11, 11, 604)
    offset = 0
    for part in parts:
        c = part.shape[2]
        assert np.array_equal(out[:, :, offset:offset + c], part)
        offset += c
    single = rng.normal(size=(3, 3, 2))
    assert np.array_equal(L.concat_channels([single]), single)
    with pytest.raises(ValueError):
        L.concat_channels([parts[0], rng.normal(size=(10, 11, 4))])


def test_global_avg_pool():
    assert L.global_avg_pool(np.full((11, 11, 25), 3.5)).shape == (1, 1, 25)
    assert float(L.global_avg_pool(np.full((4, 4, 1), 2.5))[0, 0, 0]) == 2.5
    rng = np.random.default_rng(7)
    x = rng.normal(size=(9, 7, 4))
    got = L.global_avg_pool(x)
    for c in range(4):
        assert abs(got[0, 0, c] - x[:, :, c].sum() / 63) < 1e-12


def test_dropout_contract():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(10, 10, 3))
    assert L.Dropout(0.0).forward(x, train=True, rng=rng) is x
    assert L.Dropout(0.5).forward(x, train=False) is x
    # expectation preserved: mean of dropped-and-scaled ~ mean of x
    big = np.ones((100, 100, 10))
    out = L.Dropout(0.5).forward(big, train=True, rng=np.random.default_rng(9))
    n = big.size
    sigma = math.sqrt(n * 0.25) * 2 / n  # var of mean of Bernoulli(0.5)*2
    assert abs(out.mean() - 1.0) <= 3 * sigma


def test_softmax_xent_uniform():
    logits = np.zeros((1, 1, 25))
    loss, grad = L.softmax_xent(logits, 3)
    assert abs(loss - math.log(25)) < 1e-12
    assert grad.shape == (1, 1, 25)


def test_softmax_xent_confident():
    logits = np.zeros((1, 1, 5))
    logits[0, 0, 2] = 50.0
    loss, _ = L.softmax_xent(logits, 2)
    assert loss < 1e-9


def test_softmax_xent_grad_matches_fd():
    rng = np.random.default_rng(10)
    logits = rng.normal(size=(1, 1, 7))
    label = 4
    _, grad = L.softmax_xent(logits, label)
    eps = 1e-6
    for i in range(7):
        probe = logits.copy()
        probe[0, 0, i] += eps
        hi, _ = L.softmax_xent(probe, label)
        probe[0, 0, i] -= 2 * eps
        lo, _ = L.softmax_xent(probe, label)
        fd = (hi - lo) / (2 * eps)
        assert abs(fd - grad[0, 0, i]) / max(abs(fd), abs(grad[0, 0, i]), 1e-6) < 1e-6


def test_softmax_xent_label_range():
    with pytest.raises(ValueError):
        L.softmax_xent(np.zeros((1, 1, 3)), 3)


# ---------------------------------------------------------------------------
# backward correctness (finite differences on random small shapes)
# ---------------------------------------------------------------------------

def test_layer_gradients_match_fd():
    rng = np.random.default_rng(11)
    cases = [
        (make_conv(rng, 2, 3, 3, stride=1, pad=1), (6, 6, 2)),
        (make_conv(rng, 2, 3, 3, stride=2), (7, 7, 2)),
        (make_conv(rng, 3, 2, 2, pad=(0, 1, 0, 1)), (5, 5, 3)),
        (make_conv(rng, 4, 2, 1), (4, 4, 4)),
        (L.MaxPool(3, 2), (6, 6, 2)),
        (L.MaxPool(3, 1, pad=1), (5, 5, 2)),
        (L.Relu(), (5, 5, 3)),
        (L.GlobalAvgPool(), (6, 5, 4)),
    ]
    for layer, shape in cases:
        x = rng.normal(size=shape)
        y = layer.forward(x)
        w = rng.normal(size=y.shape)
        layer.zero_grads()
        dx = layer.backward(w.copy())
        fd = fd_input_grad(layer, x.copy(), w)
        assert np.abs(fd - dx).max() < 1e-4, type(layer).__name__
        for name, fd_g in fd_param_grads(layer, x, w).items():
            analytic = dict((n, g) for n, _, g in layer.params())[name]
            assert np.abs(fd_g - analytic).max() < 1e-4, (type(layer).__name__, name)


def test_dropout_train_gradient_with_fixed_mask():
    x = np.random.default_rng(12).normal(size=(5, 5, 2))
    layer = L.Dropout(0.5)
    out = layer.forward(x, train=True, rng=np.random.default_rng(13))
    w = np.random.default_rng(14).normal(size=out.shape)
    dx = layer.backward(w.copy())
    # gradient is w * mask/keep, mask recoverable from the output
    scale = np.zeros_like(x)
    nz = x != 0
    scale[nz] = out[nz] / x[nz]
    assert np.abs(dx - w * scale).max() < 1e-12


# ---------------------------------------------------------------------------
# zero propagation through conv(0-bias)+relu stacks
# ---------------------------------------------------------------------------

def test_zero_propagation_geometry():
    rng = np.random.default_rng(15)
    convs = [L.Conv(1, 4, 3), L.Conv(4, 4, 2)]
    for conv in convs:
        conv.init_params(rng)  # biases stay exactly zero
    x = np.abs(rng.normal(size=(12, 12, 1))) + 0.1
    dropped = (slice(2, 8), slice(3, 9))  # all-zero input region
    xz = x.copy()
    xz[dropped] = 0.0

    clean = masked = None
    rf = ReceptiveField()
    for conv in convs:
        clean = L.relu(conv.forward(x if clean is None else clean))
        masked = L.relu(conv.forward(xz if masked is None else masked))
        rf.through(conv.k, conv.stride, 0)

    oh, ow, _ = masked.shape
    for i in range(oh):
        r0, r1 = rf.interval(i)
        for j in range(ow):
            c0, c1 = rf.interval(j)
            inside = (dropped[0].start <= r0 and r1 < dropped[0].stop
                      and dropped[1].start <= c0 and c1 < dropped[1].stop)
            disjoint = (r1 < dropped[0].start or r0 >= dropped[0].stop
                        or c1 < dropped[1].start or c0 >= dropped[1].stop)
            if inside:
                assert (masked[i, j] == 0).all()
            elif disjoint:
                assert np.array_equal(masked[i, j], clean[i, j])


def test_precision_switch():
    L.set_default_dtype("float32")
    try:
        conv = L.Conv(1, 2, 3)
        assert conv.kernels.dtype == np.float32
    finally:
        L.set_default_dtype("float64")
    assert L.Conv(1, 2, 3).kernels.dtype == np.float64
    with pytest.raises(ValueError):
        L.set_default_dtype("float16")
