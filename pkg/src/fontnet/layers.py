"""Dense (H, W, C) tensor layers with hand-written forward and gradient transforms.

Convolution is a strided-window gather followed by one tensor contraction, so
it computes the direct summation (no FFT); pooling uses the ceiling output
rule with the last window clamped to the image edge. Convolution with k=1 is
the cross-channel mixing layer (one matrix-vector product per pixel).

Precision: one module-level switch selects the dtype newly created parameters
use. Tests and oracles run float64; training may select float32.
"""
from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import as_strided

_DTYPES = {"float32": np.float32, "float64": np.float64}
_default_dtype = np.float64


def set_default_dtype(name: str) -> None:
    """Select the global parameter precision ('float32' or 'float64')."""
    global _default_dtype
    if name not in _DTYPES:
        raise ValueError(f"unknown precision {name!r}; use one of {sorted(_DTYPES)}")
    _default_dtype = _DTYPES[name]


def default_dtype():
    return _default_dtype


def as_tensor(data, dtype=None) -> np.ndarray:
    """Validate and return an (H, W, C) tensor."""
    x = np.asarray(data, dtype=dtype or _default_dtype)
    if x.ndim != 3:
        raise ValueError(f"expected an (H, W, C) tensor, got shape {x.shape}")
    return x


def image_to_tensor(img: np.ndarray, dtype=None) -> np.ndarray:
    """Map a uint8 image to a single-channel tensor scaled to [0, 1]."""
    x = np.asarray(img, dtype=dtype or _default_dtype) / 255.0
    return x[:, :, None]


def _normalize_pad(pad):
    """Pad spec -> (top, bottom, left, right)."""
    if isinstance(pad, int):
        if pad < 0:
            raise ValueError("pad must be non-negative")
        return (pad, pad, pad, pad)
    pad = tuple(int(p) for p in pad)
    if len(pad) != 4 or any(p < 0 for p in pad):
        raise ValueError(f"pad must be an int or 4-tuple (top, bottom, left, right), got {pad}")
    return pad


def conv_output_size(size: int, k: int, stride: int, pad_lo: int, pad_hi: int) -> int:
    return (size + pad_lo + pad_hi - k) // stride + 1


def pool_output_size(size: int, k: int, stride: int, pad: int) -> int:
    return math.ceil((size + 2 * pad - k) / stride) + 1


def _windows(x: np.ndarray, k: int, stride: int, out_h: int, out_w: int) -> np.ndarray:
    """(out_h, out_w, k, k, C) read-only window view of a contiguous tensor."""
    sh, sw, sc = x.strides
    return as_strided(
        x,
        shape=(out_h, out_w, k, k, x.shape[2]),
        strides=(stride * sh, stride * sw, sh, sw, sc),
        writeable=False,
    )


def relu(x: np.ndarray) -> np.ndarray:
    """Element-wise max(0, x); maps exact zeros to exact zeros."""
    return np.maximum(x, 0)


def concat_channels(tensors) -> np.ndarray:
    """Stack tensors along the channel axis; spatial dimensions must agree."""
    tensors = list(tensors)
    if not tensors:
        raise ValueError("nothing to concatenate")
    spatial = tensors[0].shape[:2]
    for t in tensors[1:]:
        if t.shape[:2] != spatial:
            raise ValueError(f"spatial mismatch: {t.shape[:2]} vs {spatial}")
    return np.concatenate(tensors, axis=2)


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """Reduce each channel map to its mean; output is 1 x 1 x C."""
    return x.mean(axis=(0, 1), keepdims=True)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable softmax over a flattened logit vector."""
    z = np.asarray(logits, dtype=np.float64).ravel()
    e = np.exp(z - z.max())
    return e / e.sum()


def softmax_xent(logits: np.ndarray, label: int):
    """Cross-entropy of softmax(logits) against a class index.

    Returns (loss, gradient) with the gradient shaped like the logits.
    """
    flat = np.asarray(logits).ravel()
    k = flat.shape[0]
    if not 0 <= label < k:
        raise ValueError(f"label {label} out of range for {k} classes")
    probs = softmax(flat)
    loss = -math.log(max(probs[label], np.finfo(np.float64).tiny))
    grad = probs.copy()
    grad[label] -= 1.0
    return loss, grad.reshape(np.shape(logits)).astype(np.asarray(logits).dtype)


class Layer:
    """Base layer: forward caches what backward needs; parameters default to none."""

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def params(self):
        return []

    def zero_grads(self):
        for _, _, grad in self.params():
            grad[...] = 0.0

    def init_params(self, rng):
        pass


class Conv(Layer):
    """k x k convolution (affine only; pair with Relu for activation).

    k=1 with stride 1 is the cross-channel parametric pooling layer.
    """

    def __init__(self, in_channels, out_channels, k, stride=1, pad=0, dtype=None):
        if k < 1 or stride < 1:
            raise ValueError("kernel and stride must be >= 1")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.k = k
        self.stride = stride
        self.pad = _normalize_pad(pad)
        dt = dtype or _default_dtype
        self.kernels = np.zeros((k, k, in_channels, out_channels), dtype=dt)
        self.bias = np.zeros(out_channels, dtype=dt)
        self.grad_kernels = np.zeros_like(self.kernels)
        self.grad_bias = np.zeros_like(self.bias)
        self._cache = None

    def init_params(self, rng):
        fan_in = self.k * self.k * self.in_channels
        scale = math.sqrt(2.0 / fan_in)
        self.kernels[...] = rng.normal(0.0, scale, self.kernels.shape)
        self.bias[...] = 0.0

    def params(self):
        return [("kernels", self.kernels, self.grad_kernels), ("bias", self.bias, self.grad_bias)]

    def out_shape(self, shape):
        h, w, c = shape
        if c != self.in_channels:
            raise ValueError(f"expected {self.in_channels} input channels, got {c}")
        pt, pb, pl, pr = self.pad
        oh = conv_output_size(h, self.k, self.stride, pt, pb)
        ow = conv_output_size(w, self.k, self.stride, pl, pr)
        if oh < 1 or ow < 1:
            raise ValueError(f"non-positive conv output {oh}x{ow} for input {h}x{w}")
        return (oh, ow, self.out_channels)

    def forward(self, x, train=False, rng=None):
        oh, ow, _ = self.out_shape(x.shape)
        pt, pb, pl, pr = self.pad
        if any(self.pad):
            xp = np.pad(x, ((pt, pb), (pl, pr), (0, 0)))
        else:
            xp = np.ascontiguousarray(x)
        win = _windows(xp, self.k, self.stride, oh, ow)
        out = np.tensordot(win, self.kernels, axes=([2, 3, 4], [0, 1, 2])) + self.bias
        self._cache = (xp, win, x.shape)
        return out

    def backward(self, dout):
        xp, win, in_shape = self._cache
        self.grad_bias += dout.sum(axis=(0, 1))
        self.grad_kernels += np.tensordot(win, dout, axes=([0, 1], [0, 1]))
        oh, ow, _ = dout.shape
        s = self.stride
        dxp = np.zeros_like(xp)
        for ki in range(self.k):
            for kj in range(self.k):
                # dout (oh, ow, co) x kernels[ki, kj] (ci, co) -> (oh, ow, ci)
                dxp[ki:ki + s * oh:s, kj:kj + s * ow:s] += dout @ self.kernels[ki, kj].T
        pt, _, pl, _ = self.pad
        h, w, _ = in_shape
        return dxp[pt:pt + h, pl:pl + w]


class Relu(Layer):
    def forward(self, x, train=False, rng=None):
        self._mask = x > 0
        return np.maximum(x, 0)

    def backward(self, dout):
        return dout * self._mask


class MaxPool(Layer):
    """Channel-wise max pooling; output size ceil((in + 2*pad - k)/stride) + 1.

    Windows are clamped to the image (padding contributes nothing to the max).
    """

    def __init__(self, k, stride, pad=0):
        if k < 1 or stride < 1 or pad < 0:
            raise ValueError("bad pooling geometry")
        self.k = k
        self.stride = stride
        self.pad = pad
        self._cache = None

    def out_shape(self, shape):
        h, w, c = shape
        if self.k > h + 2 * self.pad or self.k > w + 2 * self.pad:
            raise ValueError(f"pool window {self.k} exceeds padded input {h}x{w}")
        return (pool_output_size(h, self.k, self.stride, self.pad),
                pool_output_size(w, self.k, self.stride, self.pad), c)

    def _padded(self, x, oh, ow):
        h, w, c = x.shape
        hp = (oh - 1) * self.stride + self.k
        wp = (ow - 1) * self.stride + self.k
        xp = np.full((hp, wp, c), -np.inf, dtype=x.dtype)
        xp[self.pad:self.pad + h, self.pad:self.pad + w] = x
        return xp

    def forward(self, x, train=False, rng=None):
        oh, ow, c = self.out_shape(x.shape)
        xp = self._padded(x, oh, ow)
        win = _windows(xp, self.k, self.stride, oh, ow)
        flat = win.reshape(oh, ow, self.k * self.k, c)
        idx = flat.argmax(axis=2)
        out = np.take_along_axis(flat, idx[:, :, None, :], axis=2)[:, :, 0, :]
        self._cache = (x.shape, xp.shape, idx)
        return out

    def backward(self, dout):
        (h, w, c), (hp, wp, _), idx = self._cache
        oh, ow, _ = dout.shape
        dxp = np.zeros((hp, wp, c), dtype=dout.dtype)
        oy, ox, oc = np.meshgrid(np.arange(oh), np.arange(ow), np.arange(c), indexing="ij")
        rows = oy * self.stride + idx // self.k
        cols = ox * self.stride + idx % self.k
        np.add.at(dxp, (rows, cols, oc), dout)
        return dxp[self.pad:self.pad + h, self.pad:self.pad + w]


class Dropout(Layer):
    """Inverted dropout: zero with probability rate and rescale survivors; inert at inference."""

    def __init__(self, rate):
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.rate = rate
        self._mask = None

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ValueError("training-mode dropout needs an rng")
        keep = 1.0 - self.rate
        self._mask = (rng.random(x.shape) >= self.rate).astype(x.dtype) / keep
        return x * self._mask

    def backward(self, dout):
        if self._mask is None:
            return dout
        return dout * self._mask


class GlobalAvgPool(Layer):
    def forward(self, x, train=False, rng=None):
        self._shape = x.shape
        return global_avg_pool(x)

    def backward(self, dout):
        h, w, c = self._shape
        return np.broadcast_to(dout / (h * w), self._shape).copy()


class Inception(Layer):
    """Parallel branches (each a layer list) whose outputs concatenate channel-wise."""

    def __init__(self, branches):
        self.branches = [list(b) for b in branches]
        self._splits = None

    def forward(self, x, train=False, rng=None):
        outs = []
        for branch in self.branches:
            y = x
            for layer in branch:
                y = layer.forward(y, train=train, rng=rng)
            outs.append(y)
        self._splits = [o.shape[2] for o in outs]
        return concat_channels(outs)

    def backward(self, dout):
        dx = None
        offset = 0
        for branch, width in zip(self.branches, self._splits):
            db = dout[:, :, offset:offset + width]
            offset += width
            for layer in reversed(branch):
                db = layer.backward(db)
            dx = db if dx is None else dx + db
        return dx

    def params(self):
        out = []
        for bi, branch in enumerate(self.branches):
            for li, layer in enumerate(branch):
                for name, p, g in layer.params():
                    out.append((f"b{bi}.{li}.{name}", p, g))
        return out

    def init_params(self, rng):
        for branch in self.branches:
            for layer in branch:
                layer.init_params(rng)


def grad_check(net, x, label, eps=1e-5):
    """Worst relative disagreement between analytic and central-difference gradients.

    Perturbs every parameter scalar. The denominator floors at 1e-6 so
    both-near-zero entries (finite-difference roundoff) do not register; a
    genuinely wrong gradient still reports an O(1) error.
    """
    net.zero_grads()
    loss0, dlogits = softmax_xent(net.forward(x), label)
    net.backward(dlogits)
    worst = 0.0
    for _, param, grad in net.params():
        flat = param.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.shape[0]):
            orig = flat[i]
            flat[i] = orig + eps
            lo_hi, _ = softmax_xent(net.forward(x), label)
            flat[i] = orig - eps
            lo_lo, _ = softmax_xent(net.forward(x), label)
            flat[i] = orig
            numeric = (lo_hi - lo_lo) / (2.0 * eps)
            denom = max(abs(numeric), abs(gflat[i]), 1e-6)
            worst = max(worst, abs(numeric - gflat[i]) / denom)
    return worst
