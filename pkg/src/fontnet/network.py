"""Declarative layer graphs: shape algebra, architecture builders, serialization, checkpoints.

A NetworkSpec is an ordered list of layer descriptors plus the input shape;
all intermediate shapes derive from it without running data. Instantiating a
spec yields a Network holding the actual parameter arrays.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import layers as L

LAYER_KEYS = {
    "conv": ("out", "k", "stride", "pad"),
    "cccp": ("out",),
    "pool": ("k", "stride", "pad"),
    "relu": (),
    "inception": ("widths",),
    "dropout": ("rate",),
    "gap": (),
}

DEFAULT_INCEPTION_WIDTHS = (128, 128, 128, 128, 92)


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    args: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LAYER_KEYS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        expected = set(LAYER_KEYS[self.kind])
        got = set(self.args)
        if got != expected:
            raise ValueError(f"{self.kind} expects keys {sorted(expected)}, got {sorted(got)}")


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple  # (h, w, c)
    layers: tuple

    @property
    def classes(self) -> int:
        return infer_shapes(self)[-1][2]


def conv_spec(out, k, stride=1, pad=0):
    return LayerSpec("conv", {"out": out, "k": k, "stride": stride, "pad": pad})


def cccp_spec(out):
    return LayerSpec("cccp", {"out": out})


def pool_spec(k, stride, pad=0):
    return LayerSpec("pool", {"k": k, "stride": stride, "pad": pad})


def inception_spec(widths):
    widths = tuple(int(w) for w in widths)
    if len(widths) != 5 or any(w < 1 for w in widths):
        raise ValueError("inception needs five positive branch widths")
    return LayerSpec("inception", {"widths": widths})


def _branch_plans(in_channels, widths):
    """Per-branch layer plans for the five-branch inception module.

    Branches: 1x1; 3x3 -> 2x2 -> 2x2 (field 5x5); 2x2 -> 2x2 (field 3x3);
    3x3 -> 3x3 (field 5x5); 3x3 max pool -> 1x1. Every conv keeps spatial
    size (even kernels pad bottom/right only) and is followed by a ReLU.
    """
    w0, w1, w2, w3, w4 = widths
    even = (0, 1, 0, 1)
    return [
        [("conv", in_channels, w0, 1, 1, 0)],
        [("conv", in_channels, w1, 3, 1, 1), ("conv", w1, w1, 2, 1, even), ("conv", w1, w1, 2, 1, even)],
        [("conv", in_channels, w2, 2, 1, even), ("conv", w2, w2, 2, 1, even)],
        [("conv", in_channels, w3, 3, 1, 1), ("conv", w3, w3, 3, 1, 1)],
        [("pool", 3, 1, 1), ("conv", in_channels, w4, 1, 1, 0)],
    ]


def build_inception(in_channels, widths, expect_total=None, dtype=None):
    """Instantiate the five-branch inception module as a composite layer."""
    widths = tuple(widths)
    if expect_total is not None and sum(widths) != expect_total:
        raise ValueError(f"branch widths {widths} sum to {sum(widths)}, expected {expect_total}")
    branches = []
    for plan in _branch_plans(in_channels, widths):
        branch = []
        for step in plan:
            if step[0] == "conv":
                _, cin, cout, k, stride, pad = step
                branch.append(L.Conv(cin, cout, k, stride=stride, pad=pad, dtype=dtype))
                branch.append(L.Relu())
            else:
                _, k, stride, pad = step
                branch.append(L.MaxPool(k, stride, pad=pad))
        branches.append(branch)
    return L.Inception(branches)


def _inception_out_shape(shape, widths):
    h, w, c = shape
    spatial = None
    for plan in _branch_plans(c, widths):
        bh, bw = h, w
        for step in plan:
            if step[0] == "conv":
                _, _, _, k, stride, pad = step
                pt, pb, pl, pr = L._normalize_pad(pad)
                bh = L.conv_output_size(bh, k, stride, pt, pb)
                bw = L.conv_output_size(bw, k, stride, pl, pr)
            else:
                _, k, stride, pad = step
                bh = L.pool_output_size(bh, k, stride, pad)
                bw = L.pool_output_size(bw, k, stride, pad)
        if bh < 1 or bw < 1:
            raise ValueError(f"inception branch output collapsed to {bh}x{bw}")
        if spatial is None:
            spatial = (bh, bw)
        elif spatial != (bh, bw):
            raise ValueError(f"inception branches disagree on spatial size: {spatial} vs {(bh, bw)}")
    return (spatial[0], spatial[1], sum(widths))


def shape_after(spec: LayerSpec, shape):
    """Shape algebra for one layer descriptor."""
    h, w, c = shape
    a = spec.args
    if spec.kind == "conv":
        pt, pb, pl, pr = L._normalize_pad(a["pad"])
        oh = L.conv_output_size(h, a["k"], a["stride"], pt, pb)
        ow = L.conv_output_size(w, a["k"], a["stride"], pl, pr)
        if oh < 1 or ow < 1:
            raise ValueError(f"non-positive conv output {oh}x{ow}")
        return (oh, ow, a["out"])
    if spec.kind == "cccp":
        return (h, w, a["out"])
    if spec.kind == "pool":
        if a["k"] > h + 2 * a["pad"] or a["k"] > w + 2 * a["pad"]:
            raise ValueError(f"pool window {a['k']} exceeds input {h}x{w}")
        return (L.pool_output_size(h, a["k"], a["stride"], a["pad"]),
                L.pool_output_size(w, a["k"], a["stride"], a["pad"]), c)
    if spec.kind == "inception":
        return _inception_out_shape(shape, a["widths"])
    if spec.kind in ("relu", "dropout"):
        return shape
    if spec.kind == "gap":
        return (1, 1, c)
    raise AssertionError(spec.kind)


def infer_shapes(net: NetworkSpec):
    """All intermediate shapes, starting with the input shape."""
    shapes = [tuple(net.input_shape)]
    for spec in net.layers:
        shapes.append(shape_after(spec, shapes[-1]))
    return shapes


def _stack(out, k, pad=0, stride=1, cccps=2, final_relu=True):
    """conv + ReLU followed by a pair (or more) of cross-channel 1x1 layers."""
    specs = [conv_spec(out, k, stride=stride, pad=pad), LayerSpec("relu")]
    for _ in range(cccps):
        specs.append(cccp_spec(out))
        specs.append(LayerSpec("relu"))
    if not final_relu:
        specs.pop()
    return specs


def build_singlechar_ifn(classes=25, inception_widths=DEFAULT_INCEPTION_WIDTHS):
    """The 64x64 single-character network: two conv/CCCP stages, inception, head."""
    if sum(inception_widths) != 604:
        raise ValueError(f"single-char inception widths must sum to 604, got {sum(inception_widths)}")
    specs = []
    specs += _stack(96, 7)
    specs.append(pool_spec(3, 2))
    specs += _stack(256, 7)
    specs.append(pool_spec(3, 2))
    specs.append(inception_spec(inception_widths))
    specs += _stack(512, 3, pad=1)
    specs.append(LayerSpec("dropout", {"rate": 0.5}))
    specs.append(conv_spec(classes, 1))
    specs.append(LayerSpec("gap"))
    return NetworkSpec(input_shape=(64, 64, 1), layers=tuple(specs))


def build_textblock_ifn(classes=25, inception_widths=DEFAULT_INCEPTION_WIDTHS):
    """The 128x128 text-block network: stride-2 entry conv, otherwise the same stack.

    Shapes follow the pooling rule (stage-2 pool yields 12x12); conv 3 pads
    by 1 so the inception/conv-3 stage keeps that spatial size.
    """
    specs = []
    specs += _stack(96, 7, stride=2)
    specs.append(pool_spec(3, 2))
    specs += _stack(256, 7)
    specs.append(pool_spec(3, 2))
    specs.append(inception_spec(inception_widths))
    specs += _stack(512, 3, pad=1)
    specs.append(LayerSpec("dropout", {"rate": 0.5}))
    specs.append(conv_spec(classes, 1))
    specs.append(LayerSpec("gap"))
    return NetworkSpec(input_shape=(128, 128, 1), layers=tuple(specs))


@dataclass(frozen=True)
class MicroConfig:
    """Desk-scale network configuration; topology mirrors the full stack."""

    input_size: int = 32
    channels: int = 8
    classes: int = 5
    dropout_rate: float = 0.5


def build_micro_ifn(cfg: MicroConfig = MicroConfig()):
    """Small trainable network keeping every structural element of the full one."""
    c = cfg.channels
    specs = []
    specs += _stack(c, 5)
    specs.append(pool_spec(3, 2))
    specs += _stack(2 * c, 3)
    specs.append(pool_spec(3, 2))
    specs.append(inception_spec((c, c, c, c, c)))
    for _ in range(2):
        specs.append(cccp_spec(5 * c))
        specs.append(LayerSpec("relu"))
    specs.append(LayerSpec("dropout", {"rate": cfg.dropout_rate}))
    specs.append(conv_spec(cfg.classes, 1))
    specs.append(LayerSpec("gap"))
    return NetworkSpec(input_shape=(cfg.input_size, cfg.input_size, 1), layers=tuple(specs))


class Network:
    """An instantiated NetworkSpec: parameter arrays plus forward/backward."""

    def __init__(self, spec: NetworkSpec, dtype=None, init_rng=None):
        self.spec = spec
        self.dtype = dtype or L.default_dtype()
        self.shapes = infer_shapes(spec)
        self.layers = []
        for lspec, in_shape in zip(spec.layers, self.shapes):
            self.layers.append(self._instantiate(lspec, in_shape))
        if init_rng is not None:
            self.init_params(init_rng)

    def _instantiate(self, lspec: LayerSpec, in_shape):
        c = in_shape[2]
        a = lspec.args
        if lspec.kind == "conv":
            return L.Conv(c, a["out"], a["k"], stride=a["stride"], pad=a["pad"], dtype=self.dtype)
        if lspec.kind == "cccp":
            return L.Conv(c, a["out"], 1, dtype=self.dtype)
        if lspec.kind == "pool":
            return L.MaxPool(a["k"], a["stride"], pad=a["pad"])
        if lspec.kind == "relu":
            return L.Relu()
        if lspec.kind == "inception":
            return build_inception(c, a["widths"], dtype=self.dtype)
        if lspec.kind == "dropout":
            return L.Dropout(a["rate"])
        if lspec.kind == "gap":
            return L.GlobalAvgPool()
        raise AssertionError(lspec.kind)

    def init_params(self, rng):
        for layer in self.layers:
            layer.init_params(rng)

    def params(self):
        out = []
        for i, (lspec, layer) in enumerate(zip(self.spec.layers, self.layers)):
            for name, p, g in layer.params():
                out.append((f"{i:02d}.{lspec.kind}.{name}", p, g))
        return out

    def zero_grads(self):
        for layer in self.layers:
            layer.zero_grads()

    def parameter_count(self) -> int:
        return sum(p.size for _, p, _ in self.params())

    def forward(self, x, train=False, rng=None):
        if tuple(x.shape) != tuple(self.spec.input_shape):
            raise ValueError(f"input shape {x.shape} does not match spec {self.spec.input_shape}")
        y = np.asarray(x, dtype=self.dtype)
        for layer in self.layers:
            y = layer.forward(y, train=train, rng=rng)
        assert np.all(np.isfinite(y)), "non-finite network output"
        return y

    def backward(self, dlogits):
        d = dlogits
        for layer in reversed(self.layers):
            d = layer.backward(d)
        return d

    def confidences(self, img) -> np.ndarray:
        """Post-softmax class probabilities for one uint8 image."""
        logits = self.forward(L.image_to_tensor(img, dtype=self.dtype))
        return L.softmax(logits)


def forward_batch(net: Network, inputs, mode="infer", rngs=None):
    """Per-sample forward passes; 'infer' yields softmax vectors, 'train' raw logit tensors."""
    if mode not in ("infer", "train"):
        raise ValueError("mode must be 'infer' or 'train'")
    out = []
    for i, x in enumerate(inputs):
        rng = rngs[i] if rngs is not None else None
        logits = net.forward(x, train=(mode == "train"), rng=rng)
        out.append(logits if mode == "train" else L.softmax(logits))
    return out


# ---------------------------------------------------------------------------
# spec text format: one layer per line, `kind key=value ...`, canonical order
# ---------------------------------------------------------------------------

def _format_value(value):
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def _parse_value(key, raw):
    if key in ("widths",):
        return tuple(int(t) for t in raw.split(","))
    if key == "pad" and "," in raw:
        return tuple(int(t) for t in raw.split(","))
    if key == "rate":
        return float(raw)
    return int(raw)


def spec_to_text(net: NetworkSpec) -> str:
    h, w, c = net.input_shape
    lines = [f"input h={h} w={w} c={c}"]
    for lspec in net.layers:
        parts = [lspec.kind]
        for key in LAYER_KEYS[lspec.kind]:
            parts.append(f"{key}={_format_value(lspec.args[key])}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def spec_from_text(text: str) -> NetworkSpec:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or not lines[0].startswith("input "):
        raise ValueError("spec text must start with an 'input h=.. w=.. c=..' line")
    head = dict(tok.split("=", 1) for tok in lines[0].split()[1:])
    input_shape = (int(head["h"]), int(head["w"]), int(head["c"]))
    specs = []
    for ln in lines[1:]:
        tokens = ln.split()
        kind = tokens[0]
        if kind not in LAYER_KEYS:
            raise ValueError(f"unknown layer kind {kind!r} in spec text")
        args = {}
        for tok in tokens[1:]:
            key, raw = tok.split("=", 1)
            args[key] = _parse_value(key, raw)
        specs.append(LayerSpec(kind, args))
    return NetworkSpec(input_shape=input_shape, layers=tuple(specs))


def describe(net: NetworkSpec) -> str:
    """Three-column table (Type, Settings, Output size) for visual diffing."""
    shapes = infer_shapes(net)
    rows = [("Type", "Settings", "Output size"),
            ("Input", "", "{} x {} x {}".format(*net.input_shape))]
    conv_idx = 0
    cccp_sub = 0
    for lspec, in_shape, shape in zip(net.layers, shapes, shapes[1:]):
        a = lspec.args
        if lspec.kind == "relu":
            continue
        if lspec.kind == "conv":
            conv_idx += 1
            cccp_sub = 0
            settings = f"{a['out']} x {a['k']} x {a['k']}"
            if a["stride"] != 1:
                settings += f", st. {a['stride']}"
            if a["pad"] not in (0, (0, 0, 0, 0)):
                settings += f", pad {a['pad']}"
            name = f"Conv {conv_idx}"
        elif lspec.kind == "cccp":
            cccp_sub += 1
            settings = f"{a['out']} x 1 x 1"
            name = f"CCCP {conv_idx}_{cccp_sub}"
        elif lspec.kind == "pool":
            settings = f"{a['k']}x{a['k']}, st. {a['stride']}"
            name = "Max-pooling"
        elif lspec.kind == "inception":
            settings = "widths " + ",".join(str(w) for w in a["widths"])
            name = "Modified Inception"
        elif lspec.kind == "dropout":
            settings = str(a["rate"])
            name = "Dropout"
        else:  # gap
            settings = f"{in_shape[0]}x{in_shape[1]}"
            name = "Global Ave Pooling"
        rows.append((name, settings, "{} x {} x {}".format(*shape)))
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    return "\n".join("  ".join(col.ljust(w) for col, w in zip(row, widths)).rstrip()
                     for row in rows) + "\n"


# ---------------------------------------------------------------------------
# checkpoints: text manifest + one little-endian float32 blob
# ---------------------------------------------------------------------------

MANIFEST_NAME = "checkpoint.txt"
BLOB_NAME = "checkpoint.bin"


def save_checkpoint(net: Network, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    lines = []
    blob = bytearray()
    for name, param, _ in net.params():
        shape = ",".join(str(d) for d in param.shape)
        lines.append(f"{name} {shape} {len(blob)}")
        blob += np.ascontiguousarray(param, dtype="<f4").tobytes()
    with open(os.path.join(directory, MANIFEST_NAME), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(os.path.join(directory, BLOB_NAME), "wb") as fh:
        fh.write(bytes(blob))


def load_checkpoint(net: Network, directory) -> None:
    with open(os.path.join(directory, MANIFEST_NAME)) as fh:
        manifest = [ln.split() for ln in fh.read().splitlines() if ln]
    with open(os.path.join(directory, BLOB_NAME), "rb") as fh:
        blob = fh.read()
    params = {name: (param, grad) for name, param, grad in net.params()}
    if [m[0] for m in manifest] != list(params):
        raise ValueError("checkpoint manifest does not match this network's parameters")
    for name, shape_s, offset_s in manifest:
        param, _ = params[name]
        shape = tuple(int(d) for d in shape_s.split(","))
        if shape != param.shape:
            raise ValueError(f"checkpoint shape {shape} != parameter shape {param.shape} for {name}")
        count = param.size
        offset = int(offset_s)
        values = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        param[...] = values.reshape(shape).astype(param.dtype)
