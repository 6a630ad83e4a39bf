"""Mini-batch SGD with momentum, weight decay, and the polynomial decay schedule.

Per sample: optional region-drop augmentation, forward, backward; gradients
accumulate over the batch (averaged, so the base learning rate is batch-size
independent), then one parameter update. Every random draw comes from a
seed-derived stream, so runs are bit-reproducible.
"""
from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import layers as L
from . import network as N
from .dropregion import DropConfig, maybe_dropregion

# stream tags: one generator family per purpose, all derived from cfg.seed
_STREAM_BATCH = 1
_STREAM_INIT = 2
_STREAM_SAMPLE = 3


@dataclass(frozen=True)
class TrainConfig:
    base_lr: float = 0.01
    max_iter: int = 5000
    factor: float = 0.5
    momentum: float = 0.9
    weight_decay: float = 2e-4
    batch_size: int = 16
    seed: int = 0
    eval_every: int = 100
    precision: str = "float32"
    use_dropregion: bool = True
    drop: DropConfig = field(default_factory=DropConfig)

    def __post_init__(self):
        if self.base_lr <= 0 or self.max_iter < 1 or self.batch_size < 1:
            raise ValueError("base_lr, max_iter and batch_size must be positive")
        if self.factor < 0 or self.momentum < 0 or self.weight_decay < 0:
            raise ValueError("factor, momentum and weight_decay must be non-negative")


@dataclass
class OptimState:
    velocities: dict  # parameter name -> velocity array
    t: int = 0


def lr_at(iteration: int, cfg: TrainConfig) -> float:
    """base_lr * (1 - iter/max_iter)^factor, clamped to 0 past max_iter."""
    if iteration < 0:
        raise ValueError("iteration must be non-negative")
    if iteration > cfg.max_iter:
        warnings.warn(f"iteration {iteration} past max_iter {cfg.max_iter}; lr clamped to 0")
        return 0.0
    return cfg.base_lr * (1.0 - iteration / cfg.max_iter) ** cfg.factor


def sgd_step(net: N.Network, state: OptimState, lr: float, cfg: TrainConfig) -> None:
    """v <- momentum*v + grad + decay*param; param <- param - lr*v.

    Decay is folded into the gradient and applied to kernels only, never
    biases. Non-finite gradients abort with the offending layer named.
    """
    for name, param, grad in net.params():
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite gradient in {name}")
        g = grad
        if cfg.weight_decay and not name.endswith("bias"):
            g = g + cfg.weight_decay * param
        v = state.velocities[name]
        v *= cfg.momentum
        v += g
        param -= lr * v


@dataclass
class Dataset:
    """In-memory labelled image set."""

    images: list  # uint8 (H, W) arrays
    labels: np.ndarray  # int class indices

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise ValueError("images and labels length mismatch")

    def __len__(self):
        return len(self.images)


def sample_rng(seed: int, iteration: int, slot: int) -> np.random.Generator:
    """Per-sample stream; independent of batch scheduling."""
    return np.random.default_rng((seed, _STREAM_SAMPLE, iteration, slot))


def evaluate(net: N.Network, dataset: Dataset):
    """Argmax accuracy plus a K x K confusion-count matrix; no augmentation or dropout."""
    k = net.spec.classes
    confusion = np.zeros((k, k), dtype=np.int64)
    for img, label in zip(dataset.images, dataset.labels):
        pred = int(np.argmax(net.confidences(img)))
        confusion[label, pred] += 1
    correct = int(np.trace(confusion))
    return correct / max(len(dataset), 1), confusion


def metrics_to_csv(metrics) -> str:
    lines = ["iter,lr,loss,eval_acc"]
    for row in metrics:
        acc = f"{row['eval_acc']:.6f}" if row.get("eval_acc") is not None else ""
        lines.append(f"{row['iter']},{row['lr']:.10g},{row['loss']:.10g},{acc}")
    return "\n".join(lines) + "\n"


def train(dataset: Dataset, spec: N.NetworkSpec, cfg: TrainConfig,
          eval_data: Dataset | None = None, out_dir=None):
    """Run the full optimization loop; returns (trained network, metrics rows).

    When out_dir is given, writes metrics.csv plus final (and best, when an
    eval set is present) checkpoints there.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    k = spec.classes
    if dataset.labels.min() < 0 or dataset.labels.max() >= k:
        raise ValueError(f"labels must lie in 0..{k - 1}")

    net = N.Network(spec, dtype=L._DTYPES[cfg.precision],
                    init_rng=np.random.default_rng((cfg.seed, _STREAM_INIT)))
    state = OptimState(velocities={name: np.zeros_like(p) for name, p, _ in net.params()})
    batch_rng = np.random.default_rng((cfg.seed, _STREAM_BATCH))
    n = len(dataset)
    metrics = []
    best_acc = -1.0

    for t in range(1, cfg.max_iter + 1):
        lr = lr_at(t - 1, cfg)
        replace_draw = n < cfg.batch_size
        batch = batch_rng.choice(n, size=cfg.batch_size, replace=replace_draw)
        net.zero_grads()
        loss_sum = 0.0
        for slot, idx in enumerate(batch):
            rng = sample_rng(cfg.seed, t, slot)
            img = dataset.images[idx]
            if cfg.use_dropregion:
                img = maybe_dropregion(img, cfg.drop, rng)
            x = L.image_to_tensor(img, dtype=net.dtype)
            logits = net.forward(x, train=True, rng=rng)
            loss, dlogits = L.softmax_xent(logits, int(dataset.labels[idx]))
            net.backward(dlogits)
            loss_sum += loss
        for _, _, grad in net.params():
            grad /= cfg.batch_size
        sgd_step(net, state, lr, cfg)
        state.t = t

        row = {"iter": t, "lr": lr, "loss": loss_sum / cfg.batch_size, "eval_acc": None}
        if eval_data is not None and (t % cfg.eval_every == 0 or t == cfg.max_iter):
            acc, _ = evaluate(net, eval_data)
            row["eval_acc"] = acc
            if out_dir is not None and acc > best_acc:
                best_acc = acc
                N.save_checkpoint(net, os.path.join(out_dir, "best"))
        metrics.append(row)

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "metrics.csv"), "w") as fh:
            fh.write(metrics_to_csv(metrics))
        N.save_checkpoint(net, os.path.join(out_dir, "final"))
    return net, metrics


# ---------------------------------------------------------------------------
# plain-text config files: `key = value` lines mirroring TrainConfig
# ---------------------------------------------------------------------------

_DROP_PREFIX = "drop."


def config_to_text(cfg: TrainConfig) -> str:
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if f.name == "drop":
            for df in fields(DropConfig):
                lines.append(f"{_DROP_PREFIX}{df.name} = {getattr(value, df.name)}")
        else:
            lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> TrainConfig:
    plain = {f.name: f for f in fields(TrainConfig) if f.name != "drop"}
    dropf = {f.name: f for f in fields(DropConfig)}
    kwargs = {}
    drop_kwargs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key.startswith(_DROP_PREFIX):
            name = key[len(_DROP_PREFIX):]
            if name not in dropf:
                raise ValueError(f"line {lineno}: unknown config key {key!r}")
            drop_kwargs[name] = _coerce(dropf[name].type, value)
        elif key in plain:
            kwargs[key] = _coerce(plain[key].type, value)
        else:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
    cfg = TrainConfig(**kwargs)
    if drop_kwargs:
        cfg = replace(cfg, drop=DropConfig(**drop_kwargs))
    return cfg


def _coerce(type_name, value: str):
    name = type_name if isinstance(type_name, str) else type_name.__name__
    if name == "int":
        return int(value)
    if name == "float":
        return float(value)
    if name == "bool":
        if value not in ("True", "False"):
            raise ValueError(f"expected True/False, got {value!r}")
        return value == "True"
    return value
