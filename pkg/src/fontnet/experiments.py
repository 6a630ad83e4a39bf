"""Named comparative experiments over the desk-scale synthetic task.

Every experiment trains the micro network once per (arm, seed), where arms
differ only in the factor under test and seeds are shared across arms. Each
run directory records the config snapshot, seeds, and commit id needed to
reproduce it bit-identically.
"""
from __future__ import annotations

import os
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import blocks as B
from . import data as D
from . import network as N
from . import training as T
from .dropregion import DropConfig

EXPERIMENTS = ("aug-compare", "mesh-compare", "dropcount-sweep", "block-modes")


@dataclass(frozen=True)
class ExperimentConfig:
    seeds: tuple = (1, 2, 3)
    data_seed: int = 5
    chars: int = 40
    train_per_font_char: int = 1
    test_per_font_char: int = 2
    image_size: int = 32
    channels: int = 16
    max_iter: int = 1200
    batch_size: int = 16
    gamma: float = 0.5
    drop_l: int = 5
    drop_n_max: int = 13
    jobs: int = 1
    # block-modes geometry (half the full-scale 320/128/64 ratios)
    block_size: int = 160
    window: int = 64
    window_stride: int = 32
    train_blocks_per_font: int = 12
    test_blocks_per_font: int = 8
    block_max_iter: int = 1200


def _commit_id() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True,
                             text=True, timeout=10)
        return out.stdout.strip() or "unknown"
    except OSError:
        return "unknown"


def _generator_config(cfg: ExperimentConfig) -> D.GeneratorConfig:
    return D.GeneratorConfig(chars=cfg.chars, train_per_font_char=cfg.train_per_font_char,
                             test_per_font_char=cfg.test_per_font_char,
                             image_size=cfg.image_size, seed=cfg.data_seed)


def _train_config(cfg: ExperimentConfig, seed: int, use_dropregion: bool,
                  drop: DropConfig) -> T.TrainConfig:
    return T.TrainConfig(max_iter=cfg.max_iter, batch_size=cfg.batch_size, seed=seed,
                         eval_every=max(1, cfg.max_iter // 4),
                         use_dropregion=use_dropregion, drop=drop)


def _char_arm(args):
    """One (arm, seed) training run on the shared character dataset."""
    cfg, root, arm_name, seed, dropout_rate, use_dropregion, drop = args
    manifest = D.read_manifest(root)
    train_set = D.load_split(manifest, "train")
    test_set = D.load_split(manifest, "test")
    spec = N.build_micro_ifn(N.MicroConfig(input_size=cfg.image_size, channels=cfg.channels,
                                           classes=len(D.DEFAULT_FONTS),
                                           dropout_rate=dropout_rate))
    tcfg = _train_config(cfg, seed, use_dropregion, drop)
    net, metrics = T.train(train_set, spec, tcfg)
    acc, _ = T.evaluate(net, test_set)
    return arm_name, seed, acc, metrics


def _char_arm_defs(name: str, cfg: ExperimentConfig):
    """(arm_name, dropout_rate, use_dropregion, DropConfig) per arm."""
    base = DropConfig(L=cfg.drop_l, n_max=cfg.drop_n_max, gamma=cfg.gamma, mesh_mode="elastic")
    if name == "aug-compare":
        return [("none", 0.0, False, base),
                ("dropout", 0.5, False, base),
                ("dropregion", 0.0, True, base),
                ("both", 0.5, True, base)]
    if name == "mesh-compare":
        return [("fixed", 0.0, True, replace(base, mesh_mode="fixed")),
                ("elastic", 0.0, True, base)]
    if name == "dropcount-sweep":
        return [(f"n={n:02d}", 0.0, True, replace(base, n_max=n))
                for n in range(1, cfg.drop_l ** 2)]
    raise ValueError(f"not a character-task experiment: {name}")


def _write_result(out_dir, header, rows):
    lines = [header]
    lines += [",".join(str(v) for v in row) for row in rows]
    with open(os.path.join(out_dir, "result.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_metadata(out_dir, name, cfg: ExperimentConfig):
    os.makedirs(out_dir, exist_ok=True)
    lines = [f"experiment = {name}", f"commit = {_commit_id()}"]
    for key, value in sorted(vars(cfg).items()):
        lines.append(f"{key} = {value}")
    with open(os.path.join(out_dir, "config.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _run_jobs(jobs, worker, tasks):
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(worker, tasks))
    return [worker(t) for t in tasks]


def run_experiment(name: str, cfg: ExperimentConfig, out_dir) -> dict:
    """Run one named experiment; returns {arm: {seed: accuracy}} and writes CSVs."""
    if name not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {name!r}; valid: {', '.join(EXPERIMENTS)}")
    _write_metadata(out_dir, name, cfg)
    if name == "block-modes":
        return _run_block_modes(cfg, out_dir)

    data_dir = os.path.join(out_dir, "dataset")
    D.gen_char_dataset(_generator_config(cfg), data_dir)
    tasks = [(cfg, data_dir, arm, seed, rate, use_dr, drop)
             for arm, rate, use_dr, drop in _char_arm_defs(name, cfg)
             for seed in cfg.seeds]
    results = _run_jobs(cfg.jobs, _char_arm, tasks)

    by_arm = {}
    metric_lines = ["arm,seed,iter,lr,loss,eval_acc"]
    rows = []
    for arm, seed, acc, metrics in results:
        by_arm.setdefault(arm, {})[seed] = acc
        rows.append((arm, seed, f"{acc:.6f}"))
        for m in metrics:
            acc_s = f"{m['eval_acc']:.6f}" if m["eval_acc"] is not None else ""
            metric_lines.append(f"{arm},{seed},{m['iter']},{m['lr']:.10g},{m['loss']:.10g},{acc_s}")
    for arm in by_arm:
        mean = float(np.mean(list(by_arm[arm].values())))
        rows.append((arm, "mean", f"{mean:.6f}"))
    _write_result(out_dir, "arm,seed,accuracy", rows)
    with open(os.path.join(out_dir, "metrics.csv"), "w") as fh:
        fh.write("\n".join(metric_lines) + "\n")
    return by_arm


# ---------------------------------------------------------------------------
# block-modes: segmented vs sliding-window recognition vs single-unit baseline
# ---------------------------------------------------------------------------

def _segmented_units(img):
    boxes = B.segment_block(B.close_binary(B.binarize(img)))
    from .image import preprocess_char
    return [preprocess_char(box.crop(img)) for box in boxes]


def _center_unit(units):
    return units[len(units) // 2]


def _block_training_sets(cfg: ExperimentConfig, manifest):
    """Char crops (segmented path) and random window crops (free path) from train blocks."""
    train_blocks = D.load_split(manifest, "train")
    crop_images, crop_labels = [], []
    for img, label in zip(train_blocks.images, train_blocks.labels):
        for unit in _segmented_units(img):
            crop_images.append(unit)
            crop_labels.append(label)
    patch_rng = np.random.default_rng((cfg.data_seed, 7))
    patch_images, patch_labels = [], []
    for img, label in zip(train_blocks.images, train_blocks.labels):
        span = cfg.block_size - cfg.window
        for _ in range(16):
            y, x = patch_rng.integers(0, span + 1, size=2)
            patch_images.append(img[y:y + cfg.window, x:x + cfg.window])
            patch_labels.append(label)
    return (T.Dataset(crop_images, np.array(crop_labels)),
            T.Dataset(patch_images, np.array(patch_labels)))


def _run_block_modes(cfg: ExperimentConfig, out_dir) -> dict:
    data_dir = os.path.join(out_dir, "dataset")
    bcfg = D.BlockConfig(block_size=cfg.block_size,
                         train_blocks_per_font=cfg.train_blocks_per_font,
                         test_blocks_per_font=cfg.test_blocks_per_font)
    manifest = D.gen_block_dataset(_generator_config(cfg), bcfg, data_dir)
    crops, patches = _block_training_sets(cfg, manifest)
    test_blocks = D.load_split(manifest, "test")
    classes = len(D.DEFAULT_FONTS)
    drop = DropConfig(L=cfg.drop_l, n_max=cfg.drop_n_max, gamma=cfg.gamma)

    by_arm = {}
    rows = []
    for seed in cfg.seeds:
        char_spec = N.build_micro_ifn(N.MicroConfig(input_size=64, channels=cfg.channels,
                                                    classes=classes))
        tcfg = replace(_train_config(cfg, seed, True, drop), max_iter=cfg.block_max_iter)
        char_net, _ = T.train(crops, char_spec, tcfg)
        patch_spec = N.build_micro_ifn(N.MicroConfig(input_size=cfg.window, channels=cfg.channels,
                                                     classes=classes))
        patch_net, _ = T.train(patches, patch_spec, tcfg)

        seg_hits = seg_single_hits = free_hits = free_single_hits = 0
        for img, label in zip(test_blocks.images, test_blocks.labels):
            pred = B.classify_block_segmented(img, char_net)
            seg_hits += pred.font == label
            single = _center_unit(_segmented_units(img))
            seg_single_hits += int(np.argmax(char_net.confidences(single))) == label

            pred = B.classify_block_free(img, patch_net, cfg.window, cfg.window_stride)
            free_hits += pred.font == label
            grid = B.sliding_patches(img, cfg.window, cfg.window_stride)
            free_single_hits += int(np.argmax(patch_net.confidences(_center_unit(grid)))) == label

        n = len(test_blocks)
        for arm, hits in (("segmented", seg_hits), ("segmented-single", seg_single_hits),
                          ("free", free_hits), ("free-single", free_single_hits)):
            by_arm.setdefault(arm, {})[seed] = hits / n
            rows.append((arm, seed, f"{hits / n:.6f}"))
    for arm in by_arm:
        rows.append((arm, "mean", f"{float(np.mean(list(by_arm[arm].values()))):.6f}"))
    _write_result(out_dir, "arm,seed,accuracy", rows)
    with open(os.path.join(out_dir, "metrics.csv"), "w") as fh:
        fh.write("arm,seed,iter,lr,loss,eval_acc\n")
    return by_arm
