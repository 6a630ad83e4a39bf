"""Command-line shell tying the modules together."""
from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import blocks as B
from . import data as D
from . import experiments as E
from . import network as N
from . import training as T
from .dropregion import DropConfig, expand_mask, mesh_for, sample_pattern, apply_mask
from .image import average_heatmap, invert, read_pgm, write_pgm
from .meshing import elastic_mesh, fixed_mesh


def _cmd_gen_data(args):
    cfg = D.GeneratorConfig(chars=args.chars, train_per_font_char=args.train,
                            test_per_font_char=args.test, image_size=args.size,
                            seed=args.seed)
    if args.kind == "char":
        manifest = D.gen_char_dataset(cfg, args.out)
    else:
        bcfg = D.BlockConfig(train_blocks_per_font=args.train, test_blocks_per_font=args.test,
                             block_size=args.block_size)
        manifest = D.gen_block_dataset(cfg, bcfg, args.out)
    print(f"wrote {len(manifest.entries)} images under {args.out}")


def _cmd_mesh(args):
    img = read_pgm(args.input)
    if args.mode == "elastic":
        grid = elastic_mesh(img, args.L)
    else:
        grid = fixed_mesh(img.shape[1], img.shape[0], args.L)
    lines = ["axis,index,position"]
    lines += [f"x,{i + 1},{u}" for i, u in enumerate(grid.u)]
    lines += [f"y,{i + 1},{v}" for i, v in enumerate(grid.v)]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_augment(args):
    img = read_pgm(args.input)
    cfg = DropConfig(L=args.L, n_max=args.n_max, gamma=args.gamma, mesh_mode=args.mode)
    os.makedirs(args.out_dir, exist_ok=True)
    grid = mesh_for(img, cfg)
    lines = ["output,row,col"]
    for i in range(args.count):
        rng = np.random.default_rng((args.seed, i))
        mask = expand_mask(sample_pattern(cfg, rng), grid)
        write_pgm(os.path.join(args.out_dir, f"aug_{i:03d}.pgm"), apply_mask(img, mask))
        for row, col in mask.dropped_cells():
            lines.append(f"{i},{row},{col}")
    with open(os.path.join(args.out_dir, "drops.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {args.count} disrupted images to {args.out_dir}")


_BUILDERS = {
    "singlechar": N.build_singlechar_ifn,
    "textblock": N.build_textblock_ifn,
    "micro": N.build_micro_ifn,
}


def _load_spec(args) -> N.NetworkSpec:
    if args.spec:
        with open(args.spec) as fh:
            return N.spec_from_text(fh.read())
    return _BUILDERS[args.net]()


def _cmd_describe(args):
    sys.stdout.write(N.describe(_load_spec(args)))


def _cmd_train(args):
    with open(args.config) as fh:
        cfg = T.config_from_text(fh.read())
    manifest = D.read_manifest(args.data)
    train_set = D.load_split(manifest, "train")
    test_set = D.load_split(manifest, "test")
    spec = _load_spec(args)
    started = time.perf_counter()
    net, metrics = T.train(train_set, spec, cfg, eval_data=test_set, out_dir=args.out)
    with open(os.path.join(args.out, "spec.txt"), "w") as fh:
        fh.write(N.spec_to_text(spec))
    with open(os.path.join(args.out, "config.txt"), "w") as fh:
        fh.write(T.config_to_text(cfg))
    acc, _ = T.evaluate(net, test_set)
    print(f"trained {cfg.max_iter} iters in {time.perf_counter() - started:.0f}s; "
          f"test accuracy {acc:.4f}; outputs in {args.out}")


def _load_model(model_dir, which="final") -> N.Network:
    with open(os.path.join(model_dir, "spec.txt")) as fh:
        spec = N.spec_from_text(fh.read())
    net = N.Network(spec, dtype=np.float32)
    N.load_checkpoint(net, os.path.join(model_dir, which))
    return net


def _cmd_eval(args):
    net = _load_model(args.model, args.which)
    manifest = D.read_manifest(args.data)
    dataset = D.load_split(manifest, args.split)
    acc, confusion = T.evaluate(net, dataset)
    print(f"accuracy {acc:.4f} on {len(dataset)} samples")
    print("confusion (rows = true, cols = predicted):")
    for row in confusion:
        print("  " + " ".join(f"{v:5d}" for v in row))


def _cmd_segment(args):
    img = read_pgm(args.input)
    boxes = B.segment_block(B.close_binary(B.binarize(img)))
    lines = ["line,idx,left,top,right,bottom"]
    idx_in_line = {}
    for box in boxes:
        i = idx_in_line.get(box.line, 0)
        idx_in_line[box.line] = i + 1
        lines.append(f"{box.line},{i},{box.left},{box.top},{box.right},{box.bottom}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_classify_block(args):
    img = read_pgm(args.input)
    net = _load_model(args.model, args.which)
    if args.mode == "segmented":
        pred = B.classify_block_segmented(img, net)
    else:
        pred = B.classify_block_free(img, net, args.window, args.stride)
    conf = ", ".join(f"{v:.4f}" for v in pred.accumulated)
    print(f"font {pred.font} from {len(pred.per_unit)} units; confidence [{conf}]")


def _cmd_heatmap(args):
    manifest = D.read_manifest(args.data)
    images = [read_pgm(os.path.join(manifest.root, e.path)) for e in manifest.paths(args.split)]
    if args.convention == "inverted":
        images = [invert(im) for im in images]  # undo: average_heatmap re-inverts
    write_pgm(args.out, average_heatmap(images))
    print(f"averaged {len(images)} images -> {args.out}")


def _cmd_experiment(args):
    cfg = E.ExperimentConfig(seeds=tuple(int(s) for s in args.seeds.split(",")),
                             jobs=args.jobs, max_iter=args.iters)
    out = args.out or os.path.join("runs", args.name, time.strftime("%Y%m%d-%H%M%S"))
    results = E.run_experiment(args.name, cfg, out)
    print(f"results in {out}")
    for arm in sorted(results):
        accs = results[arm]
        mean = sum(accs.values()) / len(accs)
        print(f"  {arm:16s} mean {mean:.4f}  " +
              " ".join(f"s{seed}={acc:.4f}" for seed, acc in sorted(accs.items())))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fontnet",
                                description="font-style recognition workbench")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="render a synthetic dataset")
    g.add_argument("--kind", choices=("char", "block"), default="char")
    g.add_argument("--out", required=True)
    g.add_argument("--chars", type=int, default=40)
    g.add_argument("--train", type=int, default=1, help="train samples per (font, char) or blocks per font")
    g.add_argument("--test", type=int, default=1)
    g.add_argument("--size", type=int, default=64)
    g.add_argument("--block-size", type=int, default=160)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=_cmd_gen_data)

    g = sub.add_parser("mesh", help="dump mesh breakpoints as CSV")
    g.add_argument("--in", dest="input", required=True)
    g.add_argument("--L", type=int, default=5)
    g.add_argument("--mode", choices=("elastic", "fixed"), default="elastic")
    g.add_argument("--out")
    g.set_defaults(func=_cmd_mesh)

    g = sub.add_parser("augment", help="write region-dropped variants of an image")
    g.add_argument("--in", dest="input", required=True)
    g.add_argument("--out-dir", required=True)
    g.add_argument("--count", type=int, default=8)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--L", type=int, default=5)
    g.add_argument("--n-max", type=int, default=13)
    g.add_argument("--gamma", type=float, default=0.5)
    g.add_argument("--mode", choices=("elastic", "fixed"), default="elastic")
    g.set_defaults(func=_cmd_augment)

    g = sub.add_parser("describe", help="print a network's shape table")
    g.add_argument("--net", choices=sorted(_BUILDERS), default="singlechar")
    g.add_argument("--spec", help="spec text file (overrides --net)")
    g.set_defaults(func=_cmd_describe)

    g = sub.add_parser("train", help="train a network on a dataset directory")
    g.add_argument("--config", required=True)
    g.add_argument("--data", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--net", choices=sorted(_BUILDERS), default="micro")
    g.add_argument("--spec", help="spec text file (overrides --net)")
    g.set_defaults(func=_cmd_train)

    g = sub.add_parser("eval", help="evaluate a trained model")
    g.add_argument("--model", required=True, help="train output directory")
    g.add_argument("--data", required=True)
    g.add_argument("--split", default="test")
    g.add_argument("--which", choices=("final", "best"), default="final")
    g.set_defaults(func=_cmd_eval)

    g = sub.add_parser("segment", help="locate characters in a block image")
    g.add_argument("--in", dest="input", required=True)
    g.add_argument("--out")
    g.set_defaults(func=_cmd_segment)

    g = sub.add_parser("classify-block", help="classify a text block's font")
    g.add_argument("--mode", choices=("segmented", "free"), required=True)
    g.add_argument("--in", dest="input", required=True)
    g.add_argument("--model", required=True)
    g.add_argument("--which", choices=("final", "best"), default="final")
    g.add_argument("--window", type=int, default=64)
    g.add_argument("--stride", type=int, default=32)
    g.set_defaults(func=_cmd_classify_block)

    g = sub.add_parser("heatmap", help="average a dataset split into one image")
    g.add_argument("--data", required=True)
    g.add_argument("--split", default="train")
    g.add_argument("--out", required=True)
    g.add_argument("--convention", choices=("inverted", "scanned"), default="inverted",
                   help="'inverted' marks inputs already background-0")
    g.set_defaults(func=_cmd_heatmap)

    g = sub.add_parser("experiment", help="run a named comparative experiment")
    g.add_argument("--name", choices=E.EXPERIMENTS, required=True)
    g.add_argument("--out")
    g.add_argument("--seeds", default="1,2,3")
    g.add_argument("--iters", type=int, default=1200)
    g.add_argument("--jobs", type=int, default=1)
    g.set_defaults(func=_cmd_experiment)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
