"""Synthetic font-style datasets: shared glyph skeletons rendered in distinct styles.

Every character id maps to a fixed random polyline skeleton; every font id
maps to a rendering style (stroke width, slant, serifs, scale). Samples add
per-draw jitter (shift, rotation, width wobble), so the style, not the pixel
layout, carries the font label. Images are written as background-0 PGMs.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np

from .image import read_pgm, write_pgm

_STREAM_SKELETON = 100
_STREAM_SAMPLE = 101
_STREAM_BLOCK = 102


@dataclass(frozen=True)
class SyntheticFontSpec:
    font_id: int
    stroke_width: float  # px at the 64 px reference size
    slant: float  # horizontal shear per unit height
    serif: bool
    scale: float
    jitter: float  # px of translation at the reference size

    def __post_init__(self):
        if self.stroke_width <= 0 or not 0.3 <= self.scale <= 1.5 or abs(self.slant) > 0.6:
            raise ValueError(f"font {self.font_id}: parameters outside renderable ranges")


DEFAULT_FONTS = (
    SyntheticFontSpec(0, stroke_width=2.0, slant=0.00, serif=False, scale=1.00, jitter=4.5),
    SyntheticFontSpec(1, stroke_width=4.5, slant=0.00, serif=False, scale=0.92, jitter=4.5),
    SyntheticFontSpec(2, stroke_width=2.0, slant=0.35, serif=False, scale=1.00, jitter=4.5),
    SyntheticFontSpec(3, stroke_width=2.0, slant=0.00, serif=True, scale=1.05, jitter=4.5),
    SyntheticFontSpec(4, stroke_width=3.2, slant=-0.28, serif=True, scale=0.82, jitter=4.5),
)


@dataclass(frozen=True)
class GeneratorConfig:
    fonts: tuple = DEFAULT_FONTS
    chars: int = 40
    train_per_font_char: int = 1
    test_per_font_char: int = 1
    image_size: int = 64
    seed: int = 0

    @property
    def num_fonts(self) -> int:
        return len(self.fonts)


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    char_id: int  # -1 for whole-block images
    font: int
    split: str


@dataclass(frozen=True)
class DatasetManifest:
    root: str
    entries: tuple

    def paths(self, split=None):
        return [e for e in self.entries if split is None or e.split == split]


# ---------------------------------------------------------------------------
# skeletons and rendering
# ---------------------------------------------------------------------------

def char_skeleton(seed: int, char_id: int):
    """Fixed random polyline set for one character, in unit coordinates.

    A horizontal and a vertical backbone guarantee dense projection profiles
    (segmentation never splits a glyph); extra strokes differentiate glyphs.
    """
    rng = np.random.default_rng((seed, _STREAM_SKELETON, char_id))
    polylines = []
    y_back = rng.uniform(0.25, 0.75)
    polylines.append(np.array([[0.12, y_back + rng.uniform(-0.08, 0.08)],
                               [0.5, y_back],
                               [0.88, y_back + rng.uniform(-0.08, 0.08)]]))
    x_back = rng.uniform(0.25, 0.75)
    polylines.append(np.array([[x_back + rng.uniform(-0.08, 0.08), 0.12],
                               [x_back, 0.5],
                               [x_back + rng.uniform(-0.08, 0.08), 0.88]]))
    for _ in range(int(rng.integers(1, 4))):
        pts = rng.uniform(0.15, 0.85, size=(int(rng.integers(2, 4)), 2))
        while np.linalg.norm(pts[-1] - pts[0]) < 0.25:
            pts = rng.uniform(0.15, 0.85, size=(pts.shape[0], 2))
        polylines.append(pts)
    return polylines


def _transform(points, scale, slant, angle, shift, size):
    """Unit-square skeleton points -> pixel coordinates."""
    p = np.asarray(points, dtype=np.float64) - 0.5
    c, s = np.cos(angle), np.sin(angle)
    p = p @ np.array([[c, -s], [s, c]]).T
    p *= scale
    p[:, 0] -= slant * p[:, 1]  # shear: top leans right for positive slant
    p += 0.5
    span = size * 0.82
    origin = (size - span) / 2.0
    return p * span + origin + np.asarray(shift, dtype=np.float64)


def _stamp_segments(canvas, segments, radius):
    """Draw capsule strokes (distance-to-segment with a soft 1 px edge)."""
    size = canvas.shape[0]
    yy, xx = np.mgrid[0:size, 0:size]
    pix = np.stack([xx, yy], axis=-1).astype(np.float64)
    for a, b in segments:
        ab = b - a
        denom = float(ab @ ab)
        if denom < 1e-12:
            t = np.zeros(pix.shape[:2])
        else:
            t = np.clip(((pix - a) @ ab) / denom, 0.0, 1.0)
        closest = a + t[:, :, None] * ab
        dist = np.linalg.norm(pix - closest, axis=-1)
        ink = np.clip(radius + 0.5 - dist, 0.0, 1.0) * 255.0
        np.maximum(canvas, ink, out=canvas)


def render_glyph(skeleton, font: SyntheticFontSpec, size: int, rng: np.random.Generator) -> np.ndarray:
    """Render one jittered sample of a skeleton in a font's style."""
    ref = size / 64.0
    jitter = font.jitter * ref
    shift = rng.uniform(-jitter, jitter, size=2)
    angle = rng.uniform(-0.05, 0.05) * font.jitter
    scale = font.scale * rng.uniform(0.88, 1.12)
    # floor keeps strokes binarizable at small render sizes
    width = max(1.5, font.stroke_width * ref * rng.uniform(0.8, 1.25))
    canvas = np.zeros((size, size), dtype=np.float64)
    segments = []
    for poly in skeleton:
        pts = _transform(poly, scale, font.slant, angle, shift, size)
        for a, b in zip(pts[:-1], pts[1:]):
            segments.append((a, b))
        if font.serif:
            for end, nxt in ((pts[0], pts[1]), (pts[-1], pts[-2])):
                d = nxt - end
                norm = np.linalg.norm(d)
                if norm > 1e-9:
                    perp = np.array([-d[1], d[0]]) / norm * (2.2 * width)
                    segments.append((end - perp / 2, end + perp / 2))
    _stamp_segments(canvas, segments, radius=width / 2.0)
    return np.clip(np.rint(canvas), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# datasets on disk
# ---------------------------------------------------------------------------

def gen_char_dataset(cfg: GeneratorConfig, root) -> DatasetManifest:
    """Render the single-character corpus under root/data/<split>/<font>/."""
    entries = []
    for font in cfg.fonts:
        for char_id in range(cfg.chars):
            skeleton = char_skeleton(cfg.seed, char_id)
            total = cfg.train_per_font_char + cfg.test_per_font_char
            for n in range(total):
                split = "train" if n < cfg.train_per_font_char else "test"
                rng = np.random.default_rng((cfg.seed, _STREAM_SAMPLE, font.font_id, char_id, n))
                img = render_glyph(skeleton, font, cfg.image_size, rng)
                rel = os.path.join("data", split, f"{font.font_id:02d}",
                                   f"{char_id:03d}_{n:03d}.pgm")
                path = os.path.join(root, rel)
                os.makedirs(os.path.dirname(path), exist_ok=True)
                write_pgm(path, img)
                entries.append(ManifestEntry(rel, char_id, font.font_id, split))
    manifest = DatasetManifest(root=str(root), entries=tuple(entries))
    write_manifest(manifest)
    return manifest


@dataclass(frozen=True)
class BlockConfig:
    rows: int = 6
    cols: int = 5
    block_size: int = 160
    train_blocks_per_font: int = 12
    test_blocks_per_font: int = 8
    glyph_inset: int = 2  # ink-free px per cell side; >= 2 keeps closing from bridging glyphs
    max_glyph_jitter: float = 2.0  # heavier jitter can rotate ink past the backbone span
                                   # and split a glyph's projection run


def render_block(cfg: GeneratorConfig, bcfg: BlockConfig, font: SyntheticFontSpec,
                 rng: np.random.Generator) -> np.ndarray:
    """One block: rows x cols random characters of a single font.

    Glyph jitter is clamped so every glyph keeps a dense projection profile;
    blocks must segment into exactly rows x cols boxes.
    """
    if font.jitter > bcfg.max_glyph_jitter:
        font = replace(font, jitter=bcfg.max_glyph_jitter)
    size = bcfg.block_size
    block = np.zeros((size, size), dtype=np.uint8)
    for r in range(bcfg.rows):
        y0 = round(r * size / bcfg.rows) + bcfg.glyph_inset
        y1 = round((r + 1) * size / bcfg.rows) - bcfg.glyph_inset
        for c in range(bcfg.cols):
            x0 = round(c * size / bcfg.cols) + bcfg.glyph_inset
            x1 = round((c + 1) * size / bcfg.cols) - bcfg.glyph_inset
            cell = min(y1 - y0, x1 - x0)
            if cell < 12:
                raise ValueError(f"glyph cell {cell} px too small for block {size} px")
            char_id = int(rng.integers(cfg.chars))
            glyph = render_glyph(char_skeleton(cfg.seed, char_id), font, cell, rng)
            oy = y0 + (y1 - y0 - cell) // 2
            ox = x0 + (x1 - x0 - cell) // 2
            block[oy:oy + cell, ox:ox + cell] = glyph
    return block


def gen_block_dataset(cfg: GeneratorConfig, bcfg: BlockConfig, root) -> DatasetManifest:
    """Render the text-block corpus; one font label per block (char_id = -1)."""
    entries = []
    for font in cfg.fonts:
        total = bcfg.train_blocks_per_font + bcfg.test_blocks_per_font
        for n in range(total):
            split = "train" if n < bcfg.train_blocks_per_font else "test"
            rng = np.random.default_rng((cfg.seed, _STREAM_BLOCK, font.font_id, n))
            block = render_block(cfg, bcfg, font, rng)
            rel = os.path.join("data", split, f"{font.font_id:02d}", f"block_{n:03d}.pgm")
            path = os.path.join(root, rel)
            os.makedirs(os.path.dirname(path), exist_ok=True)
            write_pgm(path, block)
            entries.append(ManifestEntry(rel, -1, font.font_id, split))
    manifest = DatasetManifest(root=str(root), entries=tuple(entries))
    write_manifest(manifest)
    return manifest


# ---------------------------------------------------------------------------
# manifest persistence and loading
# ---------------------------------------------------------------------------

MANIFEST_FILE = "manifest.csv"


def write_manifest(manifest: DatasetManifest) -> None:
    lines = ["path,char_id,font,split"]
    for e in manifest.entries:
        lines.append(f"{e.path},{e.char_id},{e.font},{e.split}")
    with open(os.path.join(manifest.root, MANIFEST_FILE), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_manifest(root) -> DatasetManifest:
    path = os.path.join(root, MANIFEST_FILE)
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "path,char_id,font,split":
        raise ValueError(f"{path}:1: bad manifest header")
    entries = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
        entries.append(ManifestEntry(parts[0], int(parts[1]), int(parts[2]), parts[3]))
    return DatasetManifest(root=str(root), entries=tuple(entries))


def load_split(manifest: DatasetManifest, split: str):
    """Images + font labels of one split, in manifest order."""
    from .training import Dataset

    images, labels = [], []
    for e in manifest.paths(split):
        images.append(read_pgm(os.path.join(manifest.root, e.path)))
        labels.append(e.font)
    return Dataset(images=images, labels=np.asarray(labels, dtype=np.int64))


def nearest_neighbor_accuracy(train, test) -> float:
    """1-NN pixel-distance baseline (sanity meter for dataset difficulty)."""
    tr = np.stack([im.astype(np.float64).ravel() for im in train.images])
    te = np.stack([im.astype(np.float64).ravel() for im in test.images])
    d2 = (te * te).sum(1)[:, None] - 2.0 * te @ tr.T + (tr * tr).sum(1)[None, :]
    pred = train.labels[np.argmin(d2, axis=1)]
    return float((pred == test.labels).mean())
