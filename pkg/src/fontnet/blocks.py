"""Text-block recognizers: segmentation-based and sliding-window (segmentation-free).

Both operate on background-0 grayscale blocks. The segmented path binarizes,
closes, splits lines by horizontal projection and characters by vertical
projection, then classifies each crop; the free path classifies a grid of
patches. Either way the per-unit confidence vectors are pooled and argmaxed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image import as_image, preprocess_char


@dataclass(frozen=True)
class CharBox:
    """Half-open pixel bounds of one located character."""

    line: int
    left: int
    top: int
    right: int
    bottom: int

    def crop(self, img: np.ndarray) -> np.ndarray:
        return img[self.top:self.bottom, self.left:self.right]


@dataclass(frozen=True)
class BlockPrediction:
    font: int
    accumulated: np.ndarray  # pooled confidence vector
    per_unit: tuple  # one confidence vector per char/patch


def otsu_threshold(img: np.ndarray) -> int:
    """Threshold maximizing between-class variance; lowest argmax on ties."""
    img = as_image(img)
    hist = np.bincount(img.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    omega = np.cumsum(hist) / total            # class-0 weight for t = 0..255
    mu = np.cumsum(hist * np.arange(256)) / total
    mu_total = mu[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma_b = (mu_total * omega - mu) ** 2 / (omega * (1.0 - omega))
    sigma_b[~np.isfinite(sigma_b)] = 0.0
    return int(np.argmax(sigma_b))


def binarize(img: np.ndarray) -> np.ndarray:
    """0/1 foreground map; foreground is intensity above the Otsu threshold.

    A constant image has no between-class separation and maps to all
    background.
    """
    img = as_image(img)
    if img.min() == img.max():
        return np.zeros_like(img, dtype=np.uint8)
    return (img > otsu_threshold(img)).astype(np.uint8)


def morph(binary: np.ndarray, op: str) -> np.ndarray:
    """3x3 dilation or erosion of a 0/1 image.

    Dilation pads with background, erosion with foreground, so closing
    (erode(dilate(x))) is extensive at image borders too.
    """
    b = (np.asarray(binary) > 0).astype(np.uint8)
    if op == "dilate":
        padded = np.pad(b, 1, constant_values=0)
        reduce = np.maximum
    elif op == "erode":
        padded = np.pad(b, 1, constant_values=1)
        reduce = np.minimum
    else:
        raise ValueError(f"op must be 'dilate' or 'erode', got {op!r}")
    h, w = b.shape
    out = padded[1:1 + h, 1:1 + w].copy()
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == dx == 0:
                continue
            out = reduce(out, padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w])
    return out


def close_binary(binary: np.ndarray) -> np.ndarray:
    return morph(morph(binary, "dilate"), "erode")


def _runs(counts: np.ndarray):
    """Maximal runs of strictly positive entries as half-open (start, stop) pairs."""
    active = counts > 0
    edges = np.flatnonzero(np.diff(np.concatenate(([False], active, [False])).astype(np.int8)))
    return list(zip(edges[0::2].tolist(), edges[1::2].tolist()))


def segment_block(binary: np.ndarray):
    """Locate characters: horizontal projection for lines, vertical within each line."""
    b = (np.asarray(binary) > 0).astype(np.uint8)
    boxes = []
    for line_idx, (top, bottom) in enumerate(_runs(b.sum(axis=1))):
        strip = b[top:bottom]
        for left, right in _runs(strip.sum(axis=0)):
            boxes.append(CharBox(line=line_idx, left=left, top=top, right=right, bottom=bottom))
    return boxes


def sliding_patches(img: np.ndarray, size: int, stride: int):
    """All size x size crops on the (stride, stride) grid that fit fully inside."""
    img = as_image(img)
    h, w = img.shape
    if size > h or size > w:
        raise ValueError(f"window {size} exceeds image {h}x{w}")
    patches = []
    for y in range(0, h - size + 1, stride):
        for x in range(0, w - size + 1, stride):
            patches.append(img[y:y + size, x:x + size])
    return patches


def _pooled(per_unit):
    acc = np.mean(per_unit, axis=0)
    return BlockPrediction(font=int(np.argmax(acc)), accumulated=acc, per_unit=tuple(per_unit))


def classify_block_segmented(img: np.ndarray, net) -> BlockPrediction:
    """Segment, classify every character crop, and average the confidence vectors."""
    img = as_image(img)
    boxes = segment_block(close_binary(binarize(img)))
    if not boxes:
        raise ValueError("no characters found in block")
    per_unit = [net.confidences(preprocess_char(box.crop(img))) for box in boxes]
    return _pooled(per_unit)


def classify_block_free(img: np.ndarray, net, size: int, stride: int) -> BlockPrediction:
    """Classify grid patches and accumulate their confidence vectors element-wise."""
    per_unit = [net.confidences(patch) for patch in sliding_patches(img, size, stride)]
    return _pooled(per_unit)
