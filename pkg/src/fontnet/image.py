"""Grayscale image primitives: inversion, projection profiles, preprocessing, heat maps, PGM I/O.

Images are plain 2-D numpy arrays of dtype uint8, indexed [y, x] (row-major).
The package-wide convention is background = 0 / stroke-positive ("inverted");
scanned-style sources (dark ink on light ground) must pass through invert()
before meshing, masking, or network input.
"""
from __future__ import annotations

import numpy as np

CHAR_SIZE = 64
CHAR_INTERIOR = 60
CHAR_PAD = 2


class ImageError(ValueError):
    """Raised for malformed images or image files."""


def as_image(data) -> np.ndarray:
    """Validate and return a 2-D uint8 image array."""
    img = np.asarray(data)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ImageError(f"expected a non-empty 2-D image, got shape {img.shape}")
    if img.dtype != np.uint8:
        if np.any((img < 0) | (img > 255)):
            raise ImageError("intensities out of range 0..255")
        img = img.astype(np.uint8)
    return img


def round_half_away(values):
    """Nearest-integer rounding, ties away from zero (the one rule used for all intensity math)."""
    v = np.asarray(values, dtype=np.float64)
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


def invert(img: np.ndarray) -> np.ndarray:
    """Complement intensities (255 - p). Involutive."""
    img = as_image(img)
    return (255 - img.astype(np.int16)).astype(np.uint8)


def column_profile(img: np.ndarray) -> np.ndarray:
    """Per-column intensity sums, one int64 entry per column."""
    return as_image(img).sum(axis=0, dtype=np.int64)


def row_profile(img: np.ndarray) -> np.ndarray:
    """Per-row intensity sums, one int64 entry per row."""
    return as_image(img).sum(axis=1, dtype=np.int64)


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel-center sampling and edge clamp.

    Identity when the output size equals the input size.
    """
    img = as_image(img)
    if out_h < 1 or out_w < 1:
        raise ImageError("output dimensions must be positive")
    in_h, in_w = img.shape
    if (out_h, out_w) == (in_h, in_w):
        return img.copy()
    ys = (np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5
    ys = np.clip(ys, 0.0, in_h - 1.0)
    xs = np.clip(xs, 0.0, in_w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    src = img.astype(np.float64)
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    out = top * (1 - fy) + bot * fy
    return round_half_away(out).astype(np.uint8)


def preprocess_char(img: np.ndarray) -> np.ndarray:
    """Resize a background-0 character crop to 60x60 and pad 2 background pixels per side.

    Output is always 64x64. The source must already be stroke-positive; a
    zero-area source is rejected.
    """
    img = as_image(img)
    if img.shape[0] < 1 or img.shape[1] < 1 or img.size == 0:
        raise ImageError("zero-area source")
    interior = resize_bilinear(img, CHAR_INTERIOR, CHAR_INTERIOR)
    out = np.zeros((CHAR_SIZE, CHAR_SIZE), dtype=np.uint8)
    out[CHAR_PAD:CHAR_PAD + CHAR_INTERIOR, CHAR_PAD:CHAR_PAD + CHAR_INTERIOR] = interior
    return out


def average_heatmap(imgs, size: int = CHAR_SIZE) -> np.ndarray:
    """Invert each image, resize to size x size, and average element-wise.

    Inputs are scanned-convention (light ground); the mean is computed in real
    arithmetic and rounded to the nearest intensity. Order-insensitive.
    """
    imgs = list(imgs)
    if not imgs:
        raise ImageError("average_heatmap needs at least one image")
    acc = np.zeros((size, size), dtype=np.float64)
    for im in imgs:
        acc += resize_bilinear(invert(im), size, size).astype(np.float64)
    return round_half_away(acc / len(imgs)).astype(np.uint8)


def write_pgm(path, img: np.ndarray) -> None:
    """Write a binary PGM (P5, maxval 255)."""
    img = as_image(img)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM (P5, maxval <= 255), tolerating comments and loose whitespace."""
    with open(path, "rb") as fh:
        data = fh.read()

    pos = 0

    def token():
        nonlocal pos
        while pos < len(data):
            if data[pos:pos + 1].isspace():
                pos += 1
            elif data[pos:pos + 1] == b"#":
                while pos < len(data) and data[pos] != 0x0A:
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageError(f"{path}: truncated PGM header")
        return data[start:pos]

    if token() != b"P5":
        raise ImageError(f"{path}: not a binary PGM (P5)")
    try:
        w, h, maxval = int(token()), int(token()), int(token())
    except ValueError as exc:
        raise ImageError(f"{path}: bad PGM header") from exc
    if w < 1 or h < 1 or not 0 < maxval <= 255:
        raise ImageError(f"{path}: unsupported PGM geometry {w}x{h} maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    raster = data[pos:pos + w * h]
    if len(raster) != w * h:
        raise ImageError(f"{path}: raster truncated ({len(raster)} of {w * h} bytes)")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy()
