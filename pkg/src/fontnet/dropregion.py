"""Stochastic region disruption: pattern sampling, pixel-mask expansion, and the mixture oracle.

A drop pattern is an L x L boolean array (True = keep). Expanding it over a
MeshGrid yields a pixel-level 0/1 mask whose all-zero sub-blocks sit exactly
on the dropped regions. Applying the mask multiplies element-wise, so dropped
regions become background (0).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .image import as_image
from .meshing import MeshGrid, elastic_mesh, fixed_mesh

ENUMERATION_LIMIT = 10_000


@dataclass(frozen=True)
class DropConfig:
    """Region-drop augmentation parameters."""

    L: int = 5
    n_max: int = 13
    gamma: float = 0.5
    mesh_mode: str = "elastic"

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("L must be >= 1")
        if not 1 <= self.n_max < self.L * self.L:
            raise ValueError(f"n_max must satisfy 1 <= n_max < L*L={self.L * self.L}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.mesh_mode not in ("elastic", "fixed"):
            raise ValueError("mesh_mode must be 'elastic' or 'fixed'")


@dataclass(frozen=True)
class RegionMask:
    """An L x L keep/drop pattern with its pixel-level binary expansion."""

    pattern: np.ndarray  # (L, L) bool, True = keep; rows follow the y axis
    grid: MeshGrid
    pixels: np.ndarray  # (H, W) uint8 in {0, 1}

    def dropped_cells(self):
        """(row, col) coordinates of dropped cells, row-major order."""
        rows, cols = np.nonzero(~self.pattern)
        return list(zip(rows.tolist(), cols.tolist()))


def sample_pattern(cfg: DropConfig, rng: np.random.Generator) -> np.ndarray:
    """Draw k ~ Uniform{1..n_max} and drop k distinct cells chosen uniformly."""
    k = int(rng.integers(1, cfg.n_max + 1))
    cells = rng.choice(cfg.L * cfg.L, size=k, replace=False)
    pattern = np.ones((cfg.L, cfg.L), dtype=bool)
    pattern.flat[cells] = False
    return pattern


def expand_mask(pattern: np.ndarray, grid: MeshGrid) -> RegionMask:
    """Blow a pattern up to pixel resolution over the grid's regions."""
    pattern = np.asarray(pattern, dtype=bool)
    if pattern.shape != (grid.L, grid.L):
        raise ValueError(f"pattern shape {pattern.shape} does not match L={grid.L}")
    pixels = np.ones((grid.height, grid.width), dtype=np.uint8)
    for row in range(grid.L):
        for col in range(grid.L):
            if not pattern[row, col]:
                y0, y1, x0, x1 = grid.region(row, col)
                pixels[y0:y1, x0:x1] = 0
    return RegionMask(pattern=pattern, grid=grid, pixels=pixels)


def apply_mask(img: np.ndarray, mask: RegionMask) -> np.ndarray:
    """Element-wise product with the pixel mask. Idempotent; never raises a pixel."""
    img = as_image(img)
    if img.shape != mask.pixels.shape:
        raise ValueError(f"image {img.shape} vs mask {mask.pixels.shape} dimension mismatch")
    return img * mask.pixels


def mesh_for(img: np.ndarray, cfg: DropConfig) -> MeshGrid:
    """The cfg-selected mesh of an image."""
    img = as_image(img)
    if cfg.mesh_mode == "elastic":
        return elastic_mesh(img, cfg.L)
    h, w = img.shape
    return fixed_mesh(w, h, cfg.L)


def maybe_dropregion(img: np.ndarray, cfg: DropConfig, rng: np.random.Generator) -> np.ndarray:
    """With probability 1 - gamma, mesh the image and zero a sampled set of regions.

    Otherwise the image is returned unchanged. Draw order (gamma gate, then
    drop count, then cells) is fixed, so results are seed-determined.
    """
    img = as_image(img)
    if rng.random() < cfg.gamma:
        return img
    pattern = sample_pattern(cfg, rng)
    mask = expand_mask(pattern, mesh_for(img, cfg))
    return apply_mask(img, mask)


def count_patterns(L: int, n: int):
    """(number of patterns with exactly n drops, cumulative count for 1..n drops), exact."""
    cells = L * L
    if not 0 <= n <= cells:
        raise ValueError(f"n={n} out of range 0..{cells}")
    exact = math.comb(cells, n)
    cumulative = sum(math.comb(cells, i) for i in range(1, n + 1))
    return exact, cumulative


def enumerate_patterns(cfg: DropConfig):
    """Yield (probability, pattern) over the sampler's full support.

    The sampler draws k uniformly from {1..n_max} and then a uniform k-subset,
    so a pattern with k drops has probability 1/(n_max * C(L*L, k)).
    """
    cells = cfg.L * cfg.L
    for k in range(1, cfg.n_max + 1):
        p = 1.0 / (cfg.n_max * math.comb(cells, k))
        for dropped in combinations(range(cells), k):
            pattern = np.ones((cfg.L, cfg.L), dtype=bool)
            pattern.flat[list(dropped)] = False
            yield p, pattern


def mixture_expectation(net, img: np.ndarray, cfg: DropConfig) -> np.ndarray:
    """Exact gamma-weighted mixture of the clean forward pass and all masked passes.

    `net` must expose confidences(img) -> 1-D probability vector. Enumeration
    is exhaustive over the sampler's support; oversized supports are rejected
    with a pointer at Monte Carlo estimation instead.
    """
    _, support = count_patterns(cfg.L, cfg.n_max)
    if support > ENUMERATION_LIMIT:
        raise ValueError(
            f"{support} patterns exceed the exhaustive-enumeration limit "
            f"({ENUMERATION_LIMIT}); estimate by Monte Carlo over maybe_dropregion instead"
        )
    img = as_image(img)
    clean = np.asarray(net.confidences(img), dtype=np.float64)
    if cfg.gamma == 1.0:
        return clean
    grid = mesh_for(img, cfg)
    disrupted = np.zeros_like(clean)
    for p, pattern in enumerate_patterns(cfg):
        masked = apply_mask(img, expand_mask(pattern, grid))
        disrupted += p * np.asarray(net.confidences(masked), dtype=np.float64)
    return cfg.gamma * clean + (1.0 - cfg.gamma) * disrupted
