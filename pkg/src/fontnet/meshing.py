"""Fixed and elastic L x L mesh division of an image.

Elastic meshing places breakpoints so each bar accumulates (approximately)
equal pixel intensity; fixed meshing is the equal-area baseline. Breakpoints
are 1-based inclusive right edges: bar i spans 0-based coordinates
[u[i-1], u[i]) with u[-1] treated as 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image import as_image, column_profile, row_profile, round_half_away


class DegenerateProfileError(ValueError):
    """Profile carries no mass; elastic breakpoints are undefined."""


@dataclass(frozen=True)
class MeshGrid:
    """Per-axis breakpoint lists partitioning an image into L x L regions."""

    L: int
    u: tuple  # x-axis (column) right edges, last = width
    v: tuple  # y-axis (row) right edges, last = height

    def __post_init__(self):
        for name, edges in (("u", self.u), ("v", self.v)):
            if len(edges) != self.L:
                raise ValueError(f"{name} must have L={self.L} entries")
            if any(b <= a for a, b in zip((0,) + tuple(edges), edges)):
                raise ValueError(f"{name} breakpoints must be strictly increasing")

    @property
    def width(self) -> int:
        return self.u[-1]

    @property
    def height(self) -> int:
        return self.v[-1]

    def region(self, row: int, col: int):
        """0-based half-open (y0, y1, x0, x1) bounds of region (row, col)."""
        y0 = self.v[row - 1] if row > 0 else 0
        x0 = self.u[col - 1] if col > 0 else 0
        return y0, self.v[row], x0, self.u[col]


def elastic_breakpoints(profile, L: int) -> list:
    """Mass-equalizing breakpoints: u_i = smallest x with cumulative mass >= (i/L) * total.

    Strict increase is enforced by bumping a collapsed edge one past its
    predecessor and clamping so the remaining bars stay non-empty.
    """
    prof = np.asarray(profile, dtype=np.int64)
    n = len(prof)
    if not 1 <= L <= n:
        raise ValueError(f"L={L} out of range for profile length {n}")
    total = int(prof.sum())
    if total == 0:
        raise DegenerateProfileError("all-zero profile")
    cum = np.cumsum(prof)
    edges = []
    prev = 0
    for i in range(1, L + 1):
        # cum >= i*total/L over integers, written exactly as cum >= ceil(i*total/L)
        threshold = -(-i * total // L)
        x = int(np.searchsorted(cum, threshold, side="left")) + 1  # 1-based
        x = max(x, prev + 1)
        x = min(x, n - (L - i))
        edges.append(x)
        prev = x
    edges[-1] = n
    return edges


def fixed_mesh(width: int, height: int, L: int) -> MeshGrid:
    """Equal-area mesh: breakpoints at round(i * extent / L)."""
    if not 1 <= L <= min(width, height):
        raise ValueError(f"L={L} out of range for {width}x{height}")
    u = [int(round_half_away(i * width / L)) for i in range(1, L + 1)]
    v = [int(round_half_away(i * height / L)) for i in range(1, L + 1)]
    return MeshGrid(L=L, u=tuple(u), v=tuple(v))


def elastic_mesh(img: np.ndarray, L: int) -> MeshGrid:
    """Mass-equalizing mesh from the image's projection profiles.

    Expects a background-0 image. An all-zero image degenerates to the fixed
    mesh of the same dimensions.
    """
    img = as_image(img)
    h, w = img.shape
    try:
        u = elastic_breakpoints(column_profile(img), L)
        v = elastic_breakpoints(row_profile(img), L)
    except DegenerateProfileError:
        return fixed_mesh(w, h, L)
    return MeshGrid(L=L, u=tuple(u), v=tuple(v))
