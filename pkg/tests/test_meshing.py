import numpy as np
import pytest

from fontnet.meshing import (DegenerateProfileError, MeshGrid, elastic_breakpoints,
                             elastic_mesh, fixed_mesh)
from oracles import breakpoints_by_scan


def test_uniform_profile_halves():
    assert elastic_breakpoints([3, 3, 3, 3], 2) == [2, 4]


def test_mass_concentrated_left():
    # cumulative 6 >= half of 12 already at x=1
    assert elastic_breakpoints([6, 2, 2, 2], 2) == [1, 4]


def test_uniform_64_L5():
    assert elastic_breakpoints([7] * 64, 5) == [13, 26, 39, 52, 64]


def test_breakpoints_match_scan_oracle():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(2, 80))
        prof = rng.integers(0, 300, size=n)
        if prof.sum() == 0:
            prof[0] = 1
        L = int(rng.integers(1, n + 1))
        assert elastic_breakpoints(prof, L) == breakpoints_by_scan(prof, L)


def test_zero_profile_raises():
    with pytest.raises(DegenerateProfileError):
        elastic_breakpoints([0, 0, 0], 2)


def test_fixed_mesh_values():
    assert fixed_mesh(4, 4, 2).u == (2, 4)
    assert fixed_mesh(64, 64, 5).u == (13, 26, 38, 51, 64)
    assert fixed_mesh(5, 5, 5).u == (1, 2, 3, 4, 5)


def test_fixed_mesh_range_errors():
    with pytest.raises(ValueError):
        fixed_mesh(4, 4, 5)
    with pytest.raises(ValueError):
        fixed_mesh(4, 4, 0)


def test_elastic_uniform_image():
    img = np.full((64, 64), 9, dtype=np.uint8)
    grid = elastic_mesh(img, 5)
    assert grid.u == (13, 26, 39, 52, 64)
    assert grid.v == (13, 26, 39, 52, 64)


def test_elastic_mass_left_pulls_edge_left():
    img = np.zeros((32, 32), dtype=np.uint8)
    img[:, :16] = 200
    grid = elastic_mesh(img, 2)
    assert grid.u[0] <= 16


def test_elastic_all_zero_falls_back_to_fixed():
    img = np.zeros((40, 24), dtype=np.uint8)
    grid = elastic_mesh(img, 3)
    assert grid == fixed_mesh(24, 40, 3)


def test_per_bar_mass_bound():
    rng = np.random.default_rng(1)
    for _ in range(50):
        h, w = int(rng.integers(6, 50)), int(rng.integers(6, 50))
        img = rng.integers(0, 256, size=(h, w), dtype=np.uint8)
        L = 3
        grid = elastic_mesh(img, L)
        col = img.sum(axis=0, dtype=np.int64)
        total = int(col.sum())
        max_col = int(col.max())
        prev = 0
        for u in grid.u:
            bar = int(col[prev:u].sum())
            assert abs(bar - total / L) <= max_col
            prev = u


def test_partition_completeness():
    rng = np.random.default_rng(2)
    for _ in range(20):
        h, w = int(rng.integers(5, 40)), int(rng.integers(5, 40))
        L = int(rng.integers(1, min(h, w) + 1))
        img = rng.integers(0, 256, size=(h, w), dtype=np.uint8)
        grid = elastic_mesh(img, L)
        cover = np.zeros((h, w), dtype=np.int32)
        for r in range(L):
            for c in range(L):
                y0, y1, x0, x1 = grid.region(r, c)
                cover[y0:y1, x0:x1] += 1
        assert (cover == 1).all()


def test_uniform_fixed_vs_elastic_within_one():
    for size in (10, 32, 64, 65):
        img = np.full((size, size), 5, dtype=np.uint8)
        for L in (1, 2, 5):
            e = elastic_mesh(img, L)
            f = fixed_mesh(size, size, L)
            assert all(abs(a - b) <= 1 for a, b in zip(e.u, f.u))


def test_meshgrid_rejects_nonincreasing():
    with pytest.raises(ValueError):
        MeshGrid(L=2, u=(3, 3), v=(2, 4))
