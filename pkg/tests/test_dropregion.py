import math
from itertools import combinations

import numpy as np
import pytest

from fontnet.dropregion import (DropConfig, apply_mask, count_patterns,
                                enumerate_patterns, expand_mask, maybe_dropregion,
                                mesh_for, sample_pattern)
from fontnet.meshing import fixed_mesh
from oracles import pascal_comb


def test_config_validation():
    with pytest.raises(ValueError):
        DropConfig(L=2, n_max=4)  # n_max must be < L*L
    with pytest.raises(ValueError):
        DropConfig(L=5, n_max=0)
    with pytest.raises(ValueError):
        DropConfig(gamma=1.5)
    DropConfig(L=2, n_max=3)  # boundary accepted


def test_single_drop_forced_count():
    cfg = DropConfig(L=3, n_max=1)
    rng = np.random.default_rng(0)
    counts = np.zeros(9, dtype=int)
    for _ in range(2000):
        pattern = sample_pattern(cfg, rng)
        dropped = np.flatnonzero(~pattern.ravel())
        assert dropped.size == 1
        counts[dropped[0]] += 1
    # uniform over the 9 positions, 3-sigma binomial band
    p = 1 / 9
    sigma = math.sqrt(2000 * p * (1 - p))
    assert (np.abs(counts - 2000 * p) <= 3 * sigma).all()


def test_sampler_distribution_L2_n2():
    cfg = DropConfig(L=2, n_max=2)
    rng = np.random.default_rng(1)
    draws = 100_000
    observed = {}
    for _ in range(draws):
        key = tuple(sample_pattern(cfg, rng).ravel())
        observed[key] = observed.get(key, 0) + 1
    assert len(observed) == 10  # 4 single-drop + 6 double-drop
    for key, count in observed.items():
        k = 4 - sum(key)
        p = 0.5 * (1 / 4 if k == 1 else 1 / 6)
        sigma = math.sqrt(draws * p * (1 - p))
        assert abs(count - draws * p) <= 3 * sigma, (key, count)


def test_sampler_covers_all_patterns_L2():
    cfg = DropConfig(L=2, n_max=3)
    rng = np.random.default_rng(2)
    seen = {1: set(), 2: set(), 3: set()}
    for _ in range(5000):
        pattern = sample_pattern(cfg, rng)
        k = int((~pattern).sum())
        seen[k].add(tuple(pattern.ravel()))
    for k in (1, 2, 3):
        assert len(seen[k]) == math.comb(4, k)


def test_expand_all_true_is_ones():
    grid = fixed_mesh(10, 8, 2)
    mask = expand_mask(np.ones((2, 2), dtype=bool), grid)
    assert (mask.pixels == 1).all()
    assert mask.pixels.shape == (8, 10)


def test_expand_top_left_cell_uniform64():
    grid = fixed_mesh(64, 64, 5)
    pattern = np.ones((5, 5), dtype=bool)
    pattern[0, 0] = False
    mask = expand_mask(pattern, grid)
    # uniform breakpoints [13, 26, 38, 51, 64]: dropped block = rows/cols 0..12
    assert (mask.pixels[:13, :13] == 0).all()
    assert int((1 - mask.pixels).sum()) == 13 * 13


def test_expand_area_bookkeeping():
    rng = np.random.default_rng(3)
    for _ in range(20):
        w, h = int(rng.integers(6, 50)), int(rng.integers(6, 50))
        L = int(rng.integers(1, 6))
        if L > min(w, h):
            continue
        grid = fixed_mesh(w, h, L)
        pattern = rng.random((L, L)) > 0.5
        mask = expand_mask(pattern, grid)
        area = 0
        for r in range(L):
            for c in range(L):
                if not pattern[r, c]:
                    y0, y1, x0, x1 = grid.region(r, c)
                    area += (y1 - y0) * (x1 - x0)
        assert int((1 - mask.pixels).sum()) == area


def test_apply_mask_identity_and_oracle():
    rng = np.random.default_rng(4)
    img = rng.integers(0, 256, size=(12, 9), dtype=np.uint8)
    grid = fixed_mesh(9, 12, 3)
    ones = expand_mask(np.ones((3, 3), dtype=bool), grid)
    assert (apply_mask(img, ones) == img).all()

    pattern = rng.random((3, 3)) > 0.4
    mask = expand_mask(pattern, grid)
    out = apply_mask(img, mask)
    for y in range(12):
        for x in range(9):
            assert out[y, x] == img[y, x] * mask.pixels[y, x]
    # idempotent, never increases
    assert (apply_mask(out, mask) == out).all()
    assert (out <= img).all()


def test_apply_mask_dimension_mismatch():
    grid = fixed_mesh(8, 8, 2)
    mask = expand_mask(np.ones((2, 2), dtype=bool), grid)
    with pytest.raises(ValueError):
        apply_mask(np.zeros((9, 8), dtype=np.uint8), mask)


def test_sampler_never_blanks_image():
    cfg = DropConfig(L=2, n_max=3)
    rng = np.random.default_rng(5)
    img = np.full((8, 8), 100, dtype=np.uint8)
    for _ in range(500):
        out = maybe_dropregion(img, DropConfig(L=2, n_max=3, gamma=0.0), rng)
        assert out.any()
    del cfg


def test_maybe_gamma_extremes():
    img = np.full((16, 16), 50, dtype=np.uint8)
    rng = np.random.default_rng(6)
    for _ in range(50):
        assert (maybe_dropregion(img, DropConfig(gamma=1.0), rng) == img).all()
    for _ in range(50):
        out = maybe_dropregion(img, DropConfig(gamma=0.0), rng)
        assert (out == 0).any()


def test_maybe_gamma_half_rate():
    img = np.full((16, 16), 50, dtype=np.uint8)
    cfg = DropConfig(gamma=0.5)
    rng = np.random.default_rng(7)
    draws = 10_000
    disrupted = sum(1 for _ in range(draws)
                    if (maybe_dropregion(img, cfg, rng) == 0).any())
    sigma = math.sqrt(draws * 0.25)
    assert abs(disrupted - draws / 2) <= 3 * sigma


def test_maybe_deterministic_given_seed():
    img = np.arange(256, dtype=np.uint8).reshape(16, 16)
    cfg = DropConfig(gamma=0.5)
    a = [maybe_dropregion(img, cfg, np.random.default_rng(42)) for _ in range(3)]
    assert all((x == a[0]).all() for x in a)


def test_count_patterns_values():
    assert count_patterns(5, 13) == (5_200_300, sum(math.comb(25, i) for i in range(1, 14)))
    assert count_patterns(5, 13)[0] == pascal_comb(25, 13)
    assert count_patterns(3, 0) == (1, 0)
    assert count_patterns(2, 2) == (6, 10)


def test_count_patterns_enumeration_oracle():
    # L=2: count 4-cell drop sets directly
    cells = range(4)
    for n in range(5):
        exact = sum(1 for _ in combinations(cells, n))
        cum = sum(1 for k in range(1, n + 1) for _ in combinations(cells, k))
        assert count_patterns(2, n) == (exact, cum)


def test_enumerate_patterns_probabilities_sum_to_one():
    cfg = DropConfig(L=2, n_max=2)
    items = list(enumerate_patterns(cfg))
    assert len(items) == 10
    assert abs(sum(p for p, _ in items) - 1.0) < 1e-12


def test_mesh_for_modes():
    img = np.zeros((20, 10), dtype=np.uint8)
    img[5:9, 2:5] = 90
    elastic = mesh_for(img, DropConfig(L=2, n_max=1, mesh_mode="elastic"))
    fixed = mesh_for(img, DropConfig(L=2, n_max=1, mesh_mode="fixed"))
    assert fixed.u == (5, 10)
    assert elastic.width == 10 and elastic.height == 20
