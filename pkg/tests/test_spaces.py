import numpy as np
import pytest

from ivtest import (
    ConfigError,
    DataError,
    Dataset,
    IntervalIndex,
    TestConfig,
    build_covariate_space,
    build_ordered_space,
    build_space,
    build_unordered_space,
)
from ivtest.statistic import StatisticCache

from conftest import random_small


def _ds(k=3, n_d=3, n=30, x_levels=None, seed=0):
    rng = np.random.default_rng(seed)
    x = None if x_levels is None else np.arange(n) % x_levels
    return Dataset(
        y=rng.normal(size=n), d=np.arange(n) % n_d, z=(np.arange(n) // 2) % k, x=x,
        d_labels=tuple(range(n_d)), z_labels=tuple(range(k)),
        x_labels=None if x is None else tuple(range(x_levels)),
    )


def test_ordered_pairs_three_levels():
    fam = build_ordered_space(_ds(k=3))
    assert fam.pairs == ((0, 1), (1, 2))
    assert fam.allowed_d == (((0, 1), (2, -1)),) * 2
    assert all(fam.include_fosd)


def test_ordered_pairs_two_levels():
    assert build_ordered_space(_ds(k=2)).pairs == ((0, 1),)


def test_ordered_family_counts_per_pair():
    ds = _ds(k=3, n_d=3)
    cache = StatisticCache(ds, build_ordered_space(ds))
    for pair in (0, 1):
        kinds = [(b.kind, b.d, b.sign) for b in cache.blocks if b.pair == pair]
        assert kinds == [("interval", 0, 1), ("interval", 2, -1), ("fosd", 0, 1), ("fosd", 1, 1)]


def test_ordered_single_instrument_level():
    ds = Dataset(y=np.zeros(3), d=np.array([0, 1, 0]), z=np.zeros(3, int), d_labels=(0, 1), z_labels=(0, 1))
    with pytest.raises(DataError):
        build_ordered_space(ds)


def test_unordered_pairs_and_dedup():
    ds = _ds(k=2)
    fam = build_unordered_space(ds, [(0, 0, 1), (1, 1, 0), (2, 1, 0)])
    assert fam.pairs == ((0, 1), (1, 0), (1, 0))
    assert fam.allowed_d == (((0, 1),), ((1, 1),), ((2, 1),))
    assert not any(fam.include_fosd)
    dup = build_unordered_space(ds, [(0, 0, 1), (0, 0, 1), (1, 1, 0)])
    assert len(dup) == 2


@pytest.mark.parametrize("c_set", [[], [(5, 0, 1)], [(0, 0, 7)], [(0, 1, 1)]])
def test_unordered_errors(c_set):
    with pytest.raises(ConfigError):
        build_unordered_space(_ds(k=2), c_set)


def test_covariate_ordered_four_cells():
    ds = _ds(k=2, x_levels=4)
    fam = build_covariate_space(ds, "ordered")
    assert len(fam) == 4
    assert fam.pairs == ((0, 4), (1, 5), (2, 6), (3, 7))
    assert fam.lambda_cells == tuple(range(8))


def test_covariate_unordered_product_count():
    ds = _ds(k=2, x_levels=2)
    fam = build_covariate_space(ds, "unordered", [(0, 0, 1), (1, 1, 0), (2, 1, 0)])
    assert len(fam) == 6


def test_covariate_single_level_matches_base():
    ds = _ds(k=3, x_levels=1)
    cov = build_covariate_space(ds, "ordered")
    base = build_ordered_space(ds)
    assert cov.pairs == base.pairs and cov.allowed_d == base.allowed_d
    assert cov.lambda_cells == base.lambda_cells


def test_covariate_without_column():
    with pytest.raises(DataError):
        build_covariate_space(_ds(), "ordered")


def test_binary_mode_requires_binary_data():
    with pytest.raises(DataError):
        build_space(_ds(k=3, n_d=2), TestConfig(mode="binary"))
    assert build_space(_ds(k=2, n_d=2), TestConfig(mode="binary")).mode == "binary"


@pytest.mark.parametrize("y, m, intervals", [((0, 0, 0, 0), 1, 1), ((3, 1, 2), 3, 6)])
def test_interval_index_sizes(y, m, intervals):
    n = len(y)
    ds = Dataset(y=np.array(y, float), d=np.arange(n) % 2, z=np.arange(n) % 2, d_labels=(0, 1), z_labels=(0, 1))
    idx = IntervalIndex(ds, build_ordered_space(ds))
    assert idx.m == m and idx.n_intervals == intervals


def test_interval_counts_match_filter():
    rng = np.random.default_rng(5)
    for _ in range(20):
        ds = random_small(rng, n_max=10)
        fam = build_ordered_space(ds)
        idx = IntervalIndex(ds, fam)
        assert idx.cell_counts.sum() == ds.n
        assert np.all(np.diff(idx.cum_counts, axis=2) >= 0)
        for cell in range(fam.n_cells):
            for dd in range(ds.n_d):
                for i in range(idx.m):
                    for j in range(i, idx.m):
                        a, b = idx.sorted_y[i], idx.sorted_y[j]
                        want = np.sum((ds.z == cell) & (ds.d == dd) & (ds.y >= a) & (ds.y <= b))
                        assert idx.count(cell, dd, i, j) == want
                        assert 0 <= want <= idx.cell_counts[cell]
