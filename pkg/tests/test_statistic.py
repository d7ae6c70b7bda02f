import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ivtest import (
    Dataset,
    Member,
    NuMeasure,
    StatisticCache,
    TestConfig,
    build_ordered_space,
    build_space,
    compute_lambda_t,
    empirical_sigma_bound,
    estimate_contact_set,
    phi_hat,
    sigma_hat,
    test_statistic,
)
from ivtest.bootstrap import prepare

import oracles
from conftest import random_small

XIS = (0.001, 0.07, 0.22, 0.5, 1.0)


def _oracle_kw(ds, mode="ordered", c_set=()):
    return dict(n_z=ds.n_z, n_x=ds.n_x if ds.x is not None else 1, mode=mode, c_set=c_set)


def _lists(ds):
    x = None if ds.x is None else ds.x.tolist()
    return ds.y.tolist(), ds.d.tolist(), ds.z.tolist(), x


def test_lambda_examples(balanced_constant):
    fam = build_ordered_space(balanced_constant)
    assert compute_lambda_t(balanced_constant, fam) == (0.25, 1.0)
    z = np.array([0] * 3 + [1] * 2 + [2] * 5)
    ds = Dataset(y=np.zeros(10), d=np.arange(10) % 2, z=z, d_labels=(0, 1), z_labels=(0, 1, 2))
    lam, t = compute_lambda_t(ds, build_ordered_space(ds))
    assert lam == pytest.approx(0.03) and t == pytest.approx(0.3)


def test_empty_cell_zeroes_statistic():
    ds = Dataset(y=np.arange(6.0), d=np.arange(6) % 2, z=np.array([0, 0, 0, 2, 2, 2]),
                 d_labels=(0, 1), z_labels=(0, 1, 2))
    cache = StatisticCache(ds, build_ordered_space(ds))
    assert cache.lambda_hat == 0.0 and cache.t_n == 0.0
    assert test_statistic(cache, NuMeasure.uniform(XIS)) == 0.0
    y, d, z, _ = _lists(ds)
    assert oracles.ts(y, d, z, xis=XIS, weights=[0.2] * 5, n_z=3) == 0.0


def test_constant_outcome_balanced(balanced_constant):
    cache = StatisticCache(balanced_constant, build_ordered_space(balanced_constant))
    assert all(np.all(p == 0) for p in cache.phi)
    member = Member(0, "interval", 0, 0, 0)
    assert phi_hat(cache, member) == 0.0
    assert sigma_hat(cache, member) == pytest.approx(0.5)
    assert test_statistic(cache, NuMeasure.dirac(1.0)) == 0.0


def test_phi_binary_negative_sign():
    # 5 rows per instrument level; Y in B and D=1 for 3 of Z=1 and 2 of Z=0
    y = np.array([0, 0, 1, 1, 1, 0, 0, 0, 1, 1], float)
    d = np.array([1, 1, 0, 0, 0, 1, 1, 1, 0, 0])
    z = np.array([0] * 5 + [1] * 5)
    ds = Dataset(y=y, d=d, z=z, d_labels=(0, 1), z_labels=(0, 1))
    cache = StatisticCache(ds, build_ordered_space(ds))
    assert phi_hat(cache, Member(0, "interval", 1, 0, 0)) == pytest.approx(-0.2)


def test_sigma_zero_when_both_cells_empty():
    ds = Dataset(y=np.arange(4.0), d=np.arange(4) % 2, z=np.array([0, 0, 2, 2]),
                 d_labels=(0, 1), z_labels=(0, 1, 2))
    fam = build_ordered_space(ds)
    cache = StatisticCache(ds, fam)
    assert all(np.all(s == 0) for s in cache.sigma)


def test_members_match_oracle_moments():
    rng = np.random.default_rng(11)
    for _ in range(15):
        ds = random_small(rng, n_max=9)
        cache = StatisticCache(ds, build_ordered_space(ds))
        y, d, z, _ = _lists(ds)
        root_t, rows = oracles.table(y, d, z, n_z=ds.n_z)
        assert root_t == pytest.approx(math.sqrt(cache.t_n))
        # oracle rows per pair: intervals at d_min, intervals at d_max, thresholds
        m = cache.index.m
        n_int = m * (m + 1) // 2
        lo, hi = int(ds.d.min()), int(ds.d.max())
        thresholds = sorted(set(d))[:-1]
        per_pair = 2 * n_int + len(thresholds)
        for p in range(ds.n_z - 1):
            chunk = rows[p * per_pair:(p + 1) * per_pair]
            k = 0
            for dd in (lo, hi):
                for i in range(m):
                    for j in range(i, m):
                        mem = Member(p, "interval", dd, i, j)
                        assert phi_hat(cache, mem) == pytest.approx(chunk[k][3], abs=1e-12)
                        assert sigma_hat(cache, mem) == pytest.approx(chunk[k][4], abs=1e-12)
                        k += 1
            for c in thresholds:
                mem = Member(p, "fosd", c)
                assert phi_hat(cache, mem) == pytest.approx(chunk[k][3], abs=1e-12)
                assert sigma_hat(cache, mem) == pytest.approx(chunk[k][4], abs=1e-12)
                k += 1


def _mixed_dataset(rng, n=10, k=2, n_d=3, n_x=2):
    return Dataset(
        y=rng.integers(0, 4, n).astype(float),
        d=np.concatenate([np.arange(n_d), rng.integers(0, n_d, n - n_d)]),
        z=np.concatenate([np.arange(k), rng.integers(0, k, n - k)]),
        x=rng.integers(0, n_x, n),
        d_labels=tuple(range(n_d)), z_labels=tuple(range(k)), x_labels=tuple(range(n_x)),
    )


@pytest.mark.parametrize(
    "mode, c_set",
    [
        ("ordered", ()),
        ("binary", ()),
        ("unordered", ((0, 0, 1), (1, 1, 0), (2, 1, 0))),
        ("ordered-with-covariates", ()),
        ("unordered-with-covariates", ((0, 0, 1), (2, 1, 0), (0, 0, 1))),
    ],
)
def test_statistic_matches_oracle_all_modes(mode, c_set):
    rng = np.random.default_rng(sum(map(ord, mode)))
    for _ in range(10):
        ds = _mixed_dataset(rng, n_d=2 if mode == "binary" else 3)
        if not mode.endswith("covariates"):
            ds = Dataset(y=ds.y, d=ds.d, z=ds.z, d_labels=ds.d_labels, z_labels=ds.z_labels)
        config = TestConfig(mode=mode, c_set=c_set)
        fam = build_space(ds, config)
        cache = StatisticCache(ds, fam)
        y, d, z, x = _lists(ds)
        want = oracles.per_xi_sup(y, d, z, x, xis=XIS, **_oracle_kw(ds, mode, c_set))
        got = cache.per_xi_sup(XIS)
        assert [got[xi] for xi in XIS] == pytest.approx(want, rel=1e-10, abs=1e-12)


def test_contact_set_matches_direct_inequality():
    rng = np.random.default_rng(3)
    for _ in range(20):
        ds = random_small(rng, n_max=10)
        cache = StatisticCache(ds, build_ordered_space(ds))
        y, d, z, _ = _lists(ds)
        root_t, rows = oracles.table(y, d, z, n_z=ds.n_z)
        for tau in (0.0, 0.5, 2.0, math.inf):
            want = sum(1 for r in rows if root_t * abs(r[3]) / max(0.001, r[4]) <= tau)
            contact = estimate_contact_set(cache, tau, 0.001)
            assert contact.size == want
            assert contact.total == len(rows)


def test_contact_set_infinite_tau_is_everything():
    rng = np.random.default_rng(4)
    ds = random_small(rng)
    cache = StatisticCache(ds, build_ordered_space(ds))
    contact = estimate_contact_set(cache, math.inf)
    assert all(mask.all() for mask in contact.masks)
    assert contact.size == contact.total == cache.total_indices


def test_sigma_bound_examples():
    ds = Dataset(y=np.zeros(4), d=np.array([0, 1, 0, 1]), z=np.array([0, 0, 1, 1]),
                 d_labels=(0, 1), z_labels=(0, 1))
    assert empirical_sigma_bound(ds, build_ordered_space(ds)) == pytest.approx(0.5)
    ds3 = Dataset(y=np.zeros(6), d=np.arange(6) % 2, z=np.arange(6) % 3, d_labels=(0, 1), z_labels=(0, 1, 2))
    assert empirical_sigma_bound(ds3, build_ordered_space(ds3)) ** 2 <= 1 / 8 + 1e-15


def test_sigma_bound_covariate_matches_pairs():
    rng = np.random.default_rng(8)
    ds = _mixed_dataset(rng, n=40, k=2, n_x=4)
    fam = build_space(ds, TestConfig(mode="ordered-with-covariates"))
    cells = ds.z * 4 + ds.x
    p = np.bincount(cells, minlength=8) / ds.n
    lam = np.prod(p)
    want = max(sum(lam / p[g] for g in pair if p[g] > 0) for pair in fam.pairs) / 4
    assert empirical_sigma_bound(ds, fam) ** 2 == pytest.approx(want)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sup_nonincreasing_in_xi(seed):
    ds = random_small(np.random.default_rng(seed))
    cache = StatisticCache(ds, build_ordered_space(ds))
    sups = cache.per_xi_sup((0.01, 0.05, 0.1, 0.3, 1.0))
    vals = list(sups.values())
    assert all(a >= b - 1e-15 for a, b in zip(vals, vals[1:]))
    assert all(np.all(s >= 0) for s in cache.sigma)
    assert all(v >= 0 for v in vals)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10.0))
def test_statistic_scales_with_measure(seed, c):
    ds = random_small(np.random.default_rng(seed))
    cache = StatisticCache(ds, build_ordered_space(ds))
    nu = NuMeasure.uniform((0.07, 0.22, 1.0))
    assert test_statistic(cache, nu.scaled(c)) == pytest.approx(c * test_statistic(cache, nu))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_outcome_relabeling_invariance(seed):
    # any strictly increasing transform of Y leaves every statistic unchanged
    ds = random_small(np.random.default_rng(seed))
    moved = Dataset(y=np.exp(ds.y) + 3.0, d=ds.d, z=ds.z, d_labels=ds.d_labels, z_labels=ds.z_labels)
    a = StatisticCache(ds, build_ordered_space(ds)).per_xi_sup(XIS)
    b = StatisticCache(moved, build_ordered_space(moved)).per_xi_sup(XIS)
    assert a == b


def test_prepare_resolves_labels():
    rows_d = np.array([0, 1, 2, 0, 1, 2])
    ds = Dataset(y=np.arange(6.0), d=rows_d, z=np.array([0, 0, 0, 1, 1, 1]),
                 d_labels=("a", "b", "c"), z_labels=(0, 1))
    fam, cache = prepare(ds, TestConfig(mode="unordered", c_set=(("a", 0, 1), ("c", "1", "0"))))
    assert fam.allowed_d == (((0, 1),), ((2, 1),))
    assert fam.pairs == ((0, 1), (1, 0))
