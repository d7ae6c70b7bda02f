import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ivtest import (
    ConfigError,
    DataError,
    Dataset,
    NuMeasure,
    TestConfig,
    TestResult,
    encode_dataset,
    normalize_extremes,
)
from ivtest.core import natural_sort


def test_natural_sort_numeric_and_text():
    assert natural_sort(["10", "9", "1"]) == ["1", "9", "10"]
    assert natural_sort(["b", "a"]) == ["a", "b"]


def test_encode_identity_coding():
    ds = encode_dataset([(1.0, 0, 0), (2.0, 1, 1), (3.0, 1, 0)])
    assert ds.d.tolist() == [0, 1, 1]
    assert ds.z.tolist() == [0, 1, 0]
    assert ds.d_labels == (0, 1)


def test_encode_preserves_order():
    ds = encode_dataset([(0, 9, 0), (0, 2, 1), (0, 5, 0)])
    assert ds.d.tolist() == [2, 0, 1]
    assert ds.d_labels == (2, 5, 9)


def test_encode_eighteen_treatment_levels():
    rows = [(0.1 * i, str(1 + i % 18), str(i % 2)) for i in range(36)]
    ds = encode_dataset(rows)
    assert ds.n_d == 18 and ds.n_z == 2
    assert ds.d_labels[:3] == ("1", "2", "3")
    assert normalize_extremes(ds) == (0, 17)


@pytest.mark.parametrize(
    "rows, match",
    [
        ([], "no rows"),
        ([(1.0, 0, 0), (2.0, 1, 0)], "fewer than 2"),
        ([(float("nan"), 0, 0), (2.0, 1, 1)], "row 1"),
        ([(1.0, 0, 0), ("NA", 1, 1)], "row 2"),
    ],
)
def test_encode_errors(rows, match):
    with pytest.raises(DataError, match=match):
        encode_dataset(rows)


def test_encode_instrument_order_override():
    ds = encode_dataset([(0, 0, "hi"), (0, 1, "lo")], instrument_order=("lo", "hi"))
    assert ds.z.tolist() == [1, 0]
    with pytest.raises(ConfigError):
        encode_dataset([(0, 0, "hi"), (0, 1, "lo")], instrument_order=("lo",))


def test_encode_with_covariate():
    ds = encode_dataset([(0, 0, 0, "a"), (1, 1, 1, "b")])
    assert ds.n_x == 2 and ds.x.tolist() == [0, 1]


@pytest.mark.parametrize("codes, expected", [([0, 1], (0, 1)), ([0, 1, 2], (0, 2)), ([2, 1, 2], (1, 2))])
def test_normalize_extremes(codes, expected):
    ds = Dataset(y=np.zeros(len(codes)), d=np.array(codes), z=np.arange(len(codes)) % 2,
                 d_labels=(0, 1, 2), z_labels=(0, 1))
    assert normalize_extremes(ds) == expected


def test_normalize_extremes_single_level():
    ds = Dataset(y=np.zeros(2), d=np.zeros(2, int), z=np.array([0, 1]), d_labels=(0, 1), z_labels=(0, 1))
    with pytest.raises(DataError):
        normalize_extremes(ds)


def test_dataset_invariants():
    with pytest.raises(DataError):
        Dataset(y=np.zeros(2), d=np.zeros(3, int), z=np.array([0, 1]), d_labels=(0,), z_labels=(0, 1))
    with pytest.raises(DataError):
        Dataset(y=np.array([0.0, np.inf]), d=np.zeros(2, int), z=np.array([0, 1]), d_labels=(0,), z_labels=(0, 1))
    ds = Dataset(y=np.zeros(2), d=np.zeros(2, int), z=np.array([0, 1]), d_labels=(0,), z_labels=(0, 1))
    with pytest.raises(ValueError):
        ds.y[0] = 1.0


def test_nu_measure_validation():
    with pytest.raises(ConfigError):
        NuMeasure((0.0,), (1.0,))
    with pytest.raises(ConfigError):
        NuMeasure((0.2, 0.1), (1.0, 1.0))
    with pytest.raises(ConfigError):
        NuMeasure((0.1,), (0.0,))
    nu = NuMeasure.uniform((0.07, 1.0))
    assert nu.total == pytest.approx(1.0)
    assert nu.covers(0.5) and not NuMeasure.dirac(0.07).covers(0.5)


@given(st.lists(st.floats(0, 10), min_size=3, max_size=3), st.floats(0.01, 100))
def test_nu_integrate_is_linear(values, c):
    nu = NuMeasure((0.1, 0.5, 1.0), (0.2, 0.3, 0.5))
    assert nu.scaled(c).integrate(values) == pytest.approx(c * nu.integrate(values))
    cols = nu.integrate_columns(np.array([values]))
    assert cols[0] == nu.integrate(values)


def test_config_requires_c_set_in_unordered_mode():
    with pytest.raises(ConfigError):
        TestConfig(mode="unordered")
    with pytest.raises(ConfigError):
        TestConfig(mode="bogus")
    assert TestConfig(tau_n=math.inf).to_dict()["tau_n"] == "inf"


def test_result_decision_is_strict():
    kw = dict(p_value=1.0, per_xi_sup={}, contact_set_size=0, total_indices=0,
              bootstrap_stats=np.zeros(1), lambda_hat=0.0, effective_t_n=0.0,
              sup_argmax={}, diagnostics=())
    TestResult(ts=0.0, critical_value=0.0, reject=False, **kw)
    with pytest.raises(ValueError):
        TestResult(ts=0.0, critical_value=0.0, reject=True, **kw)
