"""Bootstrap test of instrument validity for heterogeneous treatment effect models."""
from .bootstrap import (
    bootstrap_statistic,
    critical_value,
    p_value,
    resample,
    run_test,
)
from .core import (
    DEFAULT_XI_GRID,
    ConfigError,
    DataError,
    Dataset,
    NuMeasure,
    TestConfig,
    TestResult,
    encode_dataset,
    normalize_extremes,
)
from .spaces import (
    IntervalIndex,
    PairFamily,
    build_covariate_space,
    build_ordered_space,
    build_space,
    build_unordered_space,
)
from .statistic import (
    Member,
    StatisticCache,
    compute_lambda_t,
    empirical_sigma_bound,
    estimate_contact_set,
    phi_hat,
    sigma_hat,
    test_statistic,
)

__version__ = "0.1.0"
