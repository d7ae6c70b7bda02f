"""Shared domain types: datasets, trimming measures, configuration, results."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Hashable, Iterable, Sequence

import numpy as np

MODES = (
    "ordered",
    "unordered",
    "binary",
    "ordered-with-covariates",
    "unordered-with-covariates",
)
ORDERED_MODES = ("ordered", "binary", "ordered-with-covariates")
UNORDERED_MODES = ("unordered", "unordered-with-covariates")
COVARIATE_MODES = ("ordered-with-covariates", "unordered-with-covariates")

# Trimming grid used throughout the multivalued simulations and the
# empirical application.
DEFAULT_XI_GRID = (0.07, 0.1, 0.13, 0.16, 0.19, 0.22, 0.25, 0.28, 0.3, 1.0)


class DataError(ValueError):
    """Malformed or degenerate input data."""


class ConfigError(ValueError):
    """Inconsistent test or simulation configuration."""


def natural_sort(labels: Iterable[Hashable]) -> list:
    """Sort labels numerically when every label parses as a number,
    lexicographically (on ``str``) otherwise."""
    labels = list(labels)
    try:
        return sorted(labels, key=lambda v: (float(v), str(v)))
    except (TypeError, ValueError):
        return sorted(labels, key=str)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Aligned outcome, treatment, instrument and optional covariate codes.

    Codes index into the label tuples, so ``d_labels[d[i]]`` is the
    original treatment label of observation ``i``. Label tuples describe
    the support; a level may have no observations (empty cell).
    """

    y: np.ndarray
    d: np.ndarray
    z: np.ndarray
    x: np.ndarray | None = None
    d_labels: tuple = ()
    z_labels: tuple = ()
    x_labels: tuple | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        d = np.asarray(self.d, dtype=np.int64)
        z = np.asarray(self.z, dtype=np.int64)
        x = None if self.x is None else np.asarray(self.x, dtype=np.int64)
        n = y.shape[0]
        if y.ndim != 1 or n < 1:
            raise DataError("dataset needs at least one observation")
        if d.shape != (n,) or z.shape != (n,) or (x is not None and x.shape != (n,)):
            raise DataError("y, d, z (and x) must have identical length")
        if not np.all(np.isfinite(y)):
            raise DataError("outcome contains non-finite values")
        d_labels = tuple(self.d_labels) or tuple(range(int(d.max()) + 1))
        z_labels = tuple(self.z_labels) or tuple(range(int(z.max()) + 1))
        if len(z_labels) < 2:
            raise DataError("instrument must have at least 2 levels")
        if d.min() < 0 or d.max() >= len(d_labels):
            raise DataError("treatment codes out of range")
        if z.min() < 0 or z.max() >= len(z_labels):
            raise DataError("instrument codes out of range")
        x_labels = None
        if x is not None:
            x_labels = tuple(self.x_labels or ()) or tuple(range(int(x.max()) + 1))
            if x.min() < 0 or x.max() >= len(x_labels):
                raise DataError("covariate codes out of range")
        for arr in (y, d, z) + ((x,) if x is not None else ()):
            arr.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "d_labels", d_labels)
        object.__setattr__(self, "z_labels", z_labels)
        object.__setattr__(self, "x_labels", x_labels)

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def n_d(self) -> int:
        return len(self.d_labels)

    @property
    def n_z(self) -> int:
        return len(self.z_labels)

    @property
    def n_x(self) -> int:
        return 1 if self.x_labels is None else len(self.x_labels)

    def decode(self) -> list[tuple]:
        """Rows of original labels, inverse of :func:`encode_dataset`."""
        rows = []
        for i in range(self.n):
            row = (float(self.y[i]), self.d_labels[self.d[i]], self.z_labels[self.z[i]])
            if self.x is not None:
                row = row + (self.x_labels[self.x[i]],)
            rows.append(row)
        return rows

    def level_counts(self) -> dict[str, dict[str, int]]:
        out = {
            "d": {str(lab): int(np.sum(self.d == k)) for k, lab in enumerate(self.d_labels)},
            "z": {str(lab): int(np.sum(self.z == k)) for k, lab in enumerate(self.z_labels)},
        }
        if self.x is not None:
            out["x"] = {str(lab): int(np.sum(self.x == k)) for k, lab in enumerate(self.x_labels)}
        return out

    def d_code(self, label) -> int:
        return _lookup(self.d_labels, label, "treatment")

    def z_code(self, label) -> int:
        return _lookup(self.z_labels, label, "instrument")


def _lookup(labels: tuple, label, what: str) -> int:
    if label in labels:
        return labels.index(label)
    # CSV labels are strings; allow "1" to match 1 and vice versa
    for k, lab in enumerate(labels):
        if str(lab) == str(label):
            return k
        try:
            if float(lab) == float(label):
                return k
        except (TypeError, ValueError):
            pass
    raise ConfigError(f"unknown {what} label {label!r}")


def encode_dataset(
    rows: Sequence[Sequence[Any]],
    instrument_order: Sequence[Hashable] | None = None,
) -> Dataset:
    """Encode ``(y, d_label, z_label[, x_label])`` rows into a :class:`Dataset`.

    Treatment and instrument labels are coded ``0..L-1`` in natural order
    (numeric if every label parses as a number). ``instrument_order``
    overrides the instrument ordering and must list every observed level.
    """
    if len(rows) == 0:
        raise DataError("no rows to encode")
    width = len(rows[0])
    if width not in (3, 4) or any(len(r) != width for r in rows):
        raise DataError("rows must all be (y, d, z) or (y, d, z, x)")
    y = []
    for i, r in enumerate(rows):
        try:
            v = float(r[0])
        except (TypeError, ValueError):
            raise DataError(f"row {i + 1}: outcome {r[0]!r} is not numeric") from None
        if not math.isfinite(v):
            raise DataError(f"row {i + 1}: outcome is not finite")
        y.append(v)

    d_labels = tuple(natural_sort({r[1] for r in rows}))
    z_seen = {r[2] for r in rows}
    if instrument_order is not None:
        z_labels = tuple(instrument_order)
        missing = z_seen - set(z_labels)
        if missing or len(set(z_labels)) != len(z_labels):
            raise ConfigError(f"instrument_order must list each level once; missing {sorted(map(str, missing))}")
    else:
        z_labels = tuple(natural_sort(z_seen))
    if len(z_seen) < 2:
        raise DataError("instrument takes fewer than 2 distinct values")
    d_index = {lab: k for k, lab in enumerate(d_labels)}
    z_index = {lab: k for k, lab in enumerate(z_labels)}
    x = None
    x_labels = None
    if width == 4:
        x_labels = tuple(natural_sort({r[3] for r in rows}))
        x_index = {lab: k for k, lab in enumerate(x_labels)}
        x = [x_index[r[3]] for r in rows]
    return Dataset(
        y=np.array(y),
        d=np.array([d_index[r[1]] for r in rows]),
        z=np.array([z_index[r[2]] for r in rows]),
        x=None if x is None else np.array(x),
        d_labels=d_labels,
        z_labels=z_labels,
        x_labels=x_labels,
    )


def normalize_extremes(dataset: Dataset) -> tuple[int, int]:
    """Codes of the smallest and largest observed treatment levels.

    The smallest level enters the interval family with sign +1 and the
    largest with sign -1.
    """
    present = np.unique(dataset.d)
    if present.size < 2:
        raise DataError("ordered testing needs at least 2 observed treatment levels")
    return int(present[0]), int(present[-1])


@dataclass(frozen=True)
class NuMeasure:
    """Finite measure on trimming values: ``points`` in (0, 1] with weights."""

    points: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        pts = tuple(float(p) for p in self.points)
        wts = tuple(float(w) for w in self.weights)
        if not pts or len(pts) != len(wts):
            raise ConfigError("nu needs matching, nonempty points and weights")
        if any(not (0.0 < p <= 1.0) for p in pts):
            raise ConfigError("trimming values must lie in (0, 1]")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ConfigError("trimming values must be strictly increasing")
        if any(not (w > 0.0 and math.isfinite(w)) for w in wts):
            raise ConfigError("nu weights must be positive and finite")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)

    @classmethod
    def dirac(cls, xi: float) -> "NuMeasure":
        return cls((xi,), (1.0,))

    @classmethod
    def uniform(cls, points: Iterable[float]) -> "NuMeasure":
        pts = sorted(float(p) for p in points)
        return cls(tuple(pts), tuple(1.0 / len(pts) for _ in pts))

    @property
    def total(self) -> float:
        return float(sum(self.weights))

    def covers(self, bound: float) -> bool:
        """Whether some trimming value reaches ``bound`` (the unweighted KS member)."""
        return any(p >= bound for p in self.points)

    def scaled(self, c: float) -> "NuMeasure":
        return NuMeasure(self.points, tuple(c * w for w in self.weights))

    def integrate(self, per_xi: dict[float, float] | Sequence[float]) -> float:
        if isinstance(per_xi, dict):
            vals = [per_xi[p] for p in self.points]
        else:
            vals = list(per_xi)
        return float(sum(w * v for w, v in zip(self.weights, vals)))

    def integrate_columns(self, per_xi: np.ndarray) -> np.ndarray:
        """Row-wise :meth:`integrate` of an ``(N, len(points))`` array."""
        out = np.zeros(per_xi.shape[0])
        for t, w in enumerate(self.weights):
            out = out + w * per_xi[:, t]
        return out


@dataclass(frozen=True)
class TestConfig:
    """Tuning and bookkeeping for one run of the test."""

    __test__ = False  # not a pytest class

    mode: str = "ordered"
    tau_n: float = 2.0
    xi0: float = 0.001
    n_bootstrap: int = 1000
    alpha: float = 0.05
    eta: float = 0.0
    seed: int = 0
    c_set: tuple = ()
    instrument_order: tuple | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if not self.tau_n > 0:
            raise ConfigError("tau_n must be positive (or inf)")
        if not self.xi0 > 0:
            raise ConfigError("xi0 must be positive")
        if self.n_bootstrap < 1:
            raise ConfigError("n_bootstrap must be at least 1")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if not self.eta >= 0:
            raise ConfigError("eta must be nonnegative")
        if self.mode in UNORDERED_MODES and not self.c_set:
            raise ConfigError("unordered modes require a nonempty c_set")
        object.__setattr__(self, "c_set", tuple(tuple(t) for t in self.c_set))
        if self.instrument_order is not None:
            object.__setattr__(self, "instrument_order", tuple(self.instrument_order))

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "tau_n": _json_float(self.tau_n),
            "xi0": self.xi0,
            "n_bootstrap": self.n_bootstrap,
            "alpha": self.alpha,
            "eta": self.eta,
            "seed": self.seed,
            "c_set": [list(map(str, t)) for t in self.c_set],
            "instrument_order": None if self.instrument_order is None else list(map(str, self.instrument_order)),
        }


def _json_float(v: float):
    return "inf" if math.isinf(v) else float(v)


@dataclass(frozen=True)
class TestResult:
    """Outcome of one bootstrap test."""

    __test__ = False

    ts: float
    critical_value: float
    p_value: float
    reject: bool
    per_xi_sup: dict[float, float]
    contact_set_size: int
    total_indices: int
    bootstrap_stats: np.ndarray = field(repr=False)
    lambda_hat: float = 0.0
    effective_t_n: float = 0.0
    sup_argmax: dict[float, Any] = field(default_factory=dict, repr=False)
    diagnostics: tuple[str, ...] = ()

    def __post_init__(self):
        if self.reject != (self.ts > self.critical_value):
            raise ValueError("reject flag inconsistent with ts > critical_value")

    def to_dict(self) -> dict:
        return {
            "ts": self.ts,
            "critical_value": self.critical_value,
            "p_value": self.p_value,
            "reject": self.reject,
            "per_xi_sup": {repr(k): v for k, v in self.per_xi_sup.items()},
            "contact_set_size": self.contact_set_size,
            "total_indices": self.total_indices,
            "lambda_hat": self.lambda_hat,
            "effective_t_n": self.effective_t_n,
            "bootstrap_stats": [float(s) for s in self.bootstrap_stats],
            "sup_argmax": {repr(k): v for k, v in self.sup_argmax.items()},
            "diagnostics": list(self.diagnostics),
        }
