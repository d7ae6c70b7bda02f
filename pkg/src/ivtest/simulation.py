"""Data generating processes and warp-speed Monte Carlo rejection rates.

Every design draws independent ``U, V, W ~ Unif(0, 1)``, a standard normal
``E`` and, with covariates, ``U_X ~ Unif(0, 1)``. ``U`` fixes the
instrument, ``V`` the potential treatments, ``W`` the mixture component of
the outcome, and ``Y = mean + sd * E`` for the component selected by the
realized ``(D, Z)`` cell.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import reference
from .bootstrap import bootstrap_per_xi, critical_value, prepare, resample
from .core import DEFAULT_XI_GRID, ConfigError, DataError, Dataset, NuMeasure, TestConfig
from .statistic import estimate_contact_set

UNORDERED_XI_GRID = (0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.1)
BINARY_XI_GRID = (0.07, 0.22, 0.3, 1.0)
NULL_TAUS = (0.1, 0.5, 1.0, 2.0, 3.0, 4.0, math.inf)
POWER_SIZES = ((200, 1 / 2), (600, 1 / 6), (1000, 1 / 2), (1100, 1 / 11), (2000, 1 / 2))

STD = ((1.0, 0.0, 1.0),)


def _normal(mean: float, sd: float = 1.0) -> tuple:
    return ((1.0, mean, sd),)


# five-point normal mixture with spread 0.125
SPIKES = (
    (0.15, -1.0, 0.125),
    (0.20, -0.5, 0.125),
    (0.30, 0.0, 0.125),
    (0.20, 0.5, 0.125),
    (0.15, 1.0, 0.125),
)


def _three_level(hi: float, mid: float) -> tuple:
    """``2 if V <= hi``, ``1 if hi < V <= mid``, else ``0``."""
    return ((2, hi), (1, mid), (0, 1.0))


@dataclass(frozen=True)
class Recipe:
    """Declarative description of one design.

    ``treatment[z]`` lists ``(label, cut)`` pairs: the first label whose
    cut satisfies ``V <= cut``. ``outcome`` maps ``(d, z)`` (or ``(d, None)``
    as a fallback) to normal mixture components ``(prob, mean, sd)``.
    """

    name: str
    instrument: str
    z_labels: tuple
    d_labels: tuple
    treatment: dict
    outcome: dict
    mode: str
    null: bool
    default_n: int
    default_r: float
    c_set: tuple = ()
    covariate: bool = False
    xi_grid: tuple = DEFAULT_XI_GRID
    description: str = ""


def _ordered(name, treatment, outcome, null, default_n=3000, description=""):
    return Recipe(
        name=name, instrument="ternary", z_labels=(0, 1, 2), d_labels=(0, 1, 2),
        treatment=treatment, outcome=outcome, mode="ordered", null=null,
        default_n=default_n, default_r=0.5, description=description,
    )


_NULL_D = _three_level(0.33, 0.66)
_SAME = {z: _NULL_D for z in (0, 1, 2)}
_BY_D = {(0, None): _normal(0.0), (1, None): _normal(1.0), (2, None): _normal(2.0)}
_POWER_D = {z: _three_level(0.45, 0.55) for z in (0, 1, 2)}


def _shifted_cell(cell, components, labels=(0, 1, 2)):
    out = {(d, None): STD for d in labels}
    out[cell] = components
    return out


_UNORDERED_D = (("c", 0.5), ("b", 0.6), ("a", 1.0))
_UNORDERED_C = (("a", 0, 1), ("b", 1, 0), ("c", 1, 0))


def _unordered(name, treatment, outcome, null, description=""):
    return Recipe(
        name=name, instrument="binary", z_labels=(0, 1), d_labels=("a", "b", "c"),
        treatment=treatment, outcome=outcome, mode="unordered-with-covariates",
        null=null, default_n=2000, default_r=0.5, c_set=_UNORDERED_C, covariate=True,
        xi_grid=UNORDERED_XI_GRID, description=description,
    )


def _binary(name, treatment, outcome, null, description=""):
    return Recipe(
        name=name, instrument="binary", z_labels=(0, 1), d_labels=(0, 1),
        treatment=treatment, outcome=outcome, mode="binary", null=null,
        default_n=2000, default_r=0.5, xi_grid=BINARY_XI_GRID, description=description,
    )


_BIN_POWER_D = {0: ((1, 0.45), (0, 1.0)), 1: ((1, 0.55), (0, 1.0))}

CATALOG: dict[str, Recipe] = {
    r.name: r
    for r in [
        _ordered("multivalued-null", _SAME, _BY_D, True,
                 description="valid instrument, D and Z in {0,1,2}"),
        _ordered("multivalued-degenerate-null",
                 {0: _three_level(0.328, 0.658), 1: _three_level(0.329, 0.659), 2: _three_level(0.33, 0.66)},
                 _BY_D, True, description="valid instrument with a degenerate limit"),
        _ordered("constant-null", {z: ((0, 1.0),) for z in (0, 1, 2)},
                 {(d, None): _normal(0.0, 0.0) for d in (0, 1, 2)}, True,
                 description="constant treatment and outcome; every statistic is 0"),
        _ordered("dgp1", _POWER_D, _shifted_cell((2, 0), _normal(-0.7)), False, 1000),
        _ordered("dgp2", _POWER_D, _shifted_cell((2, 0), _normal(0.0, 1.675)), False, 1000),
        _ordered("dgp3", _POWER_D, _shifted_cell((2, 0), _normal(0.0, 0.515)), False, 1000),
        _ordered("dgp4", _POWER_D, _shifted_cell((2, 0), SPIKES), False, 1000),
        _ordered("dgp5", {0: _three_level(0.6, 0.8), 1: _NULL_D, 2: _NULL_D}, _BY_D, False, 1000,
                 description="monotonicity fails; dominance also violated"),
        _ordered("dgp6", {0: _NULL_D, 1: _three_level(0.6, 0.8), 2: _NULL_D}, _BY_D, False, 1000),
        _unordered("unordered-null", {0: _UNORDERED_D, 1: _UNORDERED_D},
                   {("a", None): _normal(0.0), ("b", None): _normal(1.0), ("c", None): _normal(2.0)}, True),
        _unordered("unordered-dgp1", {0: _UNORDERED_D, 1: _UNORDERED_D},
                   _shifted_cell(("c", 0), _normal(-0.7), ("a", "b", "c")), False),
        _unordered("unordered-dgp2", {0: _UNORDERED_D, 1: _UNORDERED_D},
                   _shifted_cell(("c", 0), _normal(0.0, 1.675), ("a", "b", "c")), False),
        _unordered("unordered-dgp3", {0: _UNORDERED_D, 1: _UNORDERED_D},
                   _shifted_cell(("c", 0), _normal(0.0, 0.515), ("a", "b", "c")), False),
        _unordered("unordered-dgp4", {0: _UNORDERED_D, 1: _UNORDERED_D},
                   _shifted_cell(("c", 0), SPIKES, ("a", "b", "c")), False),
        _unordered("unordered-dgp5",
                   {0: _UNORDERED_D, 1: (("c", 0.2), ("b", 0.3), ("a", 1.0))},
                   {("a", None): _normal(0.0), ("b", None): _normal(1.0), ("c", None): _normal(2.0)}, False),
        _binary("binary-null", {0: ((1, 0.5), (0, 1.0)), 1: ((1, 0.5), (0, 1.0))},
                {(0, None): _normal(0.0), (1, None): _normal(1.0)}, True),
        _binary("binary-dgp1", _BIN_POWER_D, _shifted_cell((1, 0), _normal(-0.7), (0, 1)), False),
        _binary("binary-dgp2", _BIN_POWER_D, _shifted_cell((1, 0), _normal(0.0, 1.675), (0, 1)), False),
        _binary("binary-dgp3", _BIN_POWER_D, _shifted_cell((1, 0), _normal(0.0, 0.515), (0, 1)), False),
        _binary("binary-dgp4", _BIN_POWER_D, _shifted_cell((1, 0), SPIKES, (0, 1)), False),
    ]
}


@dataclass(frozen=True)
class DgpSpec:
    """A catalog design at a given sample size and instrument probability.

    ``r_n`` is ``P(Z=2)`` for three-level instruments and ``P(Z=1)`` for
    binary ones. ``params`` overrides :class:`Recipe` fields.
    """

    name: str
    n: int
    r_n: float | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in CATALOG:
            raise ConfigError(f"unknown DGP {self.name!r}; choose from {sorted(CATALOG)}")
        if self.n < 0:
            raise ConfigError("n must be nonnegative")
        if self.r_n is not None and not 0.0 <= self.r_n <= 1.0:
            raise ConfigError("r_n must be a probability")

    @property
    def recipe(self) -> Recipe:
        base = CATALOG[self.name]
        return replace(base, **self.params) if self.params else base

    @property
    def r(self) -> float:
        return self.recipe.default_r if self.r_n is None else self.r_n


def _pick(v: np.ndarray, rule: tuple) -> np.ndarray:
    """Index into ``rule`` of the first cut with ``v <= cut``."""
    cuts = np.array([c for _, c in rule])
    return np.minimum(np.searchsorted(cuts, v, side="left"), len(rule) - 1)


def generate(spec: DgpSpec, rng: np.random.Generator) -> Dataset:
    """Draw ``spec.n`` i.i.d. observations."""
    if spec.n < 1:
        raise DataError("cannot generate an empty sample")
    rec = spec.recipe
    n, r = spec.n, spec.r
    u, v, w = rng.random(n), rng.random(n), rng.random(n)
    e = rng.standard_normal(n)
    ux = rng.random(n) if rec.covariate else None

    if rec.instrument == "ternary":
        z = np.where(u <= r, 2, np.where(u <= r + 0.2, 1, 0))
    else:
        z = (u <= r).astype(np.int64)
    z_code = np.array([rec.z_labels.index(lab) for lab in (0, 1, 2)[: len(rec.z_labels)]])[z]

    d = np.empty(n, dtype=np.int64)
    for zc, zlab in enumerate(rec.z_labels):
        rule = rec.treatment[zlab]
        sel = z_code == zc
        labels = np.array([rec.d_labels.index(lab) for lab, _ in rule])
        d[sel] = labels[_pick(v[sel], rule)]

    y = np.empty(n)
    for dc, dlab in enumerate(rec.d_labels):
        for zc, zlab in enumerate(rec.z_labels):
            sel = (d == dc) & (z_code == zc)
            if not sel.any():
                continue
            comps = rec.outcome.get((dlab, zlab), rec.outcome.get((dlab, None)))
            probs = np.cumsum([p for p, _, _ in comps])
            k = np.minimum(np.searchsorted(probs, w[sel], side="left"), len(comps) - 1)
            means = np.array([m for _, m, _ in comps])
            sds = np.array([s for _, _, s in comps])
            y[sel] = means[k] + sds[k] * e[sel]

    x = None if ux is None else (ux <= 0.5).astype(np.int64)
    return Dataset(
        y=y, d=d, z=z_code, x=x,
        d_labels=rec.d_labels, z_labels=rec.z_labels,
        x_labels=(0, 1) if x is not None else None,
    )


@dataclass(eq=False)
class MonteCarloDraws:
    """Per-iteration suprema of one warp-speed run.

    ``ts[r, t]`` is the sample supremum at ``xis[t]``; ``boot[r, k, t]`` the
    single bootstrap supremum under ``taus[k]``.
    """

    xis: tuple
    taus: tuple
    ts: np.ndarray
    boot: np.ndarray
    degenerate: int = 0

    @property
    def n_mc(self) -> int:
        return int(self.ts.shape[0])

    def rejection_rate(self, nu: NuMeasure, tau: float, alpha: float = 0.05, eta: float = 0.0):
        cols = [self.xis.index(p) for p in nu.points]
        k = self.taus.index(tau)
        ts = nu.integrate_columns(self.ts[:, cols])
        boot = nu.integrate_columns(self.boot[:, k, cols])
        c = critical_value(boot, alpha, eta)
        rate = float(np.mean(ts > c))
        return rate, c


def _iteration(spec: DgpSpec, xis, taus, xi0: float, seq: np.random.SeedSequence):
    data_seq, boot_seq = seq.spawn(2)
    ds = generate(spec, np.random.Generator(np.random.Philox(data_seq)))
    rec = spec.recipe
    try:
        _, cache = prepare(ds, TestConfig(mode=rec.mode, c_set=rec.c_set))
    except DataError:
        return np.zeros(len(xis)), np.zeros((len(taus), len(xis))), True
    sups = cache.per_xi_sup(xis)
    ts = np.array([sups[float(x)] for x in xis])
    w = resample(ds.n, np.random.Generator(np.random.Philox(boot_seq)))
    boot = np.stack([
        bootstrap_per_xi(cache, estimate_contact_set(cache, tau, xi0), w, xis) for tau in taus
    ])
    return ts, boot, False


def monte_carlo_draws(
    spec: DgpSpec,
    xis: Sequence[float],
    taus: Sequence[float],
    n_mc: int,
    seed: int = 0,
    xi0: float = 0.001,
    threads: int = 1,
) -> MonteCarloDraws:
    """Run ``n_mc`` iterations, each with exactly one bootstrap draw shared by all ``taus``."""
    if n_mc < 1:
        raise ConfigError("n_mc must be at least 1")
    xis = tuple(float(x) for x in xis)
    taus = tuple(float(t) for t in taus)
    seqs = np.random.SeedSequence(seed).spawn(n_mc)

    def one(r):
        return _iteration(spec, xis, taus, xi0, seqs[r])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(one, range(n_mc)))
    else:
        out = [one(r) for r in range(n_mc)]
    return MonteCarloDraws(
        xis=xis, taus=taus,
        ts=np.stack([o[0] for o in out]),
        boot=np.stack([o[1] for o in out]),
        degenerate=sum(o[2] for o in out),
    )


@dataclass(frozen=True)
class WarpSpeedResult:
    rate: float
    mc_se: float
    n_mc: int
    critical_value: float
    bootstrap_draws: int


def warp_speed_mc(
    dgp: DgpSpec,
    config: TestConfig,
    nu: NuMeasure,
    n_mc: int,
    seed: int = 0,
    threads: int = 1,
) -> WarpSpeedResult:
    """Rejection rate against one pooled critical value.

    Each iteration contributes one sample statistic and one bootstrap
    statistic computed with its own contact set; the ``1 - alpha``
    quantile of the pooled bootstrap statistics is the common critical
    value.
    """
    draws = monte_carlo_draws(dgp, nu.points, (config.tau_n,), n_mc, seed, config.xi0, threads)
    rate, c = draws.rejection_rate(nu, float(config.tau_n), config.alpha, config.eta)
    return WarpSpeedResult(
        rate=rate, mc_se=math.sqrt(rate * (1 - rate) / n_mc), n_mc=n_mc,
        critical_value=c, bootstrap_draws=int(draws.boot.shape[0]),
    )


# ---------------------------------------------------------------- tables


@dataclass(frozen=True)
class TableSpec:
    table_id: str
    title: str
    rows: tuple  # (label, dgp name, n, r_n, tau)
    xis: tuple
    with_uniform: bool
    reference: dict


def _null_rows(name, n, taus):
    return tuple((_tau_label(t), name, n, None, t) for t in taus)


def _power_rows(names, tau=2.0):
    return tuple((f"{name} n={n}", name, n, r, tau) for name in names for n, r in POWER_SIZES)


def _tau_label(t: float) -> str:
    return "inf" if math.isinf(t) else f"{t:g}"


TABLES: dict[str, TableSpec] = {
    t.table_id: t
    for t in [
        TableSpec("table1", "Rejection rates under the null, multivalued D and Z",
                  _null_rows("multivalued-null", 3000, NULL_TAUS), DEFAULT_XI_GRID, True, reference.TABLE1),
        TableSpec("table2", "Rejection rates under alternatives, multivalued D and Z",
                  _power_rows([f"dgp{k}" for k in range(1, 7)]), DEFAULT_XI_GRID, True, reference.TABLE2),
        TableSpec("degenerate-null", "Rejection rates under a degenerate null",
                  _null_rows("multivalued-degenerate-null", 3000, NULL_TAUS), DEFAULT_XI_GRID, True,
                  reference.DEGENERATE_NULL),
        TableSpec("unordered-null", "Rejection rates under the null, unordered D",
                  _null_rows("unordered-null", 2000, NULL_TAUS), UNORDERED_XI_GRID, True,
                  reference.UNORDERED_NULL),
        TableSpec("unordered-power", "Rejection rates under alternatives, unordered D",
                  _power_rows([f"unordered-dgp{k}" for k in range(1, 6)]), UNORDERED_XI_GRID, True,
                  reference.UNORDERED_POWER),
        TableSpec("binary-null", "Rejection rates under the null, binary D and Z",
                  _null_rows("binary-null", 2000, (1.0, 2.0, 3.0, 4.0, math.inf)), BINARY_XI_GRID, False,
                  reference.BINARY_NULL),
        TableSpec("binary-power", "Rejection rates under alternatives, binary D and Z (tau=2 | tau=inf)",
                  _power_rows([f"binary-dgp{k}" for k in range(1, 5)]), BINARY_XI_GRID, False,
                  reference.BINARY_POWER),
    ]
}


@dataclass(frozen=True)
class Cell:
    rate: float
    mc_se: float
    n_mc: int


@dataclass(frozen=True)
class Table:
    table_id: str
    title: str
    columns: tuple[str, ...]
    rows: tuple[tuple[str, tuple[Cell, ...]], ...]
    reference: dict

    def to_dict(self) -> dict:
        return {
            "table_id": self.table_id,
            "title": self.title,
            "columns": list(self.columns),
            "rows": [
                {
                    "label": label,
                    "cells": [{"rate": c.rate, "mc_se": c.mc_se, "n_mc": c.n_mc} for c in cells],
                    "reference": list(self.reference.get(label, ())) or None,
                }
                for label, cells in self.rows
            ],
        }

    def to_text(self) -> str:
        width = max(len(lab) for lab, _ in self.rows) + 2
        head = " " * width + "".join(f"{c:>16}" for c in self.columns)
        lines = [self.title, head]
        for label, cells in self.rows:
            body = "".join(f"{c.rate:>9.3f} ({c.mc_se:.3f})" for c in cells)
            lines.append(f"{label:<{width}}{body}")
            ref = self.reference.get(label)
            if ref:
                lines.append(f"{'  published':<{width}}" + "".join(f"{v:>16.3f}" for v in ref))
        return "\n".join(lines)


def reproduce_table(
    table_id: str,
    mc_iters: int,
    n_override: int | None = None,
    seed: int = 0,
    alpha: float = 0.05,
    xi0: float = 0.001,
    threads: int = 1,
) -> Table:
    """Recompute a rejection-rate table at the requested Monte Carlo scale.

    Rows sharing a design and sample size reuse one set of iterations, so
    different tuning values are compared on identical data and draws.
    """
    if table_id not in TABLES:
        raise ConfigError(f"unknown table {table_id!r}; choose from {sorted(TABLES)}")
    if mc_iters < 1:
        raise ConfigError("mc_iters must be at least 1")
    spec = TABLES[table_id]
    xis = spec.xis
    nus = [NuMeasure.dirac(x) for x in xis]
    columns = [f"xi={x:g}" for x in xis]
    if spec.with_uniform:
        nus.append(NuMeasure.uniform(xis))
        columns.append("uniform")
    baseline = table_id == "binary-power"
    if baseline:
        columns = [f"{c} tau=2" for c in columns] + [f"{c} tau=inf" for c in columns]

    groups: dict[tuple, list] = {}
    for label, name, n, r, tau in spec.rows:
        key = (name, n_override or n, r)
        groups.setdefault(key, []).append((label, tau))

    rows = []
    for (name, n, r), members in groups.items():
        taus = sorted({t for _, t in members} | ({math.inf} if baseline else set()))
        draws = monte_carlo_draws(DgpSpec(name, n, r), xis, taus, mc_iters, seed, xi0, threads)
        for label, tau in members:
            use = [tau, math.inf] if baseline else [tau]
            cells = []
            for t in use:
                for nu in nus:
                    rate, _ = draws.rejection_rate(nu, t, alpha)
                    cells.append(Cell(rate, math.sqrt(rate * (1 - rate) / mc_iters), mc_iters))
            rows.append((label, tuple(cells)))
    return Table(table_id, spec.title, tuple(columns), tuple(rows), spec.reference)
