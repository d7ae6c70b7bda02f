"""Finite index sets for the indicator function families.

A *cell* is an instrument level (or an instrument-by-covariate level in
covariate modes). Each pair ``(g1, g2)`` of cells carries the signed
interval members ``sign * 1{Y in [a, b], D = d}`` and, in ordered modes,
the threshold members ``1{D <= c}``. The moment being tested is always
``P(h | g2) - P(h | g1) <= 0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    COVARIATE_MODES,
    ConfigError,
    DataError,
    Dataset,
    TestConfig,
    UNORDERED_MODES,
    normalize_extremes,
)


@dataclass(frozen=True)
class PairFamily:
    mode: str
    pairs: tuple[tuple[int, int], ...]
    allowed_d: tuple[tuple[tuple[int, int], ...], ...]
    include_fosd: tuple[bool, ...]
    lambda_cells: tuple[int, ...]
    n_cells: int
    n_x: int = 1

    @property
    def covariate(self) -> bool:
        return self.mode in COVARIATE_MODES

    def __len__(self) -> int:
        return len(self.pairs)

    def cell_of(self, dataset: Dataset) -> np.ndarray:
        """Cell id of every observation."""
        if self.covariate:
            return dataset.z * self.n_x + dataset.x
        return dataset.z.copy()

    def cell_label(self, dataset: Dataset, cell: int):
        if self.covariate:
            z, x = divmod(cell, self.n_x)
            return (dataset.z_labels[z], dataset.x_labels[x])
        return dataset.z_labels[cell]


def build_ordered_space(dataset: Dataset, mode: str = "ordered") -> PairFamily:
    """Consecutive instrument pairs with the extreme-treatment interval members."""
    k = dataset.n_z
    if k < 2 or np.unique(dataset.z).size < 2:
        raise DataError("ordered testing needs at least 2 observed instrument levels")
    d_min, d_max = normalize_extremes(dataset)
    pairs = tuple((j, j + 1) for j in range(k - 1))
    allowed = ((d_min, 1), (d_max, -1))
    return PairFamily(
        mode=mode,
        pairs=pairs,
        allowed_d=tuple(allowed for _ in pairs),
        include_fosd=tuple(True for _ in pairs),
        lambda_cells=tuple(range(k)),
        n_cells=k,
    )


def build_unordered_space(dataset: Dataset, c_set, mode: str = "unordered") -> PairFamily:
    """One pair per distinct ``(d, z, z')`` code triple, in first-seen order.

    The triple encodes ``P(Y in B, D=d | Z=z') <= P(Y in B, D=d | Z=z)``,
    so ``g1`` is the ``z`` cell and ``g2`` the ``z'`` cell.
    """
    triples = []
    for t in c_set:
        if len(t) != 3:
            raise ConfigError(f"c_set entries must be (d, z, z') triples, got {t!r}")
        d, z1, z2 = (int(v) for v in t)
        if not (0 <= d < dataset.n_d):
            raise ConfigError(f"unknown treatment code {d} in c_set")
        if not (0 <= z1 < dataset.n_z and 0 <= z2 < dataset.n_z):
            raise ConfigError(f"unknown instrument code in c_set triple {t!r}")
        if z1 == z2:
            raise ConfigError(f"c_set triple {t!r} compares an instrument level with itself")
        if (d, z1, z2) not in triples:
            triples.append((d, z1, z2))
    if not triples:
        raise ConfigError("c_set is empty; nothing to test")
    levels = sorted({z for _, z1, z2 in triples for z in (z1, z2)})
    return PairFamily(
        mode=mode,
        pairs=tuple((z1, z2) for _, z1, z2 in triples),
        allowed_d=tuple(((d, 1),) for d, _, _ in triples),
        include_fosd=tuple(False for _ in triples),
        lambda_cells=tuple(levels),
        n_cells=dataset.n_z,
    )


def build_covariate_space(dataset: Dataset, base_mode: str, c_set=()) -> PairFamily:
    """Replicate the base family within every covariate level.

    Cell ids are ``z * L + x``; pairs are listed covariate level by level.
    """
    if dataset.x is None:
        raise DataError("covariate mode requires a covariate column")
    if base_mode in ("ordered", "ordered-with-covariates"):
        base = build_ordered_space(dataset)
        mode = "ordered-with-covariates"
    elif base_mode in UNORDERED_MODES:
        base = build_unordered_space(dataset, c_set)
        mode = "unordered-with-covariates"
    else:
        raise ConfigError(f"no covariate version of mode {base_mode!r}")
    L = dataset.n_x
    pairs, allowed, fosd = [], [], []
    for x in range(L):
        for (g1, g2), a, f in zip(base.pairs, base.allowed_d, base.include_fosd):
            pairs.append((g1 * L + x, g2 * L + x))
            allowed.append(a)
            fosd.append(f)
    cells = tuple(z * L + x for z in base.lambda_cells for x in range(L))
    return PairFamily(
        mode=mode,
        pairs=tuple(pairs),
        allowed_d=tuple(allowed),
        include_fosd=tuple(fosd),
        lambda_cells=tuple(sorted(cells)),
        n_cells=dataset.n_z * L,
        n_x=L,
    )


def build_space(dataset: Dataset, config: TestConfig) -> PairFamily:
    """Dispatch on ``config.mode``; ``c_set`` must already be in code space."""
    mode = config.mode
    if mode == "binary":
        if np.unique(dataset.d).size != 2 or dataset.n_z != 2:
            raise DataError("binary mode needs exactly 2 treatment and 2 instrument levels")
        return build_ordered_space(dataset, mode="binary")
    if mode == "ordered":
        return build_ordered_space(dataset)
    if mode == "unordered":
        return build_unordered_space(dataset, config.c_set)
    return build_covariate_space(dataset, mode, config.c_set)


class IntervalIndex:
    """Prefix counts over the distinct sorted outcome values.

    ``count(cell, d, i, j)`` is the (weighted) number of observations in
    ``cell`` with treatment ``d`` and ``sorted_y[i] <= Y <= sorted_y[j]``.
    """

    def __init__(self, dataset: Dataset, family: PairFamily, weights=None):
        self.sorted_y = np.unique(dataset.y)
        self.m = int(self.sorted_y.size)
        self.rank = np.searchsorted(self.sorted_y, dataset.y)
        cells = family.cell_of(dataset)
        w = np.ones(dataset.n) if weights is None else np.asarray(weights, dtype=float)
        n_cells, n_d = family.n_cells, dataset.n_d
        flat = (cells * n_d + dataset.d) * self.m + self.rank
        counts = np.bincount(flat, weights=w, minlength=n_cells * n_d * self.m)
        counts = counts.reshape(n_cells, n_d, self.m)
        self.cum_counts = np.concatenate(
            [np.zeros((n_cells, n_d, 1)), np.cumsum(counts, axis=2)], axis=2
        )
        self.cell_counts = np.bincount(cells, weights=w, minlength=n_cells)
        present = np.unique(dataset.d)
        self.d_thresholds = tuple(int(c) for c in present[:-1])

    @property
    def n_intervals(self) -> int:
        return self.m * (self.m + 1) // 2

    def count(self, cell: int, d: int, i: int, j: int) -> float:
        return float(self.cum_counts[cell, d, j + 1] - self.cum_counts[cell, d, i])

    def count_leq(self, cell: int, c: int) -> float:
        """Observations in ``cell`` with treatment code ``<= c``."""
        return float(self.cum_counts[cell, : c + 1, self.m].sum())
