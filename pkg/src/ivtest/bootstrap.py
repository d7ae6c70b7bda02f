"""Resampling, recentered bootstrap statistics, critical values and the test."""
from __future__ import annotations

import logging
import math
from dataclasses import replace
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from .core import ConfigError, Dataset, NuMeasure, TestConfig, TestResult
from .spaces import PairFamily, build_space
from .statistic import (
    ContactSet,
    StatisticCache,
    _sup_over,
    empirical_sigma_bound,
    estimate_contact_set,
    phi_from_counts,
    sigma_from_counts,
)

log = logging.getLogger(__name__)


def replication_rngs(seed: int, count: int) -> list[np.random.Generator]:
    """One independent counter-based stream per replication index."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


def resample(n: int, rng: np.random.Generator) -> np.ndarray:
    """Multinomial(n; 1/n, ..., 1/n) multiplicities from n draws with replacement."""
    if n < 1:
        raise ValueError("n must be positive")
    return np.bincount(rng.integers(0, n, size=n), minlength=n)


def bootstrap_per_xi(
    cache: StatisticCache,
    contact: ContactSet,
    weights: np.ndarray,
    xis: Sequence[float],
) -> np.ndarray:
    """Per-xi sup of ``sqrt(T_B) (phi_B - phi) / max(xi, sigma_B)`` over the contact set.

    The supremum over an empty contact set is 0.
    """
    w = np.asarray(weights, dtype=float)
    n = cache.n
    totals = np.bincount(cache.family.cell_of(cache.dataset), weights=w, minlength=cache.family.n_cells)
    t_b = n * float(np.prod(totals[list(cache.family.lambda_cells)] / n))
    root_t = math.sqrt(t_b)
    best = np.full(len(xis), -np.inf)
    for b, lo, hi, phi, empty in zip(cache.blocks, contact.lo, contact.hi, contact.phi, contact.include_empty):
        if lo.size:
            c1, c2 = b.counts(w, lo, hi)
            n1, n2 = totals[b.g1], totals[b.g2]
            phi_b = phi_from_counts(c1, n1, c2, n2, b.sign)
            sig_b = sigma_from_counts(c1, n1, c2, n2, t_b)
            vals, _ = _sup_over(root_t * (phi_b - phi), sig_b, xis)
            best = np.maximum(best, vals)
        if empty:
            best = np.maximum(best, 0.0)
    best[np.isinf(best)] = 0.0
    return best


def bootstrap_statistic(cache: StatisticCache, contact: ContactSet, weights, nu: NuMeasure) -> float:
    return nu.integrate(bootstrap_per_xi(cache, contact, weights, nu.points))


def critical_value(bootstrap_stats, alpha: float, eta: float = 0.0) -> float:
    """Smallest c with empirical CDF(c) >= 1 - alpha, floored at ``eta``."""
    stats = np.sort(np.asarray(bootstrap_stats, dtype=float))
    if stats.size == 0:
        raise ValueError("no bootstrap statistics")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    # guard against (1 - alpha) * B landing just above an integer
    k = math.ceil(round((1.0 - alpha) * stats.size, 9))
    k = min(max(k, 1), stats.size)
    return max(float(stats[k - 1]), float(eta))


def p_value(ts: float, bootstrap_stats) -> float:
    """Share of bootstrap statistics at least as large as ``ts``."""
    stats = np.asarray(bootstrap_stats, dtype=float)
    return float(np.mean(stats >= ts))


def bootstrap_distribution(
    cache: StatisticCache,
    contacts: Sequence[ContactSet],
    xis: Sequence[float],
    n_bootstrap: int,
    seed: int,
    threads: int = 1,
) -> np.ndarray:
    """Per-xi bootstrap suprema, shape ``(len(contacts), n_bootstrap, len(xis))``.

    Every contact set sees the same draws, so results for different
    contact sets are directly comparable.
    """
    rngs = replication_rngs(seed, n_bootstrap)

    def one(b: int) -> np.ndarray:
        w = resample(cache.n, rngs[b])
        return np.stack([bootstrap_per_xi(cache, c, w, xis) for c in contacts])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            draws = list(pool.map(one, range(n_bootstrap)))
    else:
        draws = [one(b) for b in range(n_bootstrap)]
    return np.stack(draws, axis=1)


def resolve_c_set(dataset: Dataset, c_set) -> tuple:
    """Map label triples to code triples; integer triples already in range pass through."""
    out = []
    for t in c_set:
        if len(t) != 3:
            raise ConfigError(f"c_set entries must be (d, z, z') triples, got {t!r}")
        d, z1, z2 = t
        out.append((dataset.d_code(d), dataset.z_code(z1), dataset.z_code(z2)))
    return tuple(out)


def prepare(dataset: Dataset, config: TestConfig) -> tuple[PairFamily, StatisticCache]:
    if config.c_set:
        config = _with_codes(dataset, config)
    family = build_space(dataset, config)
    return family, StatisticCache(dataset, family)


def _with_codes(dataset: Dataset, config: TestConfig) -> TestConfig:
    return replace(config, c_set=resolve_c_set(dataset, config.c_set))


def run_test(dataset: Dataset, config: TestConfig, nu: NuMeasure, threads: int = 1) -> TestResult:
    """Full bootstrap test: statistic, contact set, replications, decision."""
    family, cache = prepare(dataset, config)
    diagnostics = []
    if cache.lambda_hat == 0.0:
        diagnostics.append("an instrument cell is empty: Lambda_hat = 0, statistic is 0")
    bound = empirical_sigma_bound(dataset, family)
    if not nu.covers(bound):
        diagnostics.append(f"no trimming value reaches the sigma bound {bound:.6g}")
    for msg in diagnostics:
        log.info(msg)

    per_xi = cache.per_xi_sup(nu.points)
    ts = nu.integrate(per_xi)
    contact = estimate_contact_set(cache, config.tau_n, config.xi0)
    draws = bootstrap_distribution(cache, [contact], nu.points, config.n_bootstrap, config.seed, threads)[0]
    stats = nu.integrate_columns(draws)
    c_hat = critical_value(stats, config.alpha, config.eta)
    argmax = cache.sup_argmax(nu.points)
    return TestResult(
        ts=float(ts),
        critical_value=c_hat,
        p_value=p_value(ts, stats),
        reject=bool(ts > c_hat),
        per_xi_sup=per_xi,
        contact_set_size=contact.size,
        total_indices=contact.total,
        bootstrap_stats=stats,
        lambda_hat=cache.lambda_hat,
        effective_t_n=cache.t_n,
        sup_argmax={k: (None if v is None else v._asdict()) for k, v in argmax.items()},
        diagnostics=tuple(diagnostics),
    )
