"""Sample moments, studentizing scales, the test statistic and the contact set.

For a member ``h`` and a pair of cells ``(g1, g2)`` write ``c_g`` for the
(weighted) count of observations in cell ``g`` with ``h = +-1`` and
``n_g`` for the cell size. Then

    phi   = sign * (c2 / n2 - c1 / n1)
    sigma^2 = T * (p2 (1 - p2) / n2 + p1 (1 - p1) / n1),   p_g = c_g / n_g

with ``T = n * prod_k (n_k / n)`` over the Lambda cells, and every term of
an empty cell set to zero.

Interval members are enumerated in compressed form. For a family
``(pair, d)`` only observations with ``D = d`` in ``g1`` or ``g2`` move the
counts, so an interval ``[a, b]`` over the observed outcome values has the
same counts as the interval spanned by the relevant values it contains,
or zero counts when it contains none. Each compressed interval carries the
number of observed-endpoint intervals it stands for.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .core import Dataset, NuMeasure
from .spaces import IntervalIndex, PairFamily


class Member(NamedTuple):
    """One element of the index set.

    ``kind`` is ``"interval"`` (``i, j`` index ``sorted_y``) or ``"fosd"``
    (``d`` is the threshold code, ``i`` and ``j`` are ``None``).
    """

    pair: int
    kind: str
    d: int
    i: int | None = None
    j: int | None = None


@dataclass(eq=False)
class Block:
    pair: int
    kind: str
    d: int
    sign: int
    g1: int
    g2: int
    obs: np.ndarray
    pos: np.ndarray
    in_g2: np.ndarray
    k: int
    lo: np.ndarray
    hi: np.ndarray
    mult: np.ndarray
    n_empty: int
    ypos: np.ndarray

    @property
    def size(self) -> int:
        return int(self.lo.size)

    def counts(self, w: np.ndarray, lo=None, hi=None) -> tuple[np.ndarray, np.ndarray]:
        lo = self.lo if lo is None else lo
        hi = self.hi if hi is None else hi
        ww = w[self.obs]
        a1 = np.bincount(self.pos[~self.in_g2], weights=ww[~self.in_g2], minlength=self.k)
        a2 = np.bincount(self.pos[self.in_g2], weights=ww[self.in_g2], minlength=self.k)
        cum1 = np.concatenate(([0.0], np.cumsum(a1)))
        cum2 = np.concatenate(([0.0], np.cumsum(a2)))
        return cum1[hi + 1] - cum1[lo], cum2[hi + 1] - cum2[lo]


def phi_from_counts(c1, n1, c2, n2, sign=1):
    """Difference of conditional frequencies, zero for empty cells."""
    c1, c2 = np.asarray(c1, dtype=float), np.asarray(c2, dtype=float)
    p1 = c1 / n1 if n1 > 0 else np.zeros_like(c1)
    p2 = c2 / n2 if n2 > 0 else np.zeros_like(c2)
    return sign * (p2 - p1)


def sigma_from_counts(c1, n1, c2, n2, t_n):
    """Studentizing scale; ``t_n`` is ``n`` times the product of cell frequencies."""
    c1, c2 = np.asarray(c1, dtype=float), np.asarray(c2, dtype=float)
    var = np.zeros(np.broadcast(c1, c2).shape)
    if n1 > 0:
        p1 = c1 / n1
        var = var + p1 * (1.0 - p1) / n1
    if n2 > 0:
        p2 = c2 / n2
        var = var + p2 * (1.0 - p2) / n2
    var = t_n * var
    # clamp rounding noise (tolerance 1e-12)
    var = np.where(var < 0.0, 0.0, var)
    return np.sqrt(var)


def compute_lambda_t(dataset: Dataset, family: PairFamily, weights=None) -> tuple[float, float]:
    """Product of empirical cell frequencies and ``T = n * Lambda``."""
    n = dataset.n
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    totals = np.bincount(family.cell_of(dataset), weights=w, minlength=family.n_cells)
    lam = float(np.prod(totals[list(family.lambda_cells)] / n))
    return lam, n * lam


def empirical_sigma_bound(dataset: Dataset, family: PairFamily) -> float:
    """Square root of ``1/4 * max_pairs (Lambda/P(g2) + Lambda/P(g1))``.

    Every sample scale obeys ``sigma_hat <= bound``. Empty cells add 0.
    """
    n = dataset.n
    totals = np.bincount(family.cell_of(dataset), minlength=family.n_cells) / n
    lam = float(np.prod(totals[list(family.lambda_cells)]))
    best = 0.0
    for g1, g2 in family.pairs:
        s = sum(lam / totals[g] for g in (g1, g2) if totals[g] > 0)
        best = max(best, s)
    return math.sqrt(best / 4.0)


def _interval_block(pair, d, sign, g1, g2, cells, dataset, index) -> Block:
    rel = np.flatnonzero((dataset.d == d) & ((cells == g1) | (cells == g2)))
    ranks = index.rank[rel]
    ypos, pos = np.unique(ranks, return_inverse=True)
    k = int(ypos.size)
    lo, hi = np.triu_indices(k)
    m = index.m
    left = np.diff(np.concatenate(([-1], ypos)))
    right = np.diff(np.concatenate((ypos, [m])))
    mult = left[lo].astype(np.int64) * right[hi]
    n_empty = m * (m + 1) // 2 - int(mult.sum())
    return Block(
        pair=pair, kind="interval", d=d, sign=sign, g1=g1, g2=g2,
        obs=rel, pos=pos.astype(np.int64), in_g2=cells[rel] == g2, k=k,
        lo=lo.astype(np.int64), hi=hi.astype(np.int64), mult=mult,
        n_empty=n_empty, ypos=ypos,
    )


def _fosd_block(pair, c, g1, g2, cells, dataset) -> Block:
    rel = np.flatnonzero((dataset.d <= c) & ((cells == g1) | (cells == g2)))
    zero = np.zeros(1, dtype=np.int64)
    return Block(
        pair=pair, kind="fosd", d=c, sign=1, g1=g1, g2=g2,
        obs=rel, pos=np.zeros(rel.size, dtype=np.int64), in_g2=cells[rel] == g2, k=1,
        lo=zero, hi=zero.copy(), mult=np.ones(1, dtype=np.int64), n_empty=0,
        ypos=np.zeros(0, dtype=np.int64),
    )


def build_blocks(dataset: Dataset, family: PairFamily, index: IntervalIndex) -> list[Block]:
    """Blocks in visiting order: pairs as declared, intervals before thresholds."""
    cells = family.cell_of(dataset)
    blocks = []
    for p, ((g1, g2), allowed, fosd) in enumerate(
        zip(family.pairs, family.allowed_d, family.include_fosd)
    ):
        for d, sign in allowed:
            blocks.append(_interval_block(p, d, sign, g1, g2, cells, dataset, index))
        if fosd:
            for c in index.d_thresholds:
                blocks.append(_fosd_block(p, c, g1, g2, cells, dataset))
    return blocks


@dataclass(eq=False)
class ContactSet:
    """Estimated contact set, stored per block as a boolean mask."""

    tau_n: float
    xi0: float
    masks: list[np.ndarray]
    lo: list[np.ndarray]
    hi: list[np.ndarray]
    phi: list[np.ndarray]
    include_empty: list[bool]
    size: int
    total: int

    @property
    def is_empty(self) -> bool:
        return self.size == 0


def _sup_over(a: np.ndarray, s: np.ndarray, xis: Sequence[float]):
    """Per-xi max of ``a / max(xi, s)`` and the attaining position."""
    out = np.full(len(xis), -np.inf)
    arg = np.full(len(xis), -1, dtype=np.int64)
    if a.size == 0:
        return out, arg
    keep = np.flatnonzero(a > 0)
    if keep.size:
        a, s = a[keep], s[keep]
    else:
        keep = None
    for t, xi in enumerate(xis):
        r = a / np.maximum(xi, s)
        j = int(np.argmax(r))
        out[t] = r[j]
        arg[t] = j if keep is None else keep[j]
    return out, arg


class StatisticCache:
    """Moments and scales of every member for one (possibly weighted) sample."""

    def __init__(self, dataset: Dataset, family: PairFamily, weights=None):
        self.dataset = dataset
        self.family = family
        self.n = dataset.n
        self.index = IntervalIndex(dataset, family, weights)
        self.weights = np.ones(self.n) if weights is None else np.asarray(weights, dtype=float)
        self.lambda_hat, self.t_n = compute_lambda_t(dataset, family, self.weights)
        self.cell_totals = self.index.cell_counts
        self.blocks = build_blocks(dataset, family, self.index)
        self.phi: list[np.ndarray] = []
        self.sigma: list[np.ndarray] = []
        for b in self.blocks:
            c1, c2 = b.counts(self.weights)
            n1, n2 = self.cell_totals[b.g1], self.cell_totals[b.g2]
            self.phi.append(phi_from_counts(c1, n1, c2, n2, b.sign))
            self.sigma.append(sigma_from_counts(c1, n1, c2, n2, self.t_n))
        self._sups: dict[float, tuple[float, Member | None]] = {}

    @property
    def total_indices(self) -> int:
        return sum(int(b.mult.sum()) + b.n_empty for b in self.blocks)

    @property
    def has_empty(self) -> bool:
        return any(b.n_empty > 0 for b in self.blocks)

    def _member(self, b: Block, j: int) -> Member:
        if b.kind == "fosd":
            return Member(b.pair, "fosd", b.d)
        return Member(b.pair, "interval", b.d, int(b.ypos[b.lo[j]]), int(b.ypos[b.hi[j]]))

    def per_xi_sup(self, xis: Sequence[float]) -> dict[float, float]:
        """``sup sqrt(T) * phi / max(xi, sigma)`` over the full index set."""
        todo = [float(x) for x in xis if float(x) not in self._sups]
        if todo:
            root_t = math.sqrt(self.t_n)
            best = np.full(len(todo), -np.inf)
            where: list[Member | None] = [None] * len(todo)
            for b, phi, sig in zip(self.blocks, self.phi, self.sigma):
                vals, args = _sup_over(root_t * phi, sig, todo)
                for t in range(len(todo)):
                    if vals[t] > best[t]:
                        best[t] = vals[t]
                        where[t] = self._member(b, int(args[t]))
                if b.n_empty:
                    for t in range(len(todo)):
                        if 0.0 > best[t]:
                            best[t] = 0.0
                            where[t] = None
            for t, xi in enumerate(todo):
                self._sups[xi] = (0.0 if math.isinf(best[t]) else float(best[t]), where[t])
        return {float(x): self._sups[float(x)][0] for x in xis}

    def sup_argmax(self, xis: Sequence[float]) -> dict[float, Member | None]:
        self.per_xi_sup(xis)
        return {float(x): self._sups[float(x)][1] for x in xis}

    def _locate(self, member: Member) -> tuple[int, int]:
        """Block position and pair sign for a member (original coordinates)."""
        for bi, b in enumerate(self.blocks):
            if b.pair == member.pair and b.kind == member.kind and b.d == member.d:
                return bi, b.sign
        raise KeyError(f"{member!r} is not in the index set")

    def member_counts(self, member: Member) -> tuple[float, float, float, float, int]:
        bi, sign = self._locate(member)
        b = self.blocks[bi]
        idx = self.index
        if member.kind == "fosd":
            c1, c2 = idx.count_leq(b.g1, member.d), idx.count_leq(b.g2, member.d)
        else:
            if not (0 <= member.i <= member.j < idx.m):
                raise KeyError(f"interval ({member.i}, {member.j}) outside 0..{idx.m - 1}")
            c1 = idx.count(b.g1, member.d, member.i, member.j)
            c2 = idx.count(b.g2, member.d, member.i, member.j)
        return c1, self.cell_totals[b.g1], c2, self.cell_totals[b.g2], sign


def phi_hat(cache: StatisticCache, member: Member) -> float:
    c1, n1, c2, n2, sign = cache.member_counts(member)
    return float(phi_from_counts(c1, n1, c2, n2, sign))


def sigma_hat(cache: StatisticCache, member: Member) -> float:
    c1, n1, c2, n2, _ = cache.member_counts(member)
    return float(sigma_from_counts(c1, n1, c2, n2, cache.t_n))


def test_statistic(cache: StatisticCache, nu: NuMeasure) -> float:
    """nu-weighted sum of the per-xi suprema."""
    return nu.integrate(cache.per_xi_sup(nu.points))


test_statistic.__test__ = False


def estimate_contact_set(cache: StatisticCache, tau_n: float, xi0: float = 0.001) -> ContactSet:
    """Members with ``sqrt(T) |phi| / max(xi0, sigma) <= tau_n``."""
    root_t = math.sqrt(cache.t_n)
    masks, los, his, phis, empties = [], [], [], [], []
    size = 0
    for b, phi, sig in zip(cache.blocks, cache.phi, cache.sigma):
        if math.isinf(tau_n):
            mask = np.ones(phi.size, dtype=bool)
        else:
            mask = root_t * np.abs(phi) / np.maximum(xi0, sig) <= tau_n
        masks.append(mask)
        los.append(b.lo[mask])
        his.append(b.hi[mask])
        phis.append(phi[mask])
        empties.append(b.n_empty > 0)
        size += int(b.mult[mask].sum()) + b.n_empty
    return ContactSet(
        tau_n=tau_n, xi0=xi0, masks=masks, lo=los, hi=his, phi=phis,
        include_empty=empties, size=size, total=cache.total_indices,
    )
