"""Correlation-based feature selection (CFS).

Subsets are scored with the merit heuristic

    M = k * r_co / sqrt(k + k (k - 1) r_cc)

where ``r_co`` is the mean covariate-target correlation and ``r_cc`` the mean
pairwise covariate correlation.  Forward search grows one covariate at a time
and stops once the best extension loses more than ``epsilon`` merit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .dataset import NormalizedDataset

__all__ = [
    "LengthMismatch",
    "DuplicateIndex",
    "IndexOutOfRange",
    "MeritScore",
    "SubsetRanking",
    "pearson",
    "merit",
    "merit_from_correlations",
    "forward_select",
]


class LengthMismatch(ValueError):
    pass


class DuplicateIndex(ValueError):
    pass


class IndexOutOfRange(IndexError):
    pass


@dataclass(frozen=True)
class MeritScore:
    subset: tuple[int, ...]
    k: int
    r_co_bar: float
    r_cc_bar: float
    merit: float

    def to_dict(self, names: Sequence[str] | None = None) -> dict:
        d = {
            "subset": list(self.subset),
            "k": self.k,
            "r_co_bar": self.r_co_bar,
            "r_cc_bar": self.r_cc_bar,
            "merit": self.merit,
        }
        if names is not None:
            d["names"] = [names[j] for j in self.subset]
        return d


@dataclass(frozen=True)
class SubsetRanking:
    """Prefix chain of the greedy search.

    ``rejected`` is the best extension evaluated at the step where the merit
    drop exceeded ``epsilon``; it is reported but not part of the chain.
    """

    chain: tuple[MeritScore, ...]
    stop_reason: Literal["merit_drop", "max_covariates"]
    rejected: MeritScore | None = None
    epsilon: float = 0.01

    @property
    def best(self) -> MeritScore:
        return max(self.chain, key=lambda s: s.merit)

    @property
    def subsets(self) -> list[tuple[int, ...]]:
        return [s.subset for s in self.chain]

    def to_dict(self, names: Sequence[str] | None = None) -> dict:
        return {
            "epsilon": self.epsilon,
            "stop_reason": self.stop_reason,
            "chain": [s.to_dict(names) for s in self.chain],
            "rejected": None if self.rejected is None else self.rejected.to_dict(names),
        }


def pearson(x, y) -> float:
    """Product-moment correlation; 0.0 if either input is constant."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"shapes {x.shape} and {y.shape} differ")
    if x.shape[0] < 2:
        raise LengthMismatch("need at least two observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return 0.0
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def merit_from_correlations(k: int, r_co_bar: float, r_cc_bar: float) -> float:
    return k * r_co_bar / math.sqrt(k + k * (k - 1) * r_cc_bar)


class _CorrelationCache:
    """Pairwise correlations against the target and between covariates."""

    def __init__(self, X: np.ndarray, y: np.ndarray, absolute: bool = True):
        m = X.shape[1]
        fn = abs if absolute else (lambda v: v)
        self.r_co = np.array([fn(pearson(X[:, j], y)) for j in range(m)])
        self.r_cc = np.eye(m)
        for j in range(m):
            for l in range(j + 1, m):
                self.r_cc[j, l] = self.r_cc[l, j] = fn(pearson(X[:, j], X[:, l]))

    def score(self, subset: Sequence[int]) -> MeritScore:
        subset = tuple(int(j) for j in subset)
        k = len(subset)
        r_co_bar = float(np.mean(self.r_co[list(subset)]))
        if k > 1:
            pairs = [self.r_cc[a, b] for i, a in enumerate(subset) for b in subset[i + 1:]]
            r_cc_bar = float(np.mean(pairs))
        else:
            r_cc_bar = 0.0
        return MeritScore(subset, k, r_co_bar, r_cc_bar, merit_from_correlations(k, r_co_bar, r_cc_bar))


def _check_subset(subset: Sequence[int], m: int) -> None:
    if len(subset) == 0:
        raise ValueError("subset must be nonempty")
    if len(set(subset)) != len(subset):
        raise DuplicateIndex(f"duplicate covariate index in {list(subset)}")
    for j in subset:
        if not 0 <= j < m:
            raise IndexOutOfRange(f"covariate index {j} outside [0, {m})")


def merit(ds: NormalizedDataset, subset: Sequence[int], absolute: bool = True) -> MeritScore:
    """Merit of ``subset`` (0-based covariate indices) against ``ds.delta_p``."""
    _check_subset(subset, ds.m)
    X = ds.features(subset)
    cache = _CorrelationCache(X, ds.delta_p, absolute)
    s = cache.score(range(len(subset)))
    return MeritScore(tuple(int(j) for j in subset), s.k, s.r_co_bar, s.r_cc_bar, s.merit)


def forward_select(
    ds: NormalizedDataset,
    max_k: int | None = None,
    epsilon: float = 0.01,
    absolute: bool = True,
) -> SubsetRanking:
    """Greedy forward search over covariates.

    Each step appends the covariate whose extended subset scores highest
    (ties go to the lower index).  The extension is kept unless its merit
    falls more than ``epsilon`` below the current subset's merit.
    """
    m = ds.m
    max_k = m if max_k is None else max_k
    if not 1 <= max_k <= m:
        raise ValueError(f"max_k must lie in [1, {m}], got {max_k}")
    cache = _CorrelationCache(ds.features(), ds.delta_p, absolute)

    def best_extension(current: tuple[int, ...]) -> MeritScore:
        best = None
        for j in range(m):
            if j in current:
                continue
            s = cache.score(current + (j,))
            if best is None or s.merit > best.merit:
                best = s
        return best

    chain = [best_extension(())]
    while chain[-1].k < max_k:
        cand = best_extension(chain[-1].subset)
        if cand.merit < chain[-1].merit - epsilon:
            return SubsetRanking(tuple(chain), "merit_drop", cand, epsilon)
        chain.append(cand)
    return SubsetRanking(tuple(chain), "max_covariates", None, epsilon)
