"""Multiple linear regression with pairwise interactions (MLRI)."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np
import scipy.linalg

from .dataset import NormalizedDataset

__all__ = [
    "Underdetermined",
    "RankDeficientWarning",
    "DimensionMismatch",
    "RegressionModel",
    "build_design_matrix",
    "fit",
    "predict_delta",
]


class Underdetermined(ValueError):
    def __init__(self, rows: int, cols: int):
        super().__init__(f"{rows} training rows for {cols} regression columns")
        self.rows = rows
        self.cols = cols


class RankDeficientWarning(UserWarning):
    pass


class DimensionMismatch(ValueError):
    pass


def n_terms(m: int) -> int:
    return 1 + m + m * (m - 1) // 2


def build_design_matrix(X) -> np.ndarray:
    """Columns: intercept, X_1..X_m, then X_j * X_l for j < l (lexicographic)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, m = X.shape
    if m < 1:
        raise ValueError("need at least one covariate")
    cols = [np.ones(n)] + [X[:, j] for j in range(m)]
    cols += [X[:, j] * X[:, l] for j, l in combinations(range(m), 2)]
    return np.column_stack(cols)


@dataclass(frozen=True)
class RegressionModel:
    intercept: float
    main_coeffs: np.ndarray
    interaction_coeffs: np.ndarray
    subset: tuple[int, ...]
    rank: int | None = None

    @property
    def m(self) -> int:
        return len(self.main_coeffs)

    @property
    def coefficients(self) -> np.ndarray:
        """All coefficients in design-matrix column order."""
        return np.concatenate([[self.intercept], self.main_coeffs, self.interaction_coeffs])

    def interaction_pairs(self) -> list[tuple[int, int]]:
        return list(combinations(self.subset, 2))

    def to_dict(self, names: Sequence[str] | None = None) -> dict:
        label = (lambda j: names[j]) if names is not None else (lambda j: j)
        return {
            "subset": list(self.subset),
            "intercept": self.intercept,
            "main": {str(label(j)): float(b) for j, b in zip(self.subset, self.main_coeffs)},
            "interactions": {
                f"{label(a)}*{label(b)}": float(c)
                for (a, b), c in zip(self.interaction_pairs(), self.interaction_coeffs)
            },
            "rank": self.rank,
        }


def _from_coefficients(beta: np.ndarray, subset: Sequence[int], rank: int | None = None) -> RegressionModel:
    m = len(subset)
    return RegressionModel(
        intercept=float(beta[0]),
        main_coeffs=np.array(beta[1:1 + m]),
        interaction_coeffs=np.array(beta[1 + m:]),
        subset=tuple(int(j) for j in subset),
        rank=rank,
    )


def fit_arrays(X, y, subset: Sequence[int] | None = None) -> RegressionModel:
    """Least-squares fit of ``y`` on the interaction design of ``X``.

    Solved with a pivoted QR (LAPACK ``gelsy``), which returns the minimum-norm
    solution when the design is rank deficient.
    """
    A = build_design_matrix(X)
    y = np.asarray(y, dtype=float)
    rows, cols = A.shape
    if rows < cols:
        raise Underdetermined(rows, cols)
    beta, _, rank, _ = scipy.linalg.lstsq(A, y, lapack_driver="gelsy")
    if rank < cols:
        warnings.warn(
            f"design matrix rank {rank} < {cols} columns; using minimum-norm coefficients",
            RankDeficientWarning,
            stacklevel=2,
        )
    if subset is None:
        subset = range(np.atleast_2d(X).shape[1])
    return _from_coefficients(beta, subset, int(rank))


def fit(ds: NormalizedDataset, subset: Sequence[int], train_range: range) -> RegressionModel:
    """Fit the change in performance on the training rows of ``ds``."""
    idx = list(train_range)
    X = ds.features(subset)[idx]
    return fit_arrays(X, ds.delta_p[idx], subset)


def predict_delta(model: RegressionModel, X_row) -> float | np.ndarray:
    """Evaluate the regression for one covariate row or a matrix of rows."""
    X_row = np.asarray(X_row, dtype=float)
    single = X_row.ndim == 1
    X = np.atleast_2d(X_row)
    if X.shape[1] != model.m:
        raise DimensionMismatch(f"model uses {model.m} covariates, row has {X.shape[1]}")
    out = build_design_matrix(X) @ model.coefficients
    return float(out[0]) if single else out
