"""Goodness-of-fit measures on reconstructed performance curves.

All measures compare predicted performance ``P_hat`` with observed ``P`` over
the predicted time steps (delta index space, ``n - 1`` points).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from .dataset import SplitView

__all__ = [
    "EmptyRange",
    "ZeroActualValue",
    "DegenerateDenominator",
    "FitReport",
    "mse_over",
    "mape",
    "adj_r2",
    "fit_report",
]


class EmptyRange(ValueError):
    pass


class ZeroActualValue(ZeroDivisionError):
    pass


class DegenerateDenominator(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class FitReport:
    pmse: float
    vmse: float | None
    mse: float
    mape_percent: float
    adj_r2: float
    n: int
    l: int
    l_m: int
    m: int
    epochs_run: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "FitReport":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def _pair(pred, actual, rng: range | None):
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if pred.shape != actual.shape:
        raise ValueError(f"prediction shape {pred.shape} != actual shape {actual.shape}")
    if rng is not None:
        if rng.start < 0 or rng.stop > pred.shape[0]:
            raise EmptyRange(f"range {rng} outside series of length {pred.shape[0]}")
        pred = pred[rng.start:rng.stop]
        actual = actual[rng.start:rng.stop]
    if pred.size == 0:
        raise EmptyRange("range is empty")
    return pred, actual


def mse_over(pred, actual, rng: range | None = None) -> float:
    """Mean squared deviation over ``rng`` (whole series if None)."""
    pred, actual = _pair(pred, actual, rng)
    d = pred - actual
    return float(np.mean(d * d))


def mape(pred, actual, rng: range | None = None) -> float:
    """Mean absolute percentage error, in percent."""
    pred, actual = _pair(pred, actual, rng)
    if np.any(actual == 0):
        raise ZeroActualValue("MAPE undefined where the actual value is zero")
    return float(100.0 * np.mean(np.abs((actual - pred) / actual)))


def adj_r2(pred, actual, m: int) -> float:
    """Adjusted coefficient of determination with ``m`` covariates.

    SSY uses the sample mean of ``actual`` as the naive predictor.
    """
    pred, actual = _pair(pred, actual, None)
    n = actual.size
    if n <= m + 1:
        raise DegenerateDenominator(f"n={n} must exceed m+1={m + 1}")
    ssy = float(np.sum((actual - actual.mean()) ** 2))
    if ssy == 0.0:
        raise DegenerateDenominator("actual series is constant (SSY = 0)")
    sse = float(np.sum((pred - actual) ** 2))
    return 1.0 - (1.0 - (ssy - sse) / ssy) * ((n - 1) / (n - m - 1))


def fit_report(p_hat, p_obs, split: SplitView, m: int, epochs_run: int | None = None) -> FitReport:
    """All five measures for a reconstructed curve.

    ``p_hat`` and ``p_obs`` cover time steps 1..n-1, aligned with the split's
    delta-index ranges.
    """
    p_hat = np.asarray(p_hat, dtype=float)
    p_obs = np.asarray(p_obs, dtype=float)
    vmse = mse_over(p_hat, p_obs, split.val_range) if len(split.val_range) else None
    return FitReport(
        pmse=mse_over(p_hat, p_obs, split.test_range),
        vmse=vmse,
        mse=mse_over(p_hat, p_obs),
        mape_percent=mape(p_hat, p_obs),
        adj_r2=adj_r2(p_hat, p_obs, m),
        n=split.n,
        l=split.l,
        l_m=split.l_m,
        m=m,
        epochs_run=epochs_run,
    )
