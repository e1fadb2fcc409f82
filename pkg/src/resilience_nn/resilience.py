"""Performance reconstruction from predicted changes, and synthetic curves."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .dataset import NormalizedDataset, RawTable, normalize

__all__ = [
    "LengthMismatch",
    "InvalidSpec",
    "ResilienceCurve",
    "SyntheticCurveSpec",
    "reconstruct",
    "generate_synthetic",
    "synthetic_performance",
]

Mode = Literal["observed", "onestep", "recursive"]


class LengthMismatch(ValueError):
    pass


class InvalidSpec(ValueError):
    pass


@dataclass(frozen=True)
class ResilienceCurve:
    time: np.ndarray
    performance: np.ndarray
    mode: Mode

    def __post_init__(self):
        if len(self.performance) < 2:
            raise ValueError("a resilience curve needs at least two points")

    @property
    def predicted(self) -> np.ndarray:
        """Values for time steps 1..n-1."""
        return self.performance[1:]


def reconstruct(observed_p, delta_hat, mode: Mode = "onestep") -> ResilienceCurve:
    """Rebuild performance from predicted changes.

    ``onestep``:  ``P_hat(i) = P(i-1) + dP_hat(i)`` using observed history.
    ``recursive``: ``P_hat(i) = P_hat(i-1) + dP_hat(i)`` from ``P(0)``.
    Both curves start at the observed ``P(0)``.
    """
    p = np.asarray(observed_p, dtype=float)
    dh = np.asarray(delta_hat, dtype=float)
    if dh.shape != (p.shape[0] - 1,):
        raise LengthMismatch(f"{dh.shape[0]} changes for {p.shape[0]} performance values")
    if mode == "observed":
        out = p.copy()
    elif mode == "onestep":
        out = np.concatenate([p[:1], p[:-1] + dh])
    elif mode == "recursive":
        out = p[0] + np.concatenate([[0.0], np.cumsum(dh)])
    else:
        raise ValueError(f"unknown reconstruction mode {mode!r}")
    return ResilienceCurve(np.arange(p.shape[0]), out, mode)


@dataclass(frozen=True)
class SyntheticCurveSpec:
    """Piecewise canonical curve: nominal, decline to trough, recovery, plateau.

    Covariates: column 0 tracks the shock magnitude during the decline,
    column 1 tracks recovery effort during the recovery, any further columns
    are uniform distractors.  ``covariate_coupling`` scales each column and
    fixes the covariate count.
    """

    nominal_level: float = 1.0
    t_h: int = 5
    t_d: int = 10
    t_r: int = 20
    recovered_level: float = 1.0
    trough_level: float = 0.8
    noise_std: float = 0.0
    covariate_coupling: tuple[float, ...] = (1.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "covariate_coupling", tuple(float(c) for c in self.covariate_coupling))
        if not 0 <= self.t_h < self.t_d < self.t_r:
            raise InvalidSpec(f"need 0 <= t_h < t_d < t_r, got {self.t_h}, {self.t_d}, {self.t_r}")
        for name in ("nominal_level", "recovered_level", "trough_level"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise InvalidSpec(f"{name}={v} outside (0, 1]")
        if not self.trough_level < min(self.nominal_level, self.recovered_level):
            raise InvalidSpec("trough_level must lie below nominal and recovered levels")
        if self.noise_std < 0:
            raise InvalidSpec("noise_std must be >= 0")
        if len(self.covariate_coupling) < 1:
            raise InvalidSpec("need at least one covariate")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticCurveSpec":
        d = dict(d)
        if "covariate_coupling" in d:
            d["covariate_coupling"] = tuple(d["covariate_coupling"])
        return cls(**d)


def _ease(s: np.ndarray) -> np.ndarray:
    # cosine ramp: monotone on [0, 1], flat at both ends
    return 0.5 - 0.5 * np.cos(math.pi * s)


def synthetic_performance(spec: SyntheticCurveSpec, length: int) -> np.ndarray:
    t = np.arange(length, dtype=float)
    p = np.full(length, spec.nominal_level)
    down = (t > spec.t_h) & (t <= spec.t_d)
    s = (t[down] - spec.t_h) / (spec.t_d - spec.t_h)
    p[down] = spec.nominal_level + (spec.trough_level - spec.nominal_level) * _ease(s)
    up = (t > spec.t_d) & (t <= spec.t_r)
    s = (t[up] - spec.t_d) / (spec.t_r - spec.t_d)
    p[up] = spec.trough_level + (spec.recovered_level - spec.trough_level) * _ease(s)
    p[t > spec.t_r] = spec.recovered_level
    return p


def generate_synthetic(spec: SyntheticCurveSpec, length: int) -> NormalizedDataset:
    """Noise-free curve plus phase-coupled covariates, max-normalized."""
    if length <= spec.t_r:
        raise InvalidSpec(f"length {length} must exceed t_r={spec.t_r}")
    rng = np.random.default_rng(spec.seed)
    p = synthetic_performance(spec, length)
    dp = np.concatenate([[0.0], np.diff(p)])
    shock = np.where(dp < 0, -dp, 0.0)
    effort = np.where(dp > 0, dp, 0.0)
    cols = []
    for j, coupling in enumerate(spec.covariate_coupling):
        if j == 0:
            base = shock
        elif j == 1:
            base = effort
        else:
            base = rng.uniform(0.0, 1.0, length) * float(np.max(np.abs(dp)) or 1.0)
        cols.append(coupling * base)
    X = np.column_stack(cols)
    if spec.noise_std > 0:
        X = X + rng.normal(0.0, spec.noise_std, X.shape)
        p = p + rng.normal(0.0, spec.noise_std, length)
    names = tuple(f"X{j + 1}" for j in range(X.shape[1]))
    raw = RawTable(tuple(str(i) for i in range(length)), p, X, names)
    return normalize(raw)


def synthetic_table(spec: SyntheticCurveSpec, length: int) -> RawTable:
    """Generated dataset as a raw table (already normalized values)."""
    ds = generate_synthetic(spec, length)
    return RawTable(ds.time_labels, ds.performance, ds.covariates, ds.covariate_names)
