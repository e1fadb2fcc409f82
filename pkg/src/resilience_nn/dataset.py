"""Loading, normalization and chronological splitting of resilience data.

A dataset is a time-indexed performance series ``P`` plus ``m`` covariate
columns.  Models predict the change in performance ``dP(i) = P(i) - P(i-1)``
from the covariates observed at the same step ``i``, so every target array in
this package lives in *delta index space*: position ``d`` holds the target for
time step ``i = d + 1``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

__all__ = [
    "DatasetError",
    "MissingValue",
    "RaggedRow",
    "DuplicateCovariateName",
    "TooFewRows",
    "SegmentTooSmall",
    "RawTable",
    "NormalizedDataset",
    "SplitSpec",
    "SplitView",
    "SPLIT_PRESETS",
    "load_csv",
    "normalize",
    "split",
]


class DatasetError(ValueError):
    """Base class for input validation failures."""


class MissingValue(DatasetError):
    def __init__(self, row: int, col: int):
        super().__init__(f"missing value at row {row}, column {col}")
        self.row = row
        self.col = col


class RaggedRow(DatasetError):
    pass


class DuplicateCovariateName(DatasetError):
    pass


class TooFewRows(DatasetError):
    pass


class SegmentTooSmall(DatasetError):
    pass


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RawTable:
    time_labels: tuple[str, ...]
    performance: np.ndarray
    covariates: np.ndarray  # (n, m)
    covariate_names: tuple[str, ...]

    def __post_init__(self):
        perf = _frozen(self.performance)
        cov = _frozen(self.covariates)
        if cov.ndim == 1:
            cov = _frozen(cov[:, None])
        object.__setattr__(self, "performance", perf)
        object.__setattr__(self, "covariates", cov)
        object.__setattr__(self, "time_labels", tuple(str(t) for t in self.time_labels))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        n = perf.shape[0]
        if n < 3:
            raise TooFewRows(f"need at least 3 rows, got {n}")
        if len(self.time_labels) != n or cov.shape[0] != n:
            raise RaggedRow("time, performance and covariate columns differ in length")
        if cov.shape[1] != len(self.covariate_names):
            raise RaggedRow("covariate name count does not match covariate columns")
        if len(set(self.covariate_names)) != len(self.covariate_names):
            raise DuplicateCovariateName(f"duplicate covariate names in {self.covariate_names}")
        if not (np.all(np.isfinite(perf)) and np.all(np.isfinite(cov))):
            raise DatasetError("non-finite values in table")

    @property
    def n(self) -> int:
        return self.performance.shape[0]

    @property
    def m(self) -> int:
        return self.covariates.shape[1]


@dataclass(frozen=True)
class NormalizedDataset:
    """Max-normalized series with first-difference targets.

    ``performance_scale`` and ``covariate_scale`` hold the divisors applied to
    each column (1.0 for all-zero covariate columns) so values can be mapped
    back to raw units.
    """

    time_labels: tuple[str, ...]
    performance: np.ndarray
    covariates: np.ndarray
    delta_p: np.ndarray
    covariate_names: tuple[str, ...]
    performance_scale: float = 1.0
    covariate_scale: np.ndarray | None = None

    def __post_init__(self):
        for name in ("performance", "covariates", "delta_p"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        scale = self.covariate_scale
        scale = np.ones(self.m) if scale is None else scale
        object.__setattr__(self, "covariate_scale", _frozen(scale))
        if self.delta_p.shape[0] != self.n - 1:
            raise DatasetError("delta_p must have n - 1 entries")

    @property
    def n(self) -> int:
        return self.performance.shape[0]

    @property
    def m(self) -> int:
        return self.covariates.shape[1]

    def features(self, subset: Sequence[int] | None = None) -> np.ndarray:
        """Covariate rows aligned with ``delta_p`` (rows for steps 1..n-1)."""
        X = self.covariates[1:]
        if subset is None:
            return X
        return X[:, list(subset)]

    def index_of(self, name: str) -> int:
        return self.covariate_names.index(name)

    def raw_performance(self) -> np.ndarray:
        return self.performance * self.performance_scale

    def raw_covariates(self) -> np.ndarray:
        return self.covariates * self.covariate_scale


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float
    val_frac: float
    test_frac: float

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f <= 0 for f in fracs):
            raise ValueError(f"split fractions must be positive, got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {sum(fracs)}")

    @classmethod
    def parse(cls, name: str) -> "SplitSpec":
        if name in SPLIT_PRESETS:
            return SPLIT_PRESETS[name]
        try:
            parts = [float(p) for p in name.split("-")]
        except ValueError:
            parts = []
        if len(parts) != 3:
            raise ValueError(f"cannot parse split {name!r}; expected e.g. '60-20-20'")
        total = sum(parts)
        return cls(*(p / total for p in parts))

    @property
    def name(self) -> str:
        return "-".join(f"{round(100 * f):d}" for f in (self.train_frac, self.val_frac, self.test_frac))


SPLIT_PRESETS = {
    "60-20-20": SplitSpec(0.6, 0.2, 0.2),
    "70-15-15": SplitSpec(0.7, 0.15, 0.15),
}

ModelFamily = Literal["regression", "network"]


@dataclass(frozen=True)
class SplitView:
    """Contiguous chronological ranges over delta index space.

    ``n`` is the number of time points, ``n_delta = n - 1`` the number of
    targets, ``l`` the holdout length and ``l_m`` the test length.
    """

    train_range: range
    val_range: range
    test_range: range
    n: int
    l: int
    l_m: int
    family: str
    name: str = ""

    @property
    def n_delta(self) -> int:
        return self.n - 1

    @property
    def full_range(self) -> range:
        return range(0, self.n_delta)


def load_csv(path: str | Path) -> RawTable:
    """Read ``time, performance, X1..Xm`` with a header row."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    while rows and not any(c.strip() for c in rows[-1]):
        rows.pop()
    if not rows:
        raise TooFewRows(f"{path} is empty")
    header, body = rows[0], rows[1:]
    if len(header) < 3:
        raise RaggedRow(f"need time, performance and at least one covariate column; got {len(header)}")
    names = [h.strip() for h in header[2:]]
    if len(set(names)) != len(names):
        raise DuplicateCovariateName(f"duplicate covariate names in header: {names}")
    if len(body) < 3:
        raise TooFewRows(f"need at least 3 data rows, got {len(body)}")

    labels, values = [], []
    for r, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise RaggedRow(f"row {r} has {len(row)} fields, header has {len(header)}")
        parsed = []
        for c, cell in enumerate(row[1:], start=2):
            cell = cell.strip()
            if not cell:
                raise MissingValue(r, c)
            try:
                v = float(cell)
            except ValueError as exc:
                raise DatasetError(f"non-numeric value {cell!r} at row {r}, column {c}") from exc
            if math.isnan(v):
                raise MissingValue(r, c)
            parsed.append(v)
        labels.append(row[0].strip())
        values.append(parsed)
    arr = np.array(values, dtype=float)
    return RawTable(tuple(labels), arr[:, 0], arr[:, 1:], tuple(names))


def write_csv(path: str | Path, table: RawTable, performance_name: str = "performance") -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", performance_name, *table.covariate_names])
        for t, p, xs in zip(table.time_labels, table.performance, table.covariates):
            w.writerow([t, repr(float(p)), *(repr(float(x)) for x in xs)])


def normalize(raw: RawTable) -> NormalizedDataset:
    """Divide performance and each covariate column by its maximum.

    Columns whose maximum is not positive (e.g. all zeros) are left as they are.
    """
    cmax = raw.covariates.max(axis=0)
    scale = np.where(cmax > 0, cmax, 1.0)
    pmax = float(raw.performance.max())
    pscale = pmax if pmax > 0 else 1.0
    perf = raw.performance / pscale
    return NormalizedDataset(
        time_labels=raw.time_labels,
        performance=perf,
        covariates=raw.covariates / scale,
        delta_p=np.diff(perf),
        covariate_names=raw.covariate_names,
        performance_scale=pscale,
        covariate_scale=scale,
    )


def split(ds: NormalizedDataset, spec: SplitSpec | str, model_family: ModelFamily) -> SplitView:
    """Chronological split of the ``n - 1`` targets.

    Training takes ``floor(train_frac * (n - 1))`` targets.  Regression models
    test on the whole remainder ``l``; networks use ``ceil(l/2)`` for
    validation and ``floor(l/2)`` for testing.
    """
    if isinstance(spec, str):
        spec = SplitSpec.parse(spec)
    if model_family not in ("regression", "network"):
        raise ValueError(f"unknown model family {model_family!r}")
    N = ds.n - 1
    n_train = math.floor(spec.train_frac * N + 1e-9)
    l = N - n_train
    if n_train < 2:
        raise SegmentTooSmall(f"training segment has {n_train} points")
    if model_family == "regression":
        if l < 1:
            raise SegmentTooSmall("empty test segment")
        n_val, n_test = 0, l
        l_m = l
    else:
        n_val, n_test = math.ceil(l / 2), l // 2
        if n_val < 1 or n_test < 1:
            raise SegmentTooSmall(f"validation/test segments too small ({n_val}, {n_test})")
        l_m = n_test
    return SplitView(
        train_range=range(0, n_train),
        val_range=range(n_train, n_train + n_val),
        test_range=range(n_train + n_val, N),
        n=ds.n,
        l=l,
        l_m=l_m,
        family=model_family,
        name=spec.name,
    )
