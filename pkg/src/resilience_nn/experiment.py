"""Hyperparameter sweep, aggregation, model selection and report bundles."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from functools import partial
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import mlri, neuralnet
from .cfs import SubsetRanking
from .dataset import NormalizedDataset, SplitView, split
from .metrics import DegenerateDenominator, FitReport, ZeroActualValue, fit_report
from .resilience import reconstruct

log = logging.getLogger(__name__)

__all__ = [
    "MODEL_KINDS",
    "SweepPlan",
    "RunCoord",
    "RunRecord",
    "AggregateRow",
    "SelectionRule",
    "Selection",
    "MissingSplitPair",
    "derive_seed",
    "plan_coordinates",
    "run_one",
    "run_records",
    "aggregate",
    "run_sweep",
    "select_best",
    "fit_curve",
    "emit_report",
]

MODEL_KINDS = ("MLRI", "ANN", "RNN", "LSTM")
METRIC_FIELDS = ("pmse", "vmse", "mse", "mape_percent", "adj_r2")


class MissingSplitPair(ValueError):
    pass


@dataclass(frozen=True)
class SweepPlan:
    subsets: tuple[tuple[int, ...], ...]
    kinds: tuple[str, ...] = MODEL_KINDS
    neurons: tuple[int, ...] = tuple(range(1, 16))
    learning_rates: tuple[float, ...] = (1e-2, 1e-3, 1e-4)
    splits: tuple[str, ...] = ("60-20-20", "70-15-15")
    repetitions: int = 50
    base_seed: int = 0
    max_epochs: int = 1000
    early_stop_min_delta: float = 1e-4
    early_stop_patience: int = 10
    early_stop_monitor: str = "train"
    lstm_weight_mode: str = "standard"
    reconstruction: str = "onestep"

    def __post_init__(self):
        object.__setattr__(self, "subsets", tuple(tuple(int(j) for j in s) for s in self.subsets))
        object.__setattr__(self, "kinds", tuple(k.upper() for k in self.kinds))
        for name in ("neurons", "learning_rates", "splits"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        for name in ("subsets", "kinds", "splits"):
            if not getattr(self, name):
                raise ValueError(f"SweepPlan.{name} is empty")
        if any(self.kind_is_network(k) for k in self.kinds) and not (self.neurons and self.learning_rates):
            raise ValueError("network kinds need nonempty neuron and learning-rate grids")
        bad = set(self.kinds) - set(MODEL_KINDS)
        if bad:
            raise ValueError(f"unknown model kinds {sorted(bad)}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")

    @staticmethod
    def kind_is_network(kind: str) -> bool:
        return kind != "MLRI"

    @classmethod
    def from_mapping(cls, d: Mapping, **defaults) -> "SweepPlan":
        """Build from a config mapping; keys not in the plan are ignored."""
        names = {f.name for f in fields(cls)}
        merged = {**defaults, **{k.replace("-", "_"): v for k, v in d.items()}}
        return cls(**{k: v for k, v in merged.items() if k in names})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["subsets"] = [list(s) for s in self.subsets]
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


@dataclass(frozen=True, order=True)
class RunCoord:
    subset: tuple[int, ...]
    kind_order: int
    neurons: int
    learning_rate: float
    split: str
    repetition: int

    @property
    def kind(self) -> str:
        return MODEL_KINDS[self.kind_order]

    def group_key(self) -> tuple:
        return (self.subset, self.kind_order, self.neurons, self.learning_rate, self.split)

    def to_dict(self) -> dict:
        return {
            "subset": list(self.subset),
            "kind": self.kind,
            "neurons": self.neurons,
            "learning_rate": self.learning_rate,
            "split": self.split,
            "repetition": self.repetition,
        }


def derive_seed(base_seed: int, coord: RunCoord) -> int:
    """Seed that depends only on the base seed and the run's coordinates."""
    key = json.dumps([int(base_seed), list(coord.subset), coord.kind, coord.neurons,
                      repr(float(coord.learning_rate)), coord.split, coord.repetition])
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little") >> 1


@dataclass(frozen=True)
class RunRecord:
    coord: RunCoord
    seed: int
    report: FitReport | None
    failed: bool = False
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            **self.coord.to_dict(),
            "seed": self.seed,
            "failed": self.failed,
            "error": self.error,
            "report": None if self.report is None else self.report.to_dict(),
        }


@dataclass(frozen=True)
class AggregateRow:
    subset: tuple[int, ...]
    kind: str
    neurons: int
    learning_rate: float
    split: str
    runs: int
    failures: int
    pmse: float
    vmse: float | None
    mse: float
    mape_percent: float
    adj_r2: float
    epochs: float | None
    n: int
    l: int
    l_m: int
    m: int

    @property
    def valid(self) -> bool:
        return self.runs > self.failures

    def to_dict(self) -> dict:
        d = asdict(self)
        d["subset"] = list(self.subset)
        d["valid"] = self.valid
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "AggregateRow":
        names = {f.name for f in fields(cls)}
        kw = {k: v for k, v in d.items() if k in names}
        kw["subset"] = tuple(kw["subset"])
        return cls(**kw)


def plan_coordinates(plan: SweepPlan) -> list[RunCoord]:
    """Every run in the plan, sorted; MLRI gets one deterministic run per (subset, split)."""
    coords = []
    for subset in plan.subsets:
        for kind in plan.kinds:
            ko = MODEL_KINDS.index(kind)
            for sp in plan.splits:
                if kind == "MLRI":
                    coords.append(RunCoord(subset, ko, 0, 0.0, sp, 0))
                    continue
                for nh in plan.neurons:
                    for lr in plan.learning_rates:
                        for rep in range(plan.repetitions):
                            coords.append(RunCoord(subset, ko, int(nh), float(lr), sp, rep))
    return sorted(coords)


def _network_config(plan: SweepPlan, coord: RunCoord, seed: int) -> neuralnet.NetworkConfig:
    return neuralnet.NetworkConfig(
        kind=coord.kind,
        input_dim=len(coord.subset),
        hidden_units=coord.neurons,
        learning_rate=coord.learning_rate,
        max_epochs=plan.max_epochs,
        early_stop_min_delta=plan.early_stop_min_delta,
        early_stop_patience=plan.early_stop_patience,
        early_stop_monitor=plan.early_stop_monitor,
        seed=seed,
        lstm_weight_mode=plan.lstm_weight_mode,
    )


def fit_curve(ds: NormalizedDataset, plan: SweepPlan, coord: RunCoord) -> tuple[np.ndarray, SplitView, int | None]:
    """Train/fit one coordinate; returns (reconstructed P over 0..n-1, split, epochs)."""
    seed = derive_seed(plan.base_seed, coord)
    if coord.kind == "MLRI":
        sv = split(ds, coord.split, "regression")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", mlri.RankDeficientWarning)
            model = mlri.fit(ds, coord.subset, sv.train_range)
        delta_hat = mlri.predict_delta(model, ds.features(coord.subset))
        epochs = None
    else:
        sv = split(ds, coord.split, "network")
        trained = neuralnet.train(_network_config(plan, coord, seed), ds, sv, coord.subset)
        delta_hat = neuralnet.predict(trained, ds)
        epochs = trained.epochs_run
    curve = reconstruct(ds.performance, delta_hat, plan.reconstruction)
    return curve.performance, sv, epochs


def run_one(ds: NormalizedDataset, plan: SweepPlan, coord: RunCoord) -> RunRecord:
    seed = derive_seed(plan.base_seed, coord)
    try:
        p_hat, sv, epochs = fit_curve(ds, plan, coord)
        if not np.all(np.isfinite(p_hat)):
            raise neuralnet.NonFiniteLoss("non-finite predictions")
        report = fit_report(p_hat[1:], ds.performance[1:], sv, len(coord.subset), epochs)
    except (neuralnet.NonFiniteLoss, mlri.Underdetermined, DegenerateDenominator, ZeroActualValue) as exc:
        return RunRecord(coord, seed, None, True, f"{type(exc).__name__}: {exc}")
    return RunRecord(coord, seed, report)


def run_records(ds: NormalizedDataset, plan: SweepPlan, workers: int = 1) -> list[RunRecord]:
    """Execute every run; output order is the sorted coordinate order regardless of workers."""
    coords = plan_coordinates(plan)
    job = partial(run_one, ds, plan)
    if workers <= 1 or len(coords) <= 1:
        return [job(c) for c in coords]
    chunk = max(1, len(coords) // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, coords, chunksize=chunk))


def _mean(values: list) -> float | None:
    vals = [v for v in values if v is not None]
    return math.fsum(vals) / len(vals) if vals else None


def aggregate(records: Iterable[RunRecord]) -> list[AggregateRow]:
    groups: dict[tuple, list[RunRecord]] = {}
    for r in records:
        groups.setdefault(r.coord.group_key(), []).append(r)
    rows = []
    for key in sorted(groups):
        recs = groups[key]
        ok = [r.report for r in recs if not r.failed]
        c = recs[0].coord
        nan = math.nan

        def col(name):
            return _mean([getattr(rep, name) for rep in ok]) if ok else nan

        ref = ok[0] if ok else None
        rows.append(AggregateRow(
            subset=c.subset, kind=c.kind, neurons=c.neurons, learning_rate=c.learning_rate, split=c.split,
            runs=len(recs), failures=len(recs) - len(ok),
            pmse=col("pmse"), vmse=col("vmse"), mse=col("mse"), mape_percent=col("mape_percent"),
            adj_r2=col("adj_r2"), epochs=col("epochs_run") if c.kind != "MLRI" else None,
            n=ref.n if ref else 0, l=ref.l if ref else 0, l_m=ref.l_m if ref else 0, m=len(c.subset),
        ))
    return rows


def run_sweep(ds: NormalizedDataset, plan: SweepPlan, workers: int = 1) -> list[AggregateRow]:
    return aggregate(run_records(ds, plan, workers))


@dataclass(frozen=True)
class SelectionRule:
    gap_weight: float = 1.0
    learning_rate: float | None = None  # restrict to one learning rate


@dataclass(frozen=True)
class Selection:
    kind: str
    subset: tuple[int, ...]
    neurons: int
    learning_rate: float
    score: float
    rows: dict[str, AggregateRow]

    @property
    def mean_pmse(self) -> float:
        return float(np.mean([r.pmse for r in self.rows.values()]))

    def row(self, split_name: str | None = None) -> AggregateRow:
        if split_name is None:
            split_name = sorted(self.rows)[0]
        return self.rows[split_name]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "subset": list(self.subset),
            "neurons": self.neurons,
            "learning_rate": self.learning_rate,
            "score": self.score,
            "rows": {k: v.to_dict() for k, v in sorted(self.rows.items())},
        }


def selection_score(adj_r2_by_split: Sequence[float], gap_weight: float = 1.0) -> float:
    """Mean adjusted R^2 across splits minus the spread between them."""
    vals = list(adj_r2_by_split)
    return float(np.mean(vals)) - gap_weight * (max(vals) - min(vals))


def select_best(rows: Sequence[AggregateRow], rule: SelectionRule = SelectionRule()) -> dict[str, Selection]:
    """Pick, per model kind, the configuration most consistent across splits.

    Ties on score go to the smaller mean PMSE, then fewer neurons.
    """
    splits = sorted({r.split for r in rows})
    out: dict[str, Selection] = {}
    for kind in MODEL_KINDS:
        cands: dict[tuple, dict[str, AggregateRow]] = {}
        for r in rows:
            if r.kind != kind:
                continue
            if rule.learning_rate is not None and kind != "MLRI" and r.learning_rate != rule.learning_rate:
                continue
            cands.setdefault((r.subset, r.neurons, r.learning_rate), {})[r.split] = r
        best_key, best = None, None
        for key in sorted(cands):
            by_split = cands[key]
            missing = [s for s in splits if s not in by_split]
            if missing:
                raise MissingSplitPair(f"{kind} {key} has no rows for splits {missing}")
            if not all(r.valid and math.isfinite(r.adj_r2) for r in by_split.values()):
                continue
            sel = Selection(kind, key[0], key[1], key[2],
                            selection_score([by_split[s].adj_r2 for s in splits], rule.gap_weight), by_split)
            rank = (-sel.score, sel.mean_pmse, sel.neurons)
            if best is None or rank < best_key:
                best_key, best = rank, sel
        if best is not None:
            out[kind] = best
    return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _subset_label(subset: Sequence[int], names: Sequence[str]) -> str:
    return "+".join(names[j] for j in subset)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n", encoding="utf-8")


AGGREGATE_COLUMNS = ("model", "subset", "neurons", "learning_rate", "split", "pmse", "vmse", "mse",
                     "mape_percent", "adj_r2", "epochs", "runs", "failures", "n", "l", "l_m", "m",
                     "highlight")


def write_aggregate_csv(path: Path, rows: Sequence[AggregateRow], names: Sequence[str],
                        highlight_lr: float = 1e-2) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGGREGATE_COLUMNS)
        for r in rows:
            hl = r.kind == "MLRI" or r.learning_rate == highlight_lr
            w.writerow([r.kind, _subset_label(r.subset, names), r.neurons if r.kind != "MLRI" else "",
                        _fmt(r.learning_rate) if r.kind != "MLRI" else "", r.split,
                        _fmt(r.pmse), _fmt(r.vmse), _fmt(r.mse), _fmt(r.mape_percent), _fmt(r.adj_r2),
                        _fmt(r.epochs), r.runs, r.failures, r.n, r.l, r.l_m, r.m, int(hl)])


def emit_report(
    rows: Sequence[AggregateRow],
    chosen: Mapping[str, Selection],
    ds: NormalizedDataset,
    out_dir: str | Path,
    plan: SweepPlan | None = None,
    ranking: SubsetRanking | None = None,
    figures: bool = True,
) -> list[Path]:
    """Write the report bundle and return the paths written.

    Files: ``aggregate.csv`` (per-configuration means), ``report.json``
    (chosen models and provenance), ``curve_<KIND>.csv`` per chosen model
    (time, observed and fitted performance for the first split, using the
    repetition-0 seed), ``feature_chain.json`` when a ranking is given, and
    PNG figures when ``figures`` is set.
    """
    if not rows:
        raise ValueError("no aggregate rows to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = ds.covariate_names
    written = []

    agg_path = out / "aggregate.csv"
    write_aggregate_csv(agg_path, rows, names)
    written.append(agg_path)

    report = {
        "dataset": {"n": ds.n, "m": ds.m, "covariate_names": list(names),
                    "performance_scale": ds.performance_scale},
        "plan": plan.to_dict() if plan is not None else None,
        "selection_rule": asdict(SelectionRule()),
        "chosen": {k: dict(v.to_dict(), subset_names=[names[j] for j in v.subset])
                   for k, v in sorted(chosen.items())},
    }
    if not chosen:
        report["note"] = "no configuration selected"

    curves: dict[str, np.ndarray] = {}
    curve_split = None
    if chosen and plan is not None:
        curve_split = plan.splits[0]
        curve_meta = {}
        for kind, sel in sorted(chosen.items(), key=lambda kv: MODEL_KINDS.index(kv[0])):
            coord = RunCoord(sel.subset, MODEL_KINDS.index(kind), sel.neurons if kind != "MLRI" else 0,
                             sel.learning_rate if kind != "MLRI" else 0.0, curve_split, 0)
            try:
                p_hat, sv, epochs = fit_curve(ds, plan, coord)
            except neuralnet.NonFiniteLoss as exc:
                curve_meta[kind] = {"error": str(exc)}
                continue
            curves[kind] = p_hat
            curve_meta[kind] = {"seed": derive_seed(plan.base_seed, coord), "split": curve_split,
                                "epochs_run": epochs}
            path = out / f"curve_{kind}.csv"
            segment = np.full(ds.n, "", dtype=object)
            segment[0] = "initial"
            for label, rng in (("train", sv.train_range), ("validation", sv.val_range), ("test", sv.test_range)):
                for d in rng:
                    segment[d + 1] = label
            with path.open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["time", "segment", "observed", "fitted"])
                for i in range(ds.n):
                    w.writerow([ds.time_labels[i], segment[i], repr(float(ds.performance[i])),
                                repr(float(p_hat[i]))])
            written.append(path)
        report["curves"] = curve_meta

    if ranking is not None:
        chain_path = out / "feature_chain.json"
        _write_json(chain_path, ranking.to_dict(names))
        written.append(chain_path)

    report_path = out / "report.json"
    _write_json(report_path, report)
    written.append(report_path)

    if figures:
        from . import plotting

        if curves:
            sv = split(ds, curve_split, "network")
            bounds = [sv.train_range.stop, sv.val_range.stop]
            written.append(plotting.plot_fits(ds.time_labels, ds.performance, curves, out / "fits.png",
                                              boundaries=bounds, title=f"best models, split {curve_split}"))
        if ranking is not None:
            lab = [names[s.subset[-1]] for s in ranking.chain]
            rej = None
            if ranking.rejected is not None:
                rej = (names[ranking.rejected.subset[-1]], ranking.rejected.merit)
            written.append(plotting.plot_merit_chain(lab, [s.merit for s in ranking.chain],
                                                     out / "feature_chain.png", rej))
    return written
