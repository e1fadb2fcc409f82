"""Command-line entry point: ``resilience-nn <command> [options]``."""
from __future__ import annotations

import csv
import json
import logging
import sys
import warnings
from pathlib import Path

import click

from . import cfs, experiment, mlri, neuralnet, plotting
from .dataset import load_csv, normalize, split
from .metrics import fit_report
from .resilience import SyntheticCurveSpec, generate_synthetic, reconstruct

log = logging.getLogger("resilience_nn")


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith((".yaml", ".yml")):
        import yaml

        data = yaml.safe_load(text) or {}
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise click.BadParameter("config file must hold a key-value mapping", param_hint="--config")
    return data


def _common(f):
    """Global flags, accepted before or after the subcommand name."""
    f = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
                     help="JSON/YAML file overriding sweep-plan fields.")(f)
    f = click.option("--workers", type=int, default=None, help="Worker processes for sweeps.")(f)
    f = click.option("--base-seed", type=int, default=None, help="Base seed for run seeds.")(f)
    f = click.option("--out-dir", type=click.Path(file_okay=False), default=None, help="Output directory.")(f)
    f = click.option("--input", "input_path", type=click.Path(exists=True, dir_okay=False), default=None,
                     help="Dataset CSV (time, performance, covariates...).")(f)
    return f


def _opts(ctx: click.Context, **local) -> dict:
    merged = dict(ctx.obj or {})
    merged.update({k: v for k, v in local.items() if v is not None})
    merged.setdefault("out_dir", ".")
    merged.setdefault("workers", 1)
    merged.setdefault("base_seed", 0)
    return merged


def _dataset(opts: dict):
    if not opts.get("input_path"):
        raise click.UsageError("--input is required")
    return normalize(load_csv(opts["input_path"]))


def _parse_subset(text: str, names) -> tuple[int, ...]:
    """``"19,14"`` -> 0-based indices; integers are 1-based column numbers, others are names."""
    out = []
    for tok in (t.strip() for t in text.split(",") if t.strip()):
        if tok.isdigit():
            j = int(tok) - 1
            if not 0 <= j < len(names):
                raise click.BadParameter(f"covariate number {tok} outside 1..{len(names)}", param_hint="--subset")
        elif tok in names:
            j = names.index(tok)
        else:
            raise click.BadParameter(f"unknown covariate {tok!r}", param_hint="--subset")
        out.append(j)
    if not out or len(set(out)) != len(out):
        raise click.BadParameter("subset must be nonempty without duplicates", param_hint="--subset")
    return tuple(out)


def _out_dir(opts) -> Path:
    p = Path(opts["out_dir"])
    p.mkdir(parents=True, exist_ok=True)
    return p


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


@click.group()
@_common
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def main(ctx, verbose, **global_opts):
    """Resilience-curve modelling: feature selection, regression and neural predictors."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")
    ctx.obj = {k: v for k, v in global_opts.items() if v is not None}


@main.command("select-features")
@_common
@click.option("--epsilon", type=float, default=0.01, show_default=True)
@click.option("--max-k", type=int, default=None, help="Largest subset size (default: all covariates).")
@click.option("--signed", is_flag=True, help="Use signed rather than absolute correlations.")
@click.option("--json", "json_path", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def select_features(ctx, epsilon, max_k, signed, json_path, **local):
    """Greedy CFS merit search; prints the chain and writes feature_chain.json."""
    opts = _opts(ctx, **local)
    ds = _dataset(opts)
    ranking = cfs.forward_select(ds, max_k=max_k, epsilon=epsilon, absolute=not signed)
    names = ds.covariate_names
    click.echo(f"{'subset':<40} {'k':>3} {'merit':>10}")
    for s in ranking.chain:
        click.echo(f"{', '.join(names[j] for j in s.subset):<40} {s.k:>3d} {s.merit:>10.7f}")
    if ranking.rejected is not None:
        s = ranking.rejected
        click.echo(f"{', '.join(names[j] for j in s.subset):<40} {s.k:>3d} {s.merit:>10.7f}  (rejected)")
    click.echo(f"stop: {ranking.stop_reason}")
    path = Path(json_path) if json_path else _out_dir(opts) / "feature_chain.json"
    path.write_text(_dump(ranking.to_dict(names)) + "\n", encoding="utf-8")


@main.command("fit-mlri")
@_common
@click.option("--subset", required=True, help="Covariates, e.g. 19,14 (1-based) or names.")
@click.option("--split", "split_name", default="60-20-20", show_default=True)
@click.option("--mode", type=click.Choice(["onestep", "recursive"]), default="onestep", show_default=True)
@click.pass_context
def fit_mlri(ctx, subset, split_name, mode, **local):
    """Fit the interaction regression and print coefficients plus fit report as JSON."""
    opts = _opts(ctx, **local)
    ds = _dataset(opts)
    idx = _parse_subset(subset, ds.covariate_names)
    sv = split(ds, split_name, "regression")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", mlri.RankDeficientWarning)
        model = mlri.fit(ds, idx, sv.train_range)
    for w in caught:
        log.warning(str(w.message))
    delta = mlri.predict_delta(model, ds.features(idx))
    curve = reconstruct(ds.performance, delta, mode)
    report = fit_report(curve.predicted, ds.performance[1:], sv, len(idx))
    out = {"model": model.to_dict(ds.covariate_names), "report": report.to_dict(), "split": sv.name}
    text = _dump(out)
    click.echo(text)
    (_out_dir(opts) / "mlri.json").write_text(text + "\n", encoding="utf-8")


@main.command("train-nn")
@_common
@click.option("--kind", type=click.Choice(["ann", "rnn", "lstm"], case_sensitive=False), required=True)
@click.option("--neurons", type=click.IntRange(1, None), required=True)
@click.option("--lr", type=float, default=0.01, show_default=True)
@click.option("--subset", required=True)
@click.option("--split", "split_name", default="60-20-20", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--lstm-mode", type=click.Choice(["standard", "paper_literal"]), default="standard", show_default=True)
@click.option("--max-epochs", type=int, default=1000, show_default=True)
@click.option("--monitor", type=click.Choice(["train", "val"]), default="train", show_default=True)
@click.option("--mode", type=click.Choice(["onestep", "recursive"]), default="onestep", show_default=True)
@click.pass_context
def train_nn(ctx, kind, neurons, lr, subset, split_name, seed, lstm_mode, max_epochs, monitor, mode, **local):
    """Train one network; prints the fit report and writes loss_history.csv."""
    opts = _opts(ctx, **local)
    ds = _dataset(opts)
    idx = _parse_subset(subset, ds.covariate_names)
    sv = split(ds, split_name, "network")
    cfg = neuralnet.NetworkConfig(kind=kind, input_dim=len(idx), hidden_units=neurons, learning_rate=lr,
                                  max_epochs=max_epochs, early_stop_monitor=monitor, seed=seed,
                                  lstm_weight_mode=lstm_mode)
    try:
        trained = neuralnet.train(cfg, ds, sv, idx)
    except neuralnet.NonFiniteLoss as exc:
        raise click.ClickException(str(exc))
    delta = neuralnet.predict(trained, ds)
    curve = reconstruct(ds.performance, delta, mode)
    report = fit_report(curve.predicted, ds.performance[1:], sv, len(idx), trained.epochs_run)
    text = report.to_json(indent=2, sort_keys=True)
    click.echo(text)
    out = _out_dir(opts)
    (out / "fit_report.json").write_text(text + "\n", encoding="utf-8")
    with (out / "loss_history.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss"])
        for e, (a, b) in enumerate(zip(trained.train_loss, trained.val_loss), start=1):
            w.writerow([e, repr(a), repr(b)])
    plotting.plot_loss_history(trained.train_loss, trained.val_loss, out / "loss_history.png")
    plotting.plot_fits(ds.time_labels, ds.performance, {cfg.kind: curve.performance}, out / "fit.png",
                       boundaries=[sv.train_range.stop, sv.val_range.stop])


def _plan_from(opts: dict, ds, overrides: dict) -> tuple[experiment.SweepPlan, cfs.SubsetRanking | None]:
    cfg = _load_config(opts.get("config_path"))
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    if "base_seed" in opts:
        cfg["base_seed"] = opts["base_seed"]
    ranking = None
    if "subsets" not in cfg:
        ranking = cfs.forward_select(ds, max_k=cfg.pop("max_k", None), epsilon=cfg.pop("epsilon", 0.01))
        cfg["subsets"] = ranking.subsets
    else:
        cfg["subsets"] = [_parse_subset(s, ds.covariate_names) if isinstance(s, str) else tuple(s)
                          for s in cfg["subsets"]]
        for s in cfg["subsets"]:
            if not s or any(not 0 <= int(j) < ds.m for j in s) or len(set(s)) != len(s):
                raise click.BadParameter(f"subset {list(s)} needs distinct 0-based indices in 0..{ds.m - 1}",
                                         param_hint="--config")
    return experiment.SweepPlan.from_mapping(cfg), ranking


def _csv_list(text, conv):
    return None if text is None else tuple(conv(t) for t in text.split(",") if t.strip())


@main.command("sweep")
@_common
@click.option("--kinds", default=None, help="Comma list from MLRI,ANN,RNN,LSTM.")
@click.option("--neurons", default=None, help="Comma list of hidden sizes.")
@click.option("--lrs", default=None, help="Comma list of learning rates.")
@click.option("--splits", default=None, help="Comma list of split presets.")
@click.option("--repetitions", type=int, default=None)
@click.option("--max-epochs", type=int, default=None)
@click.option("--no-figures", is_flag=True)
@click.pass_context
def sweep(ctx, kinds, neurons, lrs, splits, repetitions, max_epochs, no_figures, **local):
    """Run the full grid and write sweep.json plus the report bundle."""
    opts = _opts(ctx, **local)
    ds = _dataset(opts)
    overrides = {
        "kinds": _csv_list(kinds, str.upper),
        "neurons": _csv_list(neurons, int),
        "learning_rates": _csv_list(lrs, float),
        "splits": _csv_list(splits, str),
        "repetitions": repetitions,
        "max_epochs": max_epochs,
    }
    plan, ranking = _plan_from(opts, ds, overrides)
    records = experiment.run_records(ds, plan, workers=opts["workers"])
    rows = experiment.aggregate(records)
    out = _out_dir(opts)
    payload = {
        "plan": plan.to_dict(),
        "feature_chain": None if ranking is None else ranking.to_dict(ds.covariate_names),
        "records": [r.to_dict() for r in records],
        "rows": [r.to_dict() for r in rows],
    }
    (out / "sweep.json").write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    chosen = experiment.select_best(rows)
    experiment.emit_report(rows, chosen, ds, out, plan, ranking, figures=not no_figures)
    failed = sum(r.failed for r in records)
    click.echo(f"{len(records)} runs ({failed} failed), {len(rows)} configurations -> {out}")
    for kind, sel in chosen.items():
        click.echo(f"  {kind:<5} {'+'.join(ds.covariate_names[j] for j in sel.subset):<30} "
                   f"neurons={sel.neurons} lr={sel.learning_rate} score={sel.score:.4f}")


@main.command("report")
@_common
@click.option("--sweep", "sweep_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--gap-weight", type=float, default=1.0, show_default=True)
@click.option("--lr", type=float, default=None, help="Restrict selection to one learning rate.")
@click.option("--no-figures", is_flag=True)
@click.pass_context
def report(ctx, sweep_path, gap_weight, lr, no_figures, **local):
    """Re-select models and rewrite the report bundle from a saved sweep.json."""
    opts = _opts(ctx, **local)
    ds = _dataset(opts)
    payload = json.loads(Path(sweep_path).read_text(encoding="utf-8"))
    rows = [experiment.AggregateRow.from_dict(r) for r in payload["rows"]]
    plan = experiment.SweepPlan.from_mapping(payload["plan"])
    ranking = None
    if payload.get("feature_chain"):
        fc = payload["feature_chain"]
        score = lambda d: cfs.MeritScore(tuple(d["subset"]), d["k"], d["r_co_bar"], d["r_cc_bar"], d["merit"])
        ranking = cfs.SubsetRanking(tuple(score(d) for d in fc["chain"]), fc["stop_reason"],
                                    score(fc["rejected"]) if fc["rejected"] else None, fc["epsilon"])
    chosen = experiment.select_best(rows, experiment.SelectionRule(gap_weight, lr))
    paths = experiment.emit_report(rows, chosen, ds, _out_dir(opts), plan, ranking, figures=not no_figures)
    for p in paths:
        click.echo(str(p))


@main.command("synth")
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON file with SyntheticCurveSpec fields.")
@click.option("--length", type=int, default=35, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def synth(spec_path, length, out_path):
    """Write a synthetic canonical resilience dataset in the input CSV schema."""
    data = json.loads(Path(spec_path).read_text(encoding="utf-8")) if spec_path else {}
    length = int(data.pop("length", length))
    spec = SyntheticCurveSpec.from_dict(data)
    ds = generate_synthetic(spec, length)
    from .dataset import RawTable, write_csv

    write_csv(out_path, RawTable(ds.time_labels, ds.performance, ds.covariates, ds.covariate_names))
    click.echo(f"wrote {length} rows to {out_path}")


def run():
    try:
        main(standalone_mode=False)
    except (ValueError, ZeroDivisionError) as exc:
        # DatasetError, bad split names, invalid specs and other input validation failures
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except click.Abort:
        sys.exit(1)


if __name__ == "__main__":
    run()
