"""Figures written next to the CSV/JSON report files.

Uses the object-oriented matplotlib API (no pyplot state), so figures can be
produced from worker processes and repeated runs write identical bytes.
"""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

STYLE = {
    "figsize": (7.0, 4.2),
    "dpi": 120,
    "observed": dict(color="black", lw=2.0, label="observed"),
    "boundary": dict(color="0.5", ls="--", lw=1.0),
}
KIND_STYLES = {
    "MLRI": dict(color="tab:red", ls="-."),
    "ANN": dict(color="tab:blue", ls="--"),
    "RNN": dict(color="tab:orange", ls=":"),
    "LSTM": dict(color="tab:green", ls="-"),
}
# strip software/date stamps so output bytes depend only on the data
_META = {"png": {"Software": None}, "svg": {"Date": None, "Creator": None}, "pdf": {"CreationDate": None, "Creator": None, "Producer": None}}


def _new_figure() -> tuple[Figure, object]:
    fig = Figure(figsize=STYLE["figsize"], dpi=STYLE["dpi"])
    FigureCanvasAgg(fig)
    ax = fig.add_subplot(1, 1, 1)
    return fig, ax


def save(fig: Figure, path: str | Path) -> Path:
    path = Path(path)
    fmt = path.suffix.lstrip(".").lower() or "png"
    fig.savefig(path, format=fmt, metadata=_META.get(fmt))
    return path


def plot_fits(
    time: Sequence,
    observed: np.ndarray,
    fitted: Mapping[str, np.ndarray],
    path: str | Path,
    boundaries: Sequence[int] = (),
    title: str | None = None,
) -> Path:
    """Observed performance against each model's reconstructed curve.

    ``boundaries`` are time indices drawn as vertical lines (end of training,
    end of validation).
    """
    fig, ax = _new_figure()
    t = np.arange(len(observed))
    ax.plot(t, observed, **STYLE["observed"])
    for kind, curve in fitted.items():
        ax.plot(t, curve, label=kind, lw=1.5, **KIND_STYLES.get(kind, {}))
    for b in boundaries:
        ax.axvline(b, **STYLE["boundary"])
    step = max(1, len(t) // 8)
    ax.set_xticks(t[::step])
    ax.set_xticklabels([str(time[i]) for i in t[::step]], rotation=30, ha="right", fontsize=8)
    ax.set_xlabel("time")
    ax.set_ylabel("normalized performance")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    return save(fig, path)


def plot_loss_history(train_loss: Sequence[float], val_loss: Sequence[float], path: str | Path) -> Path:
    fig, ax = _new_figure()
    epochs = np.arange(1, len(train_loss) + 1)
    ax.semilogy(epochs, train_loss, label="training", color="tab:blue")
    val = np.asarray(val_loss, dtype=float)
    if np.any(np.isfinite(val)):
        ax.semilogy(epochs, val, label="validation", color="tab:orange")
    ax.set_xlabel("epoch")
    ax.set_ylabel("MSE of change in performance")
    ax.legend(frameon=False)
    fig.tight_layout()
    return save(fig, path)


def plot_merit_chain(labels: Sequence[str], merits: Sequence[float], path: str | Path,
                     rejected: tuple[str, float] | None = None) -> Path:
    fig, ax = _new_figure()
    x = np.arange(1, len(merits) + 1)
    ax.plot(x, merits, "o-", color="tab:blue", label="selected")
    if rejected is not None:
        ax.plot([len(merits), len(merits) + 1], [merits[-1], rejected[1]], "x--", color="tab:red",
                label="rejected")
        labels = list(labels) + [rejected[0]]
        x = np.arange(1, len(labels) + 1)
    ax.set_xticks(x)
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_xlabel("covariate added")
    ax.set_ylabel("merit")
    ax.legend(frameon=False)
    fig.tight_layout()
    return save(fig, path)
