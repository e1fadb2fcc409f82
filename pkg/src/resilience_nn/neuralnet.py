"""Single-hidden-layer ANN, RNN and LSTM regressors written directly in numpy.

All three share the scalar output layer ``dP = sum_k W_out[k] h[k] + b_out``.
Hidden states differ:

* ANN   ``h = relu(x @ W_in + b_hidden)``
* RNN   ``h = relu(x @ W_in + W_rec * h_prev + b_hidden)`` with a per-neuron
  (diagonal) recurrent weight
* LSTM  ``f = c_prev * S(z_f)``, ``I = S(z_i) * tanh(z_g)``, ``c = f + I``,
  ``h = S(z_o) * tanh(w_cell * c + b)``

In ``paper_literal`` mode the LSTM uses a single pre-activation
``z = x @ W_in + W_rec * h_prev + b_hidden`` for every gate and ``b_hidden``
inside the cell tanh.  ``standard`` mode gives each gate its own input weights,
recurrent weights and bias, plus a separate cell bias ``b_cell``.

Training updates the weights after every observation, so gradients are taken
over a single step with the incoming ``h_prev``/``c_prev`` held fixed
(truncated backpropagation through time with a window of one).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy.special import expit

from .dataset import NormalizedDataset, SplitView

__all__ = [
    "KINDS",
    "NetworkConfig",
    "NetworkParameters",
    "CellState",
    "TrainedNetwork",
    "NonFiniteLoss",
    "DimensionMismatch",
    "init_params",
    "zero_params",
    "relu",
    "sigmoid",
    "ann_hidden",
    "rnn_hidden",
    "lstm_cell",
    "output",
    "step",
    "forward_sequence",
    "loss_and_gradients",
    "gradients",
    "adam_step",
    "train",
    "predict",
]

KINDS = ("ANN", "RNN", "LSTM")
LSTM_MODES = ("standard", "paper_literal")
GATES = ("f", "i", "g", "o")


class NonFiniteLoss(FloatingPointError):
    pass


class DimensionMismatch(ValueError):
    pass


def _normalize_kind(kind: str) -> str:
    k = kind.upper()
    if k not in KINDS:
        raise ValueError(f"unknown network kind {kind!r}; expected one of {KINDS}")
    return k


@dataclass(frozen=True)
class NetworkConfig:
    kind: str
    input_dim: int
    hidden_units: int
    learning_rate: float = 1e-2
    max_epochs: int = 1000
    early_stop_min_delta: float = 1e-4
    early_stop_patience: int = 10
    early_stop_monitor: Literal["train", "val"] = "train"
    seed: int = 0
    lstm_weight_mode: Literal["standard", "paper_literal"] = "standard"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "kind", _normalize_kind(self.kind))
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if self.hidden_units < 1:
            raise ValueError("hidden_units must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.lstm_weight_mode not in LSTM_MODES:
            raise ValueError(f"lstm_weight_mode must be one of {LSTM_MODES}")
        if self.early_stop_monitor not in ("train", "val"):
            raise ValueError("early_stop_monitor must be 'train' or 'val'")


def param_layout(kind: str, m: int, nh: int, lstm_mode: str = "standard") -> list[tuple[str, tuple[int, ...]]]:
    kind = _normalize_kind(kind)
    out: list[tuple[str, tuple[int, ...]]] = []
    if kind == "LSTM" and lstm_mode == "standard":
        for g in GATES:
            out += [(f"W_in_{g}", (m, nh)), (f"W_rec_{g}", (nh,)), (f"b_{g}", ())]
        out += [("w_cell", (nh,)), ("b_cell", ())]
    else:
        out.append(("W_in", (m, nh)))
        if kind in ("RNN", "LSTM"):
            out.append(("W_rec", (nh,)))
        out.append(("b_hidden", ()))
        if kind == "LSTM":
            out.append(("w_cell", (nh,)))
    out += [("W_out", (nh,)), ("b_out", ())]
    return out


class NetworkParameters:
    """Named views into one flat parameter vector.

    Keeping everything in ``flat`` lets Adam update all weights in a single
    vectorised operation; ``params["W_in"]`` returns a writable view.
    """

    def __init__(self, kind: str, input_dim: int, hidden_units: int,
                 lstm_mode: str = "standard", flat: np.ndarray | None = None):
        self.kind = _normalize_kind(kind)
        self.lstm_mode = lstm_mode if self.kind == "LSTM" else "standard"
        self.input_dim = int(input_dim)
        self.hidden_units = int(hidden_units)
        self.layout = param_layout(self.kind, self.input_dim, self.hidden_units, self.lstm_mode)
        self._slices: dict[str, tuple[slice, tuple[int, ...]]] = {}
        pos = 0
        for name, shape in self.layout:
            size = int(np.prod(shape, dtype=int))
            self._slices[name] = (slice(pos, pos + size), shape)
            pos += size
        self.size = pos
        if flat is None:
            flat = np.zeros(pos)
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (pos,):
            raise DimensionMismatch(f"flat vector has shape {flat.shape}, expected ({pos},)")
        self.flat = flat
        self._bind()

    def _bind(self):
        self._views = {n: self.flat[s].reshape(shape) for n, (s, shape) in self._slices.items()}

    def __getitem__(self, name: str) -> np.ndarray:
        return self._views[name]

    def __setitem__(self, name: str, value) -> None:
        self._views[name][...] = value

    def __contains__(self, name: str) -> bool:
        return name in self._views

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.layout]

    @property
    def literal(self) -> bool:
        return self.kind == "LSTM" and self.lstm_mode == "paper_literal"

    def like(self, flat: np.ndarray | None = None) -> "NetworkParameters":
        """Same layout over ``flat`` (zeros if omitted); skips layout rebuild."""
        new = object.__new__(NetworkParameters)
        new.__dict__.update({k: self.__dict__[k] for k in
                             ("kind", "lstm_mode", "input_dim", "hidden_units", "layout", "_slices", "size")})
        new.flat = np.zeros(self.size) if flat is None else np.asarray(flat, dtype=float)
        if new.flat.shape != (self.size,):
            raise DimensionMismatch(f"flat vector has shape {new.flat.shape}, expected ({self.size},)")
        new._bind()
        return new

    def copy(self) -> "NetworkParameters":
        return self.like(self.flat.copy())

    def to_dict(self) -> dict:
        return {n: self[n].tolist() for n in self.names}

    def __repr__(self) -> str:
        return (f"NetworkParameters(kind={self.kind!r}, input_dim={self.input_dim}, "
                f"hidden_units={self.hidden_units}, lstm_mode={self.lstm_mode!r})")


@dataclass
class CellState:
    h: np.ndarray
    c: np.ndarray | None = None
    f: np.ndarray | None = None
    I: np.ndarray | None = None
    gates: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class TrainedNetwork:
    config: NetworkConfig
    params: NetworkParameters
    epochs_run: int
    train_loss: list[float]
    val_loss: list[float]
    subset: tuple[int, ...]
    stopped_early: bool = False


def _uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_params(config: NetworkConfig, seed: int | None = None) -> NetworkParameters:
    """Glorot-uniform weights, zero biases, unit cell weights.

    The diagonal recurrent weights use the fan of an ``n_h x n_h`` recurrent
    layer.
    """
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    m, nh = config.input_dim, config.hidden_units
    p = NetworkParameters(config.kind, m, nh, config.lstm_weight_mode)
    for name, shape in p.layout:
        if name.startswith("W_in"):
            p[name] = _uniform(rng, shape, m, nh)
        elif name.startswith("W_rec"):
            p[name] = _uniform(rng, shape, nh, nh)
        elif name == "W_out":
            p[name] = _uniform(rng, shape, nh, 1)
        elif name == "w_cell":
            p[name] = 1.0
    return p


def zero_params(config: NetworkConfig) -> NetworkParameters:
    return NetworkParameters(config.kind, config.input_dim, config.hidden_units, config.lstm_weight_mode)


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    return expit(x)


def _check_x(x, params: NetworkParameters) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (params.input_dim,):
        raise DimensionMismatch(f"input has shape {x.shape}, expected ({params.input_dim},)")
    return x


def _check_h(h, params: NetworkParameters, what: str = "state") -> np.ndarray:
    if h is None:
        return np.zeros(params.hidden_units)
    h = np.asarray(h, dtype=float)
    if h.shape != (params.hidden_units,):
        raise DimensionMismatch(f"{what} has shape {h.shape}, expected ({params.hidden_units},)")
    return h


def ann_hidden(x, params: NetworkParameters) -> np.ndarray:
    x = _check_x(x, params)
    return relu(x @ params["W_in"] + params["b_hidden"])


def rnn_hidden(x, h_prev, params: NetworkParameters) -> np.ndarray:
    x = _check_x(x, params)
    h_prev = _check_h(h_prev, params, "h_prev")
    return relu(x @ params["W_in"] + params["W_rec"] * h_prev + params["b_hidden"])


def _lstm_forward(x, h_prev, c_prev, p: NetworkParameters):
    if p.literal:
        z = x @ p["W_in"] + p["W_rec"] * h_prev + p["b_hidden"]
        s = sigmoid(z)
        t = np.tanh(z)
        f = c_prev * s
        I = s * t
        c = f + I
        u = np.tanh(p["w_cell"] * c + p["b_hidden"])
        h = s * u
        return h, c, {"z": z, "s": s, "t": t, "f": f, "I": I, "u": u}
    z = {g: x @ p[f"W_in_{g}"] + p[f"W_rec_{g}"] * h_prev + p[f"b_{g}"] for g in GATES}
    sf, si, so = sigmoid(z["f"]), sigmoid(z["i"]), sigmoid(z["o"])
    tg = np.tanh(z["g"])
    f = c_prev * sf
    I = si * tg
    c = f + I
    u = np.tanh(p["w_cell"] * c + p["b_cell"])
    h = so * u
    return h, c, {"z": z, "sf": sf, "si": si, "so": so, "tg": tg, "f": f, "I": I, "u": u}


def lstm_cell(x, h_prev, c_prev, params: NetworkParameters) -> CellState:
    if params.kind != "LSTM":
        raise ValueError("lstm_cell needs LSTM parameters")
    x = _check_x(x, params)
    h_prev = _check_h(h_prev, params, "h_prev")
    c_prev = _check_h(c_prev, params, "c_prev")
    h, c, cache = _lstm_forward(x, h_prev, c_prev, params)
    if params.literal:
        gates = {"forget": cache["s"], "input": cache["s"], "candidate": cache["t"], "output": cache["s"]}
    else:
        gates = {"forget": cache["sf"], "input": cache["si"], "candidate": cache["tg"], "output": cache["so"]}
    return CellState(h=h, c=c, f=cache["f"], I=cache["I"], gates=gates)


def output(h, params: NetworkParameters) -> float:
    h = _check_h(h, params, "h")
    return float(params["W_out"] @ h + params["b_out"])


def _hidden(x, h_prev, c_prev, p: NetworkParameters):
    """Hidden update for any kind; returns (h, c, cache)."""
    if p.kind == "ANN":
        z = x @ p["W_in"] + p["b_hidden"]
        return relu(z), None, {"z": z}
    if p.kind == "RNN":
        z = x @ p["W_in"] + p["W_rec"] * h_prev + p["b_hidden"]
        return relu(z), None, {"z": z}
    return _lstm_forward(x, h_prev, c_prev, p)


def step(x, h_prev, c_prev, params: NetworkParameters) -> tuple[float, np.ndarray, np.ndarray | None]:
    """One time step: returns (prediction, h, c)."""
    x = _check_x(x, params)
    h_prev = _check_h(h_prev, params, "h_prev")
    c_prev = _check_h(c_prev, params, "c_prev") if params.kind == "LSTM" else None
    h, c, _ = _hidden(x, h_prev, c_prev, params)
    return float(params["W_out"] @ h + params["b_out"]), h, c


def forward_sequence(X, params: NetworkParameters, kind: str | None = None) -> np.ndarray:
    """Predictions for every row of ``X`` with states starting at zero."""
    if kind is not None and _normalize_kind(kind) != params.kind:
        raise ValueError(f"parameters are for {params.kind}, not {kind}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != params.input_dim:
        raise DimensionMismatch(f"X has {X.shape[1]} columns, expected {params.input_dim}")
    nh = params.hidden_units
    h = np.zeros(nh)
    c = np.zeros(nh) if params.kind == "LSTM" else None
    W_out, b_out = params["W_out"], float(params["b_out"])
    out = np.empty(X.shape[0])
    for t, x in enumerate(X):
        h, c, _ = _hidden(x, h, c, params)
        out[t] = W_out @ h + b_out
    return out


def loss_and_gradients(x, target: float, h_prev, c_prev, params: NetworkParameters):
    """Squared error of one step and its exact gradient with the incoming state fixed.

    Returns ``(loss, grads, h, c)`` where ``grads`` shares the layout of
    ``params`` and ``h``/``c`` are the new states.
    """
    p = params
    h, c, cache = _hidden(x, h_prev, c_prev, p)
    err = float(p["W_out"] @ h + p["b_out"]) - target
    dy = 2.0 * err
    g = p.like()
    g["W_out"] = dy * h
    g["b_out"] = dy
    dh = dy * p["W_out"]

    if p.kind in ("ANN", "RNN"):
        dz = dh * (cache["z"] > 0)
        g["W_in"] = np.outer(x, dz)
        g["b_hidden"] = dz.sum()
        if p.kind == "RNN":
            g["W_rec"] = dz * h_prev
        return err * err, g, h, c

    u = cache["u"]
    if p.literal:
        s, t = cache["s"], cache["t"]
        du = dh * s * (1.0 - u * u)
        g["w_cell"] = du * c
        dc = du * p["w_cell"]
        ds = dh * u + dc * (c_prev + t)
        dt = dc * s
        dz = ds * s * (1.0 - s) + dt * (1.0 - t * t)
        g["W_in"] = np.outer(x, dz)
        g["W_rec"] = dz * h_prev
        g["b_hidden"] = dz.sum() + du.sum()
        return err * err, g, h, c

    sf, si, so, tg = cache["sf"], cache["si"], cache["so"], cache["tg"]
    du = dh * so * (1.0 - u * u)
    g["w_cell"] = du * c
    g["b_cell"] = du.sum()
    dc = du * p["w_cell"]
    dz = {
        "o": dh * u * so * (1.0 - so),
        "f": dc * c_prev * sf * (1.0 - sf),
        "i": dc * tg * si * (1.0 - si),
        "g": dc * si * (1.0 - tg * tg),
    }
    for gate, d in dz.items():
        g[f"W_in_{gate}"] = np.outer(x, d)
        g[f"W_rec_{gate}"] = d * h_prev
        g[f"b_{gate}"] = d.sum()
    return err * err, g, h, c


def gradients(x, target: float, params: NetworkParameters, h_prev=None, c_prev=None) -> NetworkParameters:
    x = _check_x(x, params)
    h_prev = _check_h(h_prev, params, "h_prev")
    c_prev = _check_h(c_prev, params, "c_prev") if params.kind == "LSTM" else None
    return loss_and_gradients(x, float(target), h_prev, c_prev, params)[1]


def _adam_inplace(theta, grad, m, v, t, lr, beta1, beta2, eps):
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    theta -= lr * m_hat / (np.sqrt(v_hat) + eps)


def adam_step(params, grads, moments, t: int, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """Bias-corrected Adam update.

    ``params`` and ``grads`` may be arrays or :class:`NetworkParameters`;
    ``moments`` is ``(m, v)`` or ``None`` for zeros.  Inputs are not modified.
    Returns ``(new_params, (m, v))``.
    """
    if t < 1:
        raise ValueError("Adam step count starts at 1")
    wrapped = isinstance(params, NetworkParameters)
    theta = (params.flat if wrapped else np.asarray(params, dtype=float)).copy()
    g = grads.flat if isinstance(grads, NetworkParameters) else np.asarray(grads, dtype=float)
    if moments is None:
        m, v = np.zeros_like(theta), np.zeros_like(theta)
    else:
        m, v = (np.array(a, dtype=float) for a in moments)
    _adam_inplace(theta, g, m, v, t, lr, beta1, beta2, eps)
    return (params.like(theta) if wrapped else theta), (m, v)


def _mse(pred, target) -> float:
    d = np.asarray(pred) - np.asarray(target)
    return float(np.mean(d * d))


def train(
    config: NetworkConfig,
    ds: NormalizedDataset,
    split: SplitView,
    subset: Sequence[int] | None = None,
    params: NetworkParameters | None = None,
) -> TrainedNetwork:
    """Fit a network with per-observation Adam updates.

    Each epoch walks the training targets in time order, starting from zero
    hidden/cell state.  The reported training loss is the mean squared error
    accumulated over the epoch's updates; validation loss is evaluated after
    the epoch with state warm-started from the beginning of the series.
    Training stops once the monitored loss has failed to improve on its best
    value by more than ``early_stop_min_delta`` for ``early_stop_patience``
    consecutive epochs.  The final epoch's parameters are returned.
    """
    subset = tuple(range(ds.m)) if subset is None else tuple(int(j) for j in subset)
    X = ds.features(subset)
    y = ds.delta_p
    if X.shape[1] != config.input_dim:
        raise DimensionMismatch(f"config expects {config.input_dim} inputs, subset has {X.shape[1]}")
    p = init_params(config) if params is None else params.copy()
    theta = p.flat
    m_mom = np.zeros_like(theta)
    v_mom = np.zeros_like(theta)
    nh = config.hidden_units
    is_lstm = p.kind == "LSTM"
    train_idx = list(split.train_range)
    val_stop = split.val_range.stop if len(split.val_range) else 0

    train_hist: list[float] = []
    val_hist: list[float] = []
    best = math.inf
    wait = 0
    t = 0
    stopped = False
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, config.max_epochs + 1):
            h = np.zeros(nh)
            c = np.zeros(nh) if is_lstm else None
            total = 0.0
            for d in train_idx:
                loss, g, h, c = loss_and_gradients(X[d], y[d], h, c, p)
                t += 1
                _adam_inplace(theta, g.flat, m_mom, v_mom, t, config.learning_rate,
                              config.beta1, config.beta2, config.adam_eps)
                total += loss
            train_loss = total / len(train_idx)
            if not math.isfinite(train_loss) or not np.all(np.isfinite(theta)):
                raise NonFiniteLoss(f"non-finite training loss at epoch {epoch}")
            train_hist.append(train_loss)
            if val_stop:
                pred = forward_sequence(X[:val_stop], p)
                val_hist.append(_mse(pred[split.val_range.start:], y[split.val_range.start:val_stop]))
            else:
                val_hist.append(math.nan)

            monitored = train_loss if config.early_stop_monitor == "train" else val_hist[-1]
            if monitored < best - config.early_stop_min_delta:
                best = monitored
                wait = 0
            else:
                wait += 1
                if wait >= config.early_stop_patience:
                    stopped = True
                    break
    return TrainedNetwork(config, p, len(train_hist), train_hist, val_hist, subset, stopped)


def predict(trained: TrainedNetwork, ds: NormalizedDataset, rng: range | None = None) -> np.ndarray:
    """Predicted changes in performance for the delta indices in ``rng``.

    The network is run over the whole history up to ``rng.stop`` so recurrent
    state is warm when the requested range begins.
    """
    X = ds.features(trained.subset)
    if X.shape[1] != trained.params.input_dim:
        raise DimensionMismatch("dataset subset does not match the trained network")
    rng = range(0, X.shape[0]) if rng is None else rng
    if rng.start < 0 or rng.stop > X.shape[0]:
        raise IndexError(f"range {rng} outside [0, {X.shape[0]})")
    if len(rng) == 0:
        return np.empty(0)
    return forward_sequence(X[:rng.stop], trained.params)[rng.start:rng.stop]
