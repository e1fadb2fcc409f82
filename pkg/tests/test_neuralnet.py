import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from resilience_nn import neuralnet as nn
from resilience_nn.dataset import NormalizedDataset, RawTable, normalize, split


def S(x):
    return 1.0 / (1.0 + math.exp(-x))


def oracle_step(p: nn.NetworkParameters, x, h_prev, c_prev):
    """Scalar per-neuron forward pass written straight from the equations."""
    nh, m = p.hidden_units, p.input_dim
    h = np.zeros(nh)
    c = np.zeros(nh)
    for k in range(nh):
        def pre(suffix=""):
            W = p["W_in" + suffix]
            s = sum(W[j, k] * x[j] for j in range(m))
            if p.kind != "ANN":
                s += p["W_rec" + suffix][k] * h_prev[k]
            return s

        if p.kind in ("ANN", "RNN"):
            z = pre() + float(p["b_hidden"])
            h[k] = z if z > 0 else 0.0
        elif p.lstm_mode == "paper_literal":
            z = pre() + float(p["b_hidden"])
            f = c_prev[k] * S(z)
            I = S(z) * math.tanh(z)
            c[k] = f + I
            h[k] = S(z) * math.tanh(p["w_cell"][k] * c[k] + float(p["b_hidden"]))
        else:
            zf = pre("_f") + float(p["b_f"])
            zi = pre("_i") + float(p["b_i"])
            zg = pre("_g") + float(p["b_g"])
            zo = pre("_o") + float(p["b_o"])
            c[k] = c_prev[k] * S(zf) + S(zi) * math.tanh(zg)
            h[k] = S(zo) * math.tanh(p["w_cell"][k] * c[k] + float(p["b_cell"]))
    y = sum(p["W_out"][k] * h[k] for k in range(nh)) + float(p["b_out"])
    return y, h, c


def oracle_loss(p, x, target, h_prev, c_prev):
    return (oracle_step(p, x, h_prev, c_prev)[0] - target) ** 2


def pre_activations(p, x, h_prev):
    if p.kind == "ANN":
        return x @ p["W_in"] + p["b_hidden"]
    return x @ p["W_in"] + p["W_rec"] * h_prev + p["b_hidden"]


def finite_difference(p, x, target, h_prev, c_prev, eps=1e-6):
    g = np.zeros(p.size)
    for i in range(p.size):
        q = p.copy()
        q.flat[i] += eps
        up = oracle_loss(q, x, target, h_prev, c_prev)
        q.flat[i] -= 2 * eps
        down = oracle_loss(q, x, target, h_prev, c_prev)
        g[i] = (up - down) / (2 * eps)
    return g


def random_case(rng, kind, mode="standard"):
    while True:
        m = int(rng.integers(1, 5))
        nh = int(rng.integers(1, 6))
        cfg = nn.NetworkConfig(kind, m, nh, lstm_weight_mode=mode, seed=int(rng.integers(2**31)))
        p = nn.init_params(cfg)
        p.flat[:] += rng.normal(0, 0.3, p.size)
        x = rng.uniform(0, 1, m)
        h_prev = rng.uniform(0, 1, nh) if kind != "ANN" else np.zeros(nh)
        c_prev = rng.normal(0, 1, nh) if kind == "LSTM" else None
        target = float(rng.normal(0, 0.5))
        if kind in ("ANN", "RNN") and np.min(np.abs(pre_activations(p, x, h_prev))) <= 1e-3:
            continue
        return p, x, target, h_prev, c_prev


def rel_error(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


CASES = [("ANN", "standard"), ("RNN", "standard"), ("LSTM", "standard"), ("LSTM", "paper_literal")]


class TestInit:
    def test_deterministic(self):
        cfg = nn.NetworkConfig("LSTM", 3, 4, seed=7)
        np.testing.assert_array_equal(nn.init_params(cfg).flat, nn.init_params(cfg).flat)
        assert not np.array_equal(nn.init_params(cfg).flat, nn.init_params(cfg, seed=8).flat)

    def test_ann_shapes(self):
        p = nn.init_params(nn.NetworkConfig("ANN", 3, 3))
        assert p["W_in"].shape == (3, 3)
        assert p["W_out"].shape == (3,)
        assert p["b_hidden"].shape == () and p["b_out"].shape == ()
        assert p.size == 9 + 3 + 2
        assert float(p["b_hidden"]) == 0.0 and float(p["b_out"]) == 0.0

    def test_lstm_standard_has_per_gate_params(self):
        p = nn.init_params(nn.NetworkConfig("LSTM", 2, 3))
        for g in "figo":
            assert p[f"W_in_{g}"].shape == (2, 3) and p[f"W_rec_{g}"].shape == (3,)

    def test_bounds_audit(self):
        draws = []
        for seed in range(100):
            p = nn.init_params(nn.NetworkConfig("RNN", 5, 10, seed=seed))
            draws.append(p["W_in"].ravel())
            assert np.all(np.abs(p["W_rec"]) <= math.sqrt(6 / 20))
            assert np.all(np.abs(p["W_out"]) <= math.sqrt(6 / 11))
        w = np.concatenate(draws)
        assert w.size >= 10_000 // 2
        bound = math.sqrt(6 / 15)
        assert np.all(np.abs(w) <= bound)
        assert np.abs(w).max() > 0.95 * bound  # actually spans the interval


class TestCells:
    def test_relu(self):
        assert nn.relu(-1.0) == 0.0
        assert nn.relu(2.0) == 2.0
        assert nn.relu(0.0) == 0.0

    def test_ann_hidden(self):
        p = nn.zero_params(nn.NetworkConfig("ANN", 2, 3))
        np.testing.assert_array_equal(nn.ann_hidden([0.3, 0.9], p), 0)
        q = nn.zero_params(nn.NetworkConfig("ANN", 1, 1))
        q["W_in"] = 2.0
        q["b_hidden"] = -1.0
        np.testing.assert_array_equal(nn.ann_hidden([1.0], q), [1.0])
        r = nn.init_params(nn.NetworkConfig("ANN", 3, 4))
        r["W_in"] *= 0.01
        r["b_hidden"] = -10
        np.testing.assert_array_equal(nn.ann_hidden([0.5, 1, 0], r), 0)
        with pytest.raises(nn.DimensionMismatch):
            nn.ann_hidden([1.0, 2.0], q)

    def test_rnn_hidden(self):
        p = nn.init_params(nn.NetworkConfig("RNN", 2, 3, seed=1))
        x = np.array([0.4, 0.6])
        a = nn.init_params(nn.NetworkConfig("ANN", 2, 3, seed=1))
        a["W_in"] = p["W_in"]
        np.testing.assert_array_equal(nn.rnn_hidden(x, np.zeros(3), p), nn.ann_hidden(x, a))
        q = nn.zero_params(nn.NetworkConfig("RNN", 1, 1))
        q["W_rec"] = 1.0
        np.testing.assert_array_equal(nn.rnn_hidden([0.5], [0.3], q), [0.3])
        q["b_hidden"] = -1.0
        np.testing.assert_array_equal(nn.rnn_hidden([0.5], [0.3], q), [0.0])

    def test_lstm_zero_params(self):
        for mode in ("standard", "paper_literal"):
            p = nn.zero_params(nn.NetworkConfig("LSTM", 2, 1, lstm_weight_mode=mode))
            p["w_cell"] = 0.0
            st_ = nn.lstm_cell([0.3, 0.7], [0.0], [1.0], p)
            np.testing.assert_allclose(st_.f, [0.5])
            np.testing.assert_allclose(st_.I, [0.0])
            np.testing.assert_allclose(st_.c, [0.5])
            np.testing.assert_allclose(st_.h, [0.0])

    def test_paper_literal_shared_gates_and_cell_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            p, x, _, h_prev, c_prev = random_case(rng, "LSTM", "paper_literal")
            st_ = nn.lstm_cell(x, h_prev, c_prev, p)
            np.testing.assert_array_equal(st_.gates["forget"], st_.gates["output"])
            z = x @ p["W_in"] + p["W_rec"] * h_prev + p["b_hidden"]
            f = c_prev / (1 + np.exp(-z))
            I = np.tanh(z) / (1 + np.exp(-z))
            np.testing.assert_allclose(st_.c, f + I, rtol=0, atol=1e-15)

    def test_gate_ranges(self):
        p = nn.init_params(nn.NetworkConfig("LSTM", 3, 5, seed=2))
        p.flat[:] *= 50
        st_ = nn.lstm_cell([1, -1, 0.5], np.ones(5), np.ones(5), p)
        for g in ("forget", "input", "output"):
            assert np.all((st_.gates[g] >= 0) & (st_.gates[g] <= 1))
        assert np.all(np.abs(st_.gates["candidate"]) <= 1)

    def test_lstm_literal_zero_cell_weight_gives_zero_h(self):
        p = nn.init_params(nn.NetworkConfig("LSTM", 2, 4, lstm_weight_mode="paper_literal", seed=3))
        p["w_cell"] = 0.0
        p["b_hidden"] = 0.0
        np.testing.assert_array_equal(nn.lstm_cell([0.9, 0.1], np.ones(4), np.ones(4), p).h, 0.0)

    def test_output(self):
        p = nn.zero_params(nn.NetworkConfig("ANN", 1, 2))
        p["b_out"] = 0.7
        assert nn.output([0, 0], p) == 0.7
        p["b_out"] = 0.0
        p["W_out"] = [1, 1]
        assert nn.output([0.2, 0.3], p) == pytest.approx(0.5)

    def test_oracle_agrees_with_forward(self):
        rng = np.random.default_rng(1)
        for kind, mode in CASES:
            for _ in range(10):
                p, x, _, h_prev, c_prev = random_case(rng, kind, mode)
                y, h, c = nn.step(x, h_prev, c_prev, p)
                y_o, h_o, c_o = oracle_step(p, x, h_prev, c_prev if c_prev is not None else np.zeros(p.hidden_units))
                assert y == pytest.approx(y_o, abs=1e-12)
                np.testing.assert_allclose(h, h_o, atol=1e-12)


class TestForwardSequence:
    def test_ann_stateless_permutation(self):
        p = nn.init_params(nn.NetworkConfig("ANN", 2, 4, seed=1))
        X = np.random.default_rng(0).uniform(size=(6, 2))
        perm = [3, 0, 5, 1, 4, 2]
        np.testing.assert_allclose(nn.forward_sequence(X[perm], p), nn.forward_sequence(X, p)[perm], atol=1e-15)

    def test_rnn_zero_recurrence_equals_ann(self):
        r = nn.init_params(nn.NetworkConfig("RNN", 2, 4, seed=1))
        r["W_rec"] = 0.0
        a = nn.zero_params(nn.NetworkConfig("ANN", 2, 4))
        for name in ("W_in", "b_hidden", "W_out", "b_out"):
            a[name] = r[name]
        X = np.random.default_rng(0).uniform(size=(6, 2))
        np.testing.assert_array_equal(nn.forward_sequence(X, r), nn.forward_sequence(X, a))

    def test_lstm_unrolled(self):
        p = nn.init_params(nn.NetworkConfig("LSTM", 3, 2, seed=5))
        X = np.random.default_rng(2).uniform(size=(3, 3))
        h, c = np.zeros(2), np.zeros(2)
        ys = []
        for x in X:
            st_ = nn.lstm_cell(x, h, c, p)
            h, c = st_.h, st_.c
            ys.append(nn.output(h, p))
        np.testing.assert_allclose(nn.forward_sequence(X, p), ys, atol=1e-15)


class TestGradients:
    @pytest.mark.parametrize("kind,mode", CASES)
    def test_finite_differences(self, kind, mode):
        rng = np.random.default_rng(100 + CASES.index((kind, mode)))
        for _ in range(25):
            p, x, target, h_prev, c_prev = random_case(rng, kind, mode)
            g = nn.gradients(x, target, p, h_prev, c_prev)
            fd = finite_difference(p, x, target, h_prev, c_prev if c_prev is not None else None)
            assert rel_error(g.flat, fd) < 1e-4

    def test_zero_error_zero_gradient(self):
        p = nn.init_params(nn.NetworkConfig("LSTM", 2, 3, seed=0))
        y, _, _ = nn.step([0.2, 0.4], None, None, p)
        g = nn.gradients([0.2, 0.4], y, p)
        np.testing.assert_array_equal(g.flat, 0)

    def test_output_bias_gradient(self):
        p = nn.init_params(nn.NetworkConfig("ANN", 1, 1, seed=0))
        y, _, _ = nn.step([0.5], None, None, p)
        g = nn.gradients([0.5], 0.3, p)
        assert float(g["b_out"]) == pytest.approx(2 * (y - 0.3), abs=1e-15)


class TestAdam:
    def test_zero_gradient(self):
        theta = np.array([1.0, -2.0])
        new, (m, v) = nn.adam_step(theta, np.zeros(2), (np.array([0.1, 0.1]), np.array([0.01, 0.01])), 3, 0.01)
        # moments decay, parameters move only through the remaining momentum
        np.testing.assert_allclose(m, [0.09, 0.09])
        np.testing.assert_allclose(v, [0.00999, 0.00999])
        new0, (m0, v0) = nn.adam_step(theta, np.zeros(2), None, 1, 0.01)
        np.testing.assert_array_equal(new0, theta)
        np.testing.assert_array_equal(m0, 0)

    def test_first_step_magnitude(self):
        for g in (1e-3, 0.5, -7.0):
            new, _ = nn.adam_step(np.array([0.0]), np.array([g]), None, 1, 0.01)
            expected = -0.01 * g / (abs(g) + 1e-8)
            assert new[0] == pytest.approx(expected, rel=1e-12)
            assert abs(new[0]) <= 0.01

    def test_constant_gradient_monotone(self):
        theta = np.array([0.0])
        mom = None
        path = [0.0]
        for t in (1, 2):
            theta, mom = nn.adam_step(theta, np.array([0.3]), mom, t, 0.01)
            path.append(theta[0])
        assert path[0] > path[1] > path[2]

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30), st.floats(1e-4, 1e-1))
    def test_step_bounded(self, grads, lr):
        theta = np.zeros(1)
        mom = None
        for t, g in enumerate(grads, start=1):
            new, mom = nn.adam_step(theta, np.array([g]), mom, t, lr)
            assert abs(new[0] - theta[0]) <= lr * (1 + 1e-6) * 3.2  # bias-corrected Adam bound ~ lr*(1-b1)/sqrt(1-b2)
            theta = new

    @settings(max_examples=50, deadline=None)
    @given(st.floats(1e-3, 1e3), st.lists(st.booleans(), min_size=1, max_size=40), st.floats(1e-4, 1e-1))
    def test_step_bounded_by_lr_for_constant_magnitude(self, mag, signs, lr):
        theta = np.zeros(1)
        mom = None
        for t, s in enumerate(signs, start=1):
            new, mom = nn.adam_step(theta, np.array([mag if s else -mag]), mom, t, lr)
            assert abs(new[0] - theta[0]) <= lr * (1 + 1e-6)
            theta = new

    def test_does_not_mutate(self):
        p = nn.init_params(nn.NetworkConfig("ANN", 1, 2, seed=0))
        before = p.flat.copy()
        g = p.like(np.ones(p.size))
        new, _ = nn.adam_step(p, g, None, 1, 0.1)
        np.testing.assert_array_equal(p.flat, before)
        assert isinstance(new, nn.NetworkParameters)
        assert np.all(new.flat < before)


def _line_ds(n=30, m=2, target=None, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.1, 1, (n, m))
    perf = np.ones(n) if target is None else target
    return normalize(RawTable(tuple(map(str, range(n))), perf, X, tuple(f"X{j}" for j in range(m))))


class TestTrain:
    def test_constant_zero_target_stops_at_11(self):
        ds = _line_ds()
        sv = split(ds, "60-20-20", "network")
        cfg = nn.NetworkConfig("ANN", 2, 3)
        tr = nn.train(cfg, ds, sv, params=nn.zero_params(cfg))
        assert tr.train_loss[0] == 0.0
        assert tr.epochs_run == 11 and tr.stopped_early

    @pytest.mark.parametrize("kind", nn.KINDS)
    def test_deterministic(self, kind, synth_ds):
        sv = split(synth_ds, "60-20-20", "network")
        cfg = nn.NetworkConfig(kind, 3, 4, seed=9, max_epochs=40)
        a = nn.train(cfg, synth_ds, sv)
        b = nn.train(cfg, synth_ds, sv)
        assert a.train_loss == b.train_loss
        np.testing.assert_array_equal(a.params.flat, b.params.flat)
        assert a.epochs_run <= 40

    def test_plateau_rule(self, synth_ds):
        sv = split(synth_ds, "60-20-20", "network")
        tr = nn.train(nn.NetworkConfig("LSTM", 3, 4, seed=1), synth_ds, sv)
        hist = tr.train_loss
        best, last_improvement = np.inf, 0
        for epoch, loss in enumerate(hist, start=1):
            if loss < best - 1e-4:
                best, last_improvement = loss, epoch
        assert tr.stopped_early
        assert tr.epochs_run == last_improvement + 10
        assert tr.epochs_run <= 1000

    def test_validation_monitor(self, synth_ds):
        sv = split(synth_ds, "60-20-20", "network")
        tr = nn.train(nn.NetworkConfig("RNN", 3, 4, seed=1, early_stop_monitor="val"), synth_ds, sv)
        assert len(tr.val_loss) == tr.epochs_run and np.all(np.isfinite(tr.val_loss))

    def test_non_finite_loss(self):
        perf = np.concatenate([[0.0], np.cumsum(np.full(29, 1e200))])
        ds = NormalizedDataset(tuple(map(str, range(30))), perf, np.ones((30, 2)), np.diff(perf), ("a", "b"))
        sv = split(ds, "60-20-20", "network")
        with pytest.raises(nn.NonFiniteLoss):
            nn.train(nn.NetworkConfig("ANN", 2, 3, learning_rate=1e-2, seed=0), ds, sv)

    def test_dimension_mismatch(self, synth_ds):
        sv = split(synth_ds, "60-20-20", "network")
        with pytest.raises(nn.DimensionMismatch):
            nn.train(nn.NetworkConfig("ANN", 2, 3), synth_ds, sv, subset=(0, 1, 2))


class TestPredict:
    def test_ann_independent_of_history(self, synth_ds):
        sv = split(synth_ds, "60-20-20", "network")
        tr = nn.train(nn.NetworkConfig("ANN", 3, 4, seed=2, max_epochs=30), synth_ds, sv)
        full = nn.predict(tr, synth_ds)
        cold = nn.forward_sequence(synth_ds.features()[sv.test_range.start:], tr.params)
        np.testing.assert_allclose(nn.predict(tr, synth_ds, sv.test_range), full[sv.test_range.start:])
        np.testing.assert_allclose(cold, full[sv.test_range.start:], atol=1e-15)

    def test_rnn_warm_start_matters(self, synth_ds):
        sv = split(synth_ds, "60-20-20", "network")
        cfg = nn.NetworkConfig("RNN", 3, 4, seed=4, max_epochs=30)
        tr = nn.train(cfg, synth_ds, sv)
        tr.params["W_rec"] = np.abs(tr.params["W_rec"]) + 0.5
        tr.params["b_hidden"] = 0.5  # keep neurons active so state carries over
        warm = nn.predict(tr, synth_ds, sv.test_range)
        cold = nn.forward_sequence(synth_ds.features()[sv.test_range.start:], tr.params)
        assert abs(warm[0] - cold[0]) > 1e-6
