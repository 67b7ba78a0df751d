import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from radar_somnia.errors import LabelOutOfRange, NonPositiveTemperature, ShapeMismatch
from radar_somnia.model import (
    ModelConfig, ModelWeights, bilstm_forward, frequency_enhance, grad_check,
    h_swish, init_weights, layer_norm, model_forward, temperature_softmax,
    weighted_cross_entropy, zero_weights,
)
from radar_somnia.model.gradcheck import tiny_config
from radar_somnia.model.layers import sigmoid
from radar_somnia.model.network import loss_and_grads, param_shapes

from _oracles import lstm_reference

logits = arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(2, 6)),
                elements=st.floats(-30, 30))


def _small(**kw):
    base = dict(input_dim=3, hidden_dim=4, num_bilstm_layers=2, freq_bins_kept=3,
                head_hidden_dim=5, dropout_rate=0.0)
    base.update(kw)
    return ModelConfig(**base)


class TestHSwish:
    def test_fixed_points(self):
        assert h_swish(np.array([0.0, 3.0, -3.0])).tolist() == [0.0, 3.0, 0.0]

    def test_hand_value(self):
        assert h_swish(1.0) == pytest.approx(4 / 6, abs=1e-12)

    @given(st.floats(-100, 100))
    def test_formula(self, x):
        assert h_swish(x) == pytest.approx(x * min(max(x + 3, 0), 6) / 6, abs=1e-12)


class TestLayerNorm:
    def test_hand_case(self):
        out = layer_norm(np.array([1.0, 2.0, 3.0]), 1.0, 0.0, eps=0.0)
        np.testing.assert_allclose(out, [-1.2247449, 0.0, 1.2247449], atol=1e-6)

    def test_constant(self):
        out = layer_norm(np.full(5, 7.0), np.ones(5), np.full(5, 0.5))
        np.testing.assert_array_equal(out, np.full(5, 0.5))

    @given(arrays(np.float64, st.integers(2, 20), elements=st.floats(-1e3, 1e3)))
    def test_standardised(self, x):
        if np.ptp(x) < 1e-3:
            return
        out = layer_norm(x, 1.0, 0.0, eps=0.0)
        assert abs(out.mean()) < 1e-9
        assert out.std() == pytest.approx(1.0, abs=1e-9)

    def test_needs_two(self):
        with pytest.raises(ShapeMismatch):
            layer_norm(np.array([1.0]), 1.0, 0.0)


class TestSoftmax:
    def test_uniform(self):
        for t in (0.1, 1.0, 7.0):
            np.testing.assert_allclose(temperature_softmax(np.ones(4), t), 0.25, atol=1e-15)

    def test_hand_case(self):
        np.testing.assert_allclose(temperature_softmax(np.array([2.0, 0.0]), 2.0),
                                   [0.7310586, 0.2689414], atol=1e-6)

    def test_flattening(self, rng):
        z = rng.normal(size=6) * 3

        def entropy(p):
            return -(p * np.log(p)).sum()

        assert entropy(temperature_softmax(z, 10)) > entropy(temperature_softmax(z, 1))

    def test_temperature_positive(self):
        for t in (0.0, -1.0):
            with pytest.raises(NonPositiveTemperature):
                temperature_softmax(np.ones(3), t)

    @given(logits, st.floats(1e-2, 1e2))
    def test_rows_and_argmax(self, z, t):
        p = temperature_softmax(z, t)
        assert np.all(p >= 0)
        assert np.abs(p.sum(axis=1) - 1).max() < 1e-9
        e = np.exp((z - z.max(axis=1, keepdims=True)) / t)
        expected = np.argmax(z, axis=1)
        # only rows whose top logit is unique (up to float resolution) are meaningful
        top2 = np.sort(z, axis=1)[:, -2:]
        clear = (top2[:, 1] - top2[:, 0]) > 1e-9 * max(t, 1.0)
        np.testing.assert_array_equal(np.argmax(p, axis=1)[clear], expected[clear])
        assert e.shape == p.shape


class TestBiLSTM:
    def test_zero_weights(self, rng):
        cfg = _small()
        w = zero_weights(cfg)
        out = bilstm_forward(rng.normal(size=(9, 3)), w)
        assert out.shape == (9, 8)
        assert np.all(out == 0)

    def test_shape_contract(self, rng):
        w = init_weights(_small())
        assert bilstm_forward(rng.normal(size=(2, 5, 3)), w).shape == (2, 5, 8)
        with pytest.raises(ShapeMismatch):
            bilstm_forward(rng.normal(size=(5, 4)), w)

    def test_matches_reference_lstm(self, rng):
        cfg = _small(num_bilstm_layers=1)
        w = init_weights(cfg, 3)
        x = rng.normal(size=(7, 3))
        out = bilstm_forward(x, w)
        fwd = lstm_reference(x, w["lstm0_fwd_wx"], w["lstm0_fwd_wh"], w["lstm0_fwd_b"])
        bwd = lstm_reference(x[::-1], w["lstm0_bwd_wx"], w["lstm0_bwd_wh"], w["lstm0_bwd_b"])[::-1]
        np.testing.assert_allclose(out[:, :4], fwd, atol=1e-12)
        np.testing.assert_allclose(out[:, 4:], bwd, atol=1e-12)

    def test_reversal_swaps_directions(self, rng):
        cfg = _small(num_bilstm_layers=1)
        w = init_weights(cfg, 4)
        for s in ("wx", "wh", "b"):
            w.arrays[f"lstm0_bwd_{s}"] = w[f"lstm0_fwd_{s}"].copy()
        x = rng.normal(size=(6, 3))
        out = bilstm_forward(x, w)
        rev = bilstm_forward(x[::-1], w)
        np.testing.assert_allclose(rev[:, :4], out[::-1, 4:], atol=1e-12)
        np.testing.assert_allclose(rev[:, 4:], out[::-1, :4], atol=1e-12)

    def test_batch_invariance(self, rng):
        w = init_weights(_small(), 5)
        X = rng.normal(size=(4, 8, 3))
        batch = bilstm_forward(X, w)
        for b in range(4):
            np.testing.assert_allclose(batch[b], bilstm_forward(X[b], w), atol=1e-13)


class TestFrequencyEnhance:
    def test_zero(self):
        np.testing.assert_array_equal(frequency_enhance(np.zeros((6, 3)), np.zeros((2, 3))), 0.0)

    def test_unit_gates_identity(self, rng):
        h = rng.normal(size=(2, 31, 5))
        assert sigmoid(np.array([40.0]))[0] == 1.0
        out = frequency_enhance(h, np.full((4, 5), 40.0))
        assert np.abs(out - h).max() < 1e-9

    def test_constant_channel_closed_gate(self):
        # a constant lives entirely in bin 0; closing that gate removes it
        h = np.full((4, 1), 2.5)
        out = frequency_enhance(h, np.array([[-40.0]]))
        np.testing.assert_allclose(out, 0.0, atol=1e-12)

    def test_closed_gate_removes_mean_only(self, rng):
        h = rng.normal(size=(16, 2)) + 3.0
        out = frequency_enhance(h, np.full((1, 2), -40.0))
        np.testing.assert_allclose(out, h - h.mean(axis=0), atol=1e-12)

    def test_half_gate_scales_low_bins(self, rng):
        h = rng.normal(size=(12, 1))
        out = frequency_enhance(h, np.zeros((7, 1)))
        np.testing.assert_allclose(out, 0.5 * h, atol=1e-12)

    def test_errors(self):
        with pytest.raises(ShapeMismatch):
            frequency_enhance(np.zeros((1, 2)), np.zeros((1, 2)))
        with pytest.raises(ShapeMismatch):
            frequency_enhance(np.zeros((4, 2)), np.zeros((1, 3)))


class TestModelForward:
    def test_rows(self, rng):
        w = init_weights(ModelConfig(input_dim=3, hidden_dim=4, head_hidden_dim=4))
        p = model_forward(rng.normal(size=(10, 3)), w)
        assert p.shape == (10, 4)
        assert np.abs(p.sum(axis=1) - 1).max() < 1e-9
        assert np.all(p >= 0)

    def test_eval_mode_deterministic(self, rng):
        w = init_weights(ModelConfig(input_dim=3, hidden_dim=4, head_hidden_dim=4))
        x = rng.normal(size=(10, 3))
        assert model_forward(x, w).tobytes() == model_forward(x, w).tobytes()

    def test_train_mode_needs_rng(self, rng):
        w = init_weights(ModelConfig(input_dim=3, hidden_dim=4, head_hidden_dim=4))
        with pytest.raises(ValueError):
            model_forward(rng.normal(size=(4, 3)), w, train_mode=True)

    def test_dropout_changes_output(self, rng):
        w = init_weights(ModelConfig(input_dim=3, hidden_dim=4, head_hidden_dim=8, dropout_rate=0.5))
        x = rng.normal(size=(10, 3))
        a = model_forward(x, w, train_mode=True, rng=np.random.default_rng(0))
        assert not np.array_equal(a, model_forward(x, w))

    def test_huge_temperature_uniform(self, rng):
        w = init_weights(ModelConfig(input_dim=3, hidden_dim=4, head_hidden_dim=4, temperature=1e4))
        p = model_forward(rng.normal(size=(20, 3)) * 5, w)
        assert np.abs(p - 0.25).max() < 0.01

    def test_width_checked(self, rng):
        w = init_weights(ModelConfig(input_dim=3, hidden_dim=4, head_hidden_dim=4))
        with pytest.raises(ShapeMismatch):
            model_forward(rng.normal(size=(5, 2)), w)
        with pytest.raises(ShapeMismatch):
            model_forward(rng.normal(size=(5, 3)), w, ModelConfig(input_dim=3))


class TestWeights:
    def test_shapes_checked(self):
        cfg = _small()
        arrays = {k: np.zeros(s) for k, s in param_shapes(cfg).items()}
        arrays["head2_b"] = np.zeros(3)
        with pytest.raises(ShapeMismatch):
            ModelWeights(cfg, arrays)

    def test_non_finite(self):
        cfg = _small()
        arrays = {k: np.zeros(s) for k, s in param_shapes(cfg).items()}
        arrays["ln_bias"][0] = np.nan
        with pytest.raises(ValueError):
            ModelWeights(cfg, arrays)

    @pytest.mark.parametrize("kw", [dict(hidden_dim=0), dict(temperature=0.0),
                                    dict(dropout_rate=1.0), dict(num_classes=3)])
    def test_config_invariants(self, kw):
        with pytest.raises(ValueError):
            ModelConfig(**kw)

    def test_init_seeded(self):
        a, b = init_weights(_small(), 9), init_weights(_small(), 9)
        assert all(np.array_equal(a[k], b[k]) for k in a.arrays)


class TestCrossEntropy:
    def test_uniform(self):
        loss = weighted_cross_entropy(np.full((5, 4), 0.25), np.array([0, 1, 2, 3, 0]))
        assert loss == pytest.approx(math.log(4), abs=1e-12)

    def test_one_hot(self):
        p = np.eye(4)[[0, 2, 1]]
        p = p * (1 - 3e-13) + 1e-13
        assert weighted_cross_entropy(p, np.array([0, 2, 1])) <= 1e-11

    def test_weight_doubling(self, rng):
        p = temperature_softmax(rng.normal(size=(6, 4)))
        y = np.full(6, 2)
        w = np.ones(4)
        w2 = w.copy()
        w2[2] = 2.0
        assert weighted_cross_entropy(p, y, w2) == pytest.approx(2 * weighted_cross_entropy(p, y, w))

    def test_masked_labels(self):
        p = np.full((3, 4), 0.25)
        assert weighted_cross_entropy(p, np.array([-1, 0, -1])) == pytest.approx(math.log(4))
        assert weighted_cross_entropy(p, np.array([-1, -1, -1])) == 0.0

    def test_out_of_range(self):
        with pytest.raises(LabelOutOfRange):
            weighted_cross_entropy(np.full((2, 4), 0.25), np.array([0, 4]))


class TestGradients:
    @pytest.mark.parametrize("seed", range(5))
    def test_random_tiny(self, seed):
        assert grad_check(seed=seed) < 1e-4

    def test_zero_weights_symmetric_input(self):
        cfg = ModelConfig(input_dim=2, hidden_dim=2, num_bilstm_layers=1, freq_bins_kept=2,
                          head_hidden_dim=3, dropout_rate=0.0)
        X = np.zeros((1, 4, 2))
        y = np.array([[0, 1, 2, 3]])
        w = zero_weights(cfg)
        _, grads, _ = loss_and_grads(w, X, y)
        assert all(np.all(np.isfinite(g)) for g in grads.values())
        assert grad_check(cfg, seed=1, weights=w, inputs=(X, y)) < 1e-4

    @pytest.mark.parametrize("seed", [11, 12, 13])
    def test_step_sweep(self, seed):
        # a 1e-3 floor keeps near-zero gradients out of the roundoff regime
        errs = [grad_check(seed=seed, step=h, floor=1e-3) for h in (1e-3, 1e-4, 1e-5)]
        assert errs[0] > errs[1] > errs[2]

    def test_dropout_gradients(self):
        from radar_somnia.model.gradcheck import relative_error

        rng = np.random.default_rng(2)
        cfg = ModelConfig(input_dim=2, hidden_dim=2, num_bilstm_layers=1, freq_bins_kept=2,
                          head_hidden_dim=4, dropout_rate=0.4)
        w = init_weights(cfg, 2)
        X = rng.normal(size=(1, 5, 2))
        y = rng.integers(0, 4, size=(1, 5))
        _, g, _ = loss_and_grads(w, X, y, train_mode=True, rng=np.random.default_rng(7))
        k, i, h = "head1_w", 3, 1e-6
        flat = w.arrays[k].reshape(-1)
        flat[i] += h
        lp, _, _ = loss_and_grads(w, X, y, train_mode=True, rng=np.random.default_rng(7))
        flat[i] -= 2 * h
        lm, _, _ = loss_and_grads(w, X, y, train_mode=True, rng=np.random.default_rng(7))
        flat[i] += h
        assert relative_error(g[k].reshape(-1)[i], (lp - lm) / (2 * h)) < 1e-4

    def test_tiny_config_bounds(self):
        for s in range(20):
            cfg = tiny_config(s)
            assert max(cfg.input_dim, cfg.hidden_dim, cfg.head_hidden_dim) <= 8
