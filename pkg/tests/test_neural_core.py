import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qncd.errors import NumericalError, ValidationError
from qncd.neural import core
from qncd.neural.core import accuracy, cross_entropy, dropout_mask, softmax
from qncd.neural.mlp import MlpConfig, init_mlp, mlp_predict
from qncd.neural.optim import AdamState, adam_step
from qncd.neural.recurrent import (
    gru_cell,
    init_gru_layer,
    init_lstm_layer,
    lstm_cell,
    orthogonal,
)


class TestSoftmax:
    @given(st.lists(st.floats(-500, 500), min_size=2, max_size=8))
    @settings(max_examples=60, deadline=None)
    def test_simplex_output(self, logits):
        p = softmax(np.array(logits))
        assert np.all(p > 0)
        assert abs(p.sum() - 1.0) <= 1e-12

    def test_shift_invariance(self):
        z = np.array([3.0, 3.0])
        assert np.allclose(softmax(z), [0.5, 0.5])

    def test_closed_form(self):
        p = softmax(np.array([np.log(3.0), 0.0]))
        assert abs(p[0] - 0.75) <= 1e-12 and abs(p[1] - 0.25) <= 1e-12


class TestMlpPredict:
    def test_zero_weights_give_coin_flip(self):
        config = MlpConfig((4, 3, 2), ("tanh",))
        params = {k: np.zeros_like(v) for k, v in init_mlp(config, np.random.default_rng(0)).items()}
        assert np.allclose(mlp_predict(config, params, np.array([1.0, -2.0, 0.5, 3.0])), [0.5, 0.5])

    def test_identity_layer_logits(self):
        config = MlpConfig((2, 2), ())
        params = {"w0": np.eye(2), "b0": np.zeros(2)}
        out = mlp_predict(config, params, np.array([np.log(3.0), 0.0]))
        assert np.allclose(out, [0.75, 0.25], atol=1e-12)

    def test_dimension_mismatch(self):
        config = MlpConfig((3, 2), ())
        params = init_mlp(config, np.random.default_rng(0))
        with pytest.raises(ValidationError):
            mlp_predict(config, params, np.zeros(5))


class TestMlpConfigValidation:
    def test_output_must_be_two(self):
        with pytest.raises(ValidationError):
            MlpConfig((4, 3), ())

    def test_hidden_width_cap(self):
        with pytest.raises(ValidationError):
            MlpConfig((4, 600, 2), ("relu",))

    def test_dropout_membership(self):
        with pytest.raises(ValidationError):
            MlpConfig((4, 8, 2), ("relu",), dropout_prob=0.3)

    def test_decay_membership(self):
        with pytest.raises(ValidationError):
            MlpConfig((4, 8, 2), ("relu",), weight_decay=0.5)


class TestCrossEntropy:
    def test_perfect_prediction(self):
        assert cross_entropy((1.0, 0.0), (1.0, 0.0)) == 0.0

    def test_coin_flip(self):
        assert cross_entropy((0.5, 0.5), (0.0, 1.0)) == pytest.approx(np.log(2.0))

    def test_quarter(self):
        assert cross_entropy((0.75, 0.25), (0.0, 1.0)) == pytest.approx(np.log(4.0))

    def test_zero_probability_clamped_and_counted(self):
        before = core.clamp_warnings
        value = cross_entropy((1.0, 0.0), (0.0, 1.0))
        assert core.clamp_warnings == before + 1
        assert value == pytest.approx(-np.log(1e-12))


class TestAccuracy:
    def test_all_correct(self):
        preds = [((1, 0), (0.9, 0.1)), ((0, 1), (0.2, 0.8))]
        assert accuracy(preds) == 100.0

    def test_all_wrong(self):
        preds = [((1, 0), (0.1, 0.9)), ((0, 1), (0.8, 0.2))]
        assert accuracy(preds) == 0.0

    def test_three_of_four(self):
        preds = [((1, 0), (0.9, 0.1))] * 3 + [((1, 0), (0.1, 0.9))]
        assert accuracy(preds) == 75.0

    def test_tie_breaks_toward_class_zero(self):
        assert accuracy([((1, 0), (0.5, 0.5))]) == 100.0
        assert accuracy([((0, 1), (0.5, 0.5))]) == 0.0

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            accuracy([])


class TestAdam:
    def _setup(self, value=1.0):
        params = {"w": np.full(3, value)}
        return params, AdamState.zeros_like(params)

    def test_zero_gradient_no_motion(self):
        params, state = self._setup()
        adam_step(params, {"w": np.zeros(3)}, state, lr=0.1)
        assert np.array_equal(params["w"], np.full(3, 1.0))

    def test_zero_lr_no_motion(self):
        params, state = self._setup()
        adam_step(params, {"w": np.ones(3)}, state, lr=0.0)
        assert np.array_equal(params["w"], np.full(3, 1.0))

    def test_constant_gradient_limit(self):
        params, state = self._setup(0.0)
        grad = {"w": np.array([0.02, -3.0, 7.0])}
        lr = 1e-3
        steps = []
        for _ in range(400):
            before = params["w"].copy()
            adam_step(params, grad, state, lr=lr)
            steps.append(params["w"] - before)
        last = steps[-1]
        assert np.allclose(np.abs(last), lr, atol=1e-3 * lr)
        assert np.array_equal(np.sign(last), -np.sign(grad["w"]))

    def test_nonfinite_gradient_aborts(self):
        params, state = self._setup()
        with pytest.raises(NumericalError, match="w"):
            adam_step(params, {"w": np.array([1.0, np.nan, 0.0])}, state)

    def test_weight_decay_pulls_to_zero(self):
        params, state = self._setup(5.0)
        for _ in range(2000):
            adam_step(params, {"w": np.zeros(3)}, state, lr=0.01, weight_decay=1e-3)
        assert np.all(np.abs(params["w"]) < 5.0)


class TestCells:
    def test_gru_zero_weights_zero_carry(self):
        params = {}
        init_gru_layer(np.random.default_rng(0), 3, 4, params, "g_")
        zeros = {k: np.zeros_like(v) for k, v in params.items()}
        out = gru_cell(np.array([1.0, 2.0, 3.0]), np.zeros(4), zeros, prefix="g_")
        assert np.array_equal(out, np.zeros(4))

    def test_gru_saturated_update_gate_keeps_carry(self):
        params = {}
        init_gru_layer(np.random.default_rng(1), 3, 4, params, "g_")
        params["g_bx"][:4] = 50.0  # update gate -> 1
        carry = np.array([0.3, -0.2, 0.8, 0.1])
        out = gru_cell(np.array([0.5, -1.0, 2.0]), carry, params, prefix="g_")
        assert np.abs(out - carry).max() <= 1e-6

    def test_lstm_zero_weights_zero_carry(self):
        params = {}
        init_lstm_layer(np.random.default_rng(2), 3, 4, params, "l_")
        zeros = {k: np.zeros_like(v) for k, v in params.items()}
        h, s = lstm_cell(np.ones(3), (np.zeros(4), np.zeros(4)), zeros, prefix="l_")
        assert np.array_equal(h, np.zeros(4))
        assert np.array_equal(s, np.zeros(4))

    def test_lstm_closed_gates_empty_cell(self):
        params = {}
        init_lstm_layer(np.random.default_rng(3), 3, 4, params, "l_")
        params["l_bx"][:4] = -50.0  # input gate -> 0
        params["l_bx"][4:8] = -50.0  # forget gate -> 0
        h, s = lstm_cell(np.ones(3), (np.full(4, 0.7), np.full(4, 2.0)), params, prefix="l_")
        assert np.abs(s).max() <= 1e-6

    def test_gate_ranges(self):
        params = {}
        init_gru_layer(np.random.default_rng(4), 3, 5, params, "g_")
        from qncd.neural.recurrent import gru_step

        x = np.random.default_rng(5).normal(size=(7, 3))
        h = np.random.default_rng(6).normal(size=(7, 5))
        _, (_, _, z, r, n, _) = gru_step(params, "g_", x, h)
        assert np.all((z > 0) & (z < 1))
        assert np.all((r > 0) & (r < 1))
        assert np.all((n > -1) & (n < 1))

    def test_orthogonal_init(self):
        q = orthogonal(np.random.default_rng(7), 6, 12)
        for block in (q[:, :6], q[:, 6:]):
            assert np.allclose(block @ block.T, np.eye(6), atol=1e-12)


class TestDropout:
    def test_mask_statistics(self):
        rng = np.random.default_rng(8)
        h = np.linspace(-2.0, 2.0, 50)
        n = 10_000
        acc = np.zeros_like(h)
        prob = 0.5
        for _ in range(n):
            acc += h * dropout_mask(rng, h.shape, prob)
        mean = acc / n
        # inverted dropout: E[h*mask] = h; per-unit std = |h| sqrt(p/(1-p))/sqrt(n)
        sigma = np.abs(h) * np.sqrt(prob / (1 - prob) / n)
        assert np.all(np.abs(mean - h) <= 3 * sigma + 1e-12)

    def test_eval_mode_deterministic(self):
        config = MlpConfig((4, 8, 2), ("relu",), dropout_prob=0.5)
        params = init_mlp(config, np.random.default_rng(9))
        x = np.random.default_rng(10).random(4)
        assert np.array_equal(mlp_predict(config, params, x), mlp_predict(config, params, x))
