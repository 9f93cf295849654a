"""Backpropagation is certified per architecture against central differences."""

import numpy as np
import pytest

from qncd.neural.gradcheck import gradient_check
from qncd.neural.mlp import MlpConfig
from qncd.neural.model import MlpClassifier, RnnClassifier, RnnConfig


def data(batch=6, t=16, d=5, seed=0):
    rng = np.random.default_rng(seed)
    return rng.random((batch, t, d)), rng.integers(0, 2, size=batch)


def check(classifier, xs, ys, seed=1):
    params = classifier.init_params(np.random.default_rng(seed))
    return gradient_check(classifier, params, xs, ys, n_coords=200, rng=np.random.default_rng(2))


class TestGradientChecks:
    def test_mlp_two_hidden_layers(self):
        xs, ys = data()
        clf = MlpClassifier(MlpConfig((80, 14, 10, 2), ("tanh", "sigmoid")))
        assert check(clf, xs.reshape(6, -1), ys) < 1e-4

    def test_mlp_relu(self):
        xs, ys = data(seed=3)
        clf = MlpClassifier(MlpConfig((80, 12, 2), ("relu",)))
        assert check(clf, xs.reshape(6, -1), ys) < 1e-4

    def test_gru_unidirectional(self):
        xs, ys = data(seed=4)
        clf = RnnClassifier(
            RnnConfig.build("gru", 5, 7, layers=2, bidirectional=False, aggregation="last", head_hidden=(6,), head_activation="tanh")
        )
        assert check(clf, xs, ys) < 1e-4

    def test_lstm_unidirectional(self):
        xs, ys = data(seed=5)
        clf = RnnClassifier(
            RnnConfig.build("lstm", 5, 6, layers=1, bidirectional=False, aggregation="last", head_hidden=())
        )
        assert check(clf, xs, ys) < 1e-4

    def test_bidirectional_last(self):
        xs, ys = data(seed=6)
        clf = RnnClassifier(
            RnnConfig.build("lstm", 5, 5, layers=2, bidirectional=True, aggregation="last", head_hidden=(5,), head_activation="sigmoid")
        )
        assert check(clf, xs, ys) < 1e-4

    def test_bigru_maxpool_full_sequence(self):
        xs, ys = data(t=16, seed=7)
        clf = RnnClassifier(
            RnnConfig.build("gru", 5, 6, layers=1, bidirectional=True, aggregation="maxpool", head_hidden=(8,), head_activation="tanh")
        )
        assert check(clf, xs, ys) < 1e-4

    def test_bilstm_maxpool(self):
        xs, ys = data(seed=8)
        clf = RnnClassifier(
            RnnConfig.build("lstm", 5, 5, layers=1, bidirectional=True, aggregation="maxpool", head_hidden=())
        )
        assert check(clf, xs, ys) < 1e-4

    def test_attention_including_context_vector(self):
        xs, ys = data(seed=9)
        clf = RnnClassifier(
            RnnConfig.build("gru", 5, 4, layers=1, bidirectional=True, aggregation="attention", att_dim=6, head_hidden=(7,), head_activation="tanh")
        )
        params = clf.init_params(np.random.default_rng(10))
        err = gradient_check(clf, params, xs, ys, n_coords=200, rng=np.random.default_rng(11))
        assert err < 1e-4
        # the context vector itself must be covered by the sampler
        assert "att_c" in params

    def test_bilstm_attention(self):
        xs, ys = data(seed=12)
        clf = RnnClassifier(
            RnnConfig.build("lstm", 5, 6, layers=2, bidirectional=True, aggregation="attention", att_dim=5, head_hidden=(7,), head_activation="sigmoid")
        )
        assert check(clf, xs, ys) < 1e-4

    def test_train_mode_with_frozen_masks(self):
        # dropout path: identical rng seeding makes the train-mode loss
        # deterministic, so finite differences remain valid
        xs, ys = data(seed=13)
        clf = RnnClassifier(
            RnnConfig.build("gru", 5, 6, layers=2, bidirectional=True, aggregation="maxpool", head_hidden=(6,), dropout_prob=0.5)
        )
        params = clf.init_params(np.random.default_rng(14))

        class Frozen:
            def loss(self, p, x, y, train_mode=False):
                return clf.loss(p, x, y, train_mode=True, rng=np.random.default_rng(99))

            def loss_and_grad(self, p, x, y, train_mode=False):
                return clf.loss_and_grad(p, x, y, train_mode=True, rng=np.random.default_rng(99))

        err = gradient_check(Frozen(), params, xs, ys, n_coords=120, rng=np.random.default_rng(15))
        assert err < 1e-4
