"""Full classifiers: feature-vector MLPs and sequence RNNs with aggregation.

A classifier owns its config, initializes a flat parameter dict, and exposes
``loss_and_grad`` / ``predict_proba``. Recurrent models follow the two-column
bidirectional formulation: an independent stack runs over the reversed
sequence, and the two final-layer representation sequences are combined only
at aggregation time (last-hidden concatenation, learned attention average,
or elementwise max pooling).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from .core import softmax_cross_entropy
from .mlp import (
    ALLOWED_DROPOUT,
    ALLOWED_WEIGHT_DECAY,
    MlpConfig,
    glorot_uniform,
    init_mlp,
    mlp_backward,
    mlp_forward,
)
from .recurrent import (
    CELL_GRU,
    CELL_LSTM,
    gru_layer_backward,
    gru_layer_forward,
    init_gru_layer,
    init_lstm_layer,
    lstm_layer_backward,
    lstm_layer_forward,
)
from .core import dropout_mask

AGG_LAST = "last"
AGG_ATTENTION = "attention"
AGG_MAXPOOL = "maxpool"


@dataclass(frozen=True)
class RnnConfig:
    cell: str
    input_dim: int
    hidden_dim: int
    layers: int
    bidirectional: bool
    aggregation: str
    head: MlpConfig
    att_dim: int | None = None
    dropout_prob: float = 0.0
    weight_decay: float = 0.0
    # population rows average 1/d per entry; a gain of d rescales them to
    # O(1) so input projections compete with the recurrent signal
    input_gain: float = 1.0

    def __post_init__(self):
        if self.cell not in (CELL_GRU, CELL_LSTM):
            raise ValidationError(f"unknown cell {self.cell!r}")
        if self.input_gain <= 0:
            raise ValidationError("input_gain must be positive")
        if not 1 <= self.layers <= 6:
            raise ValidationError("layers must lie in [1, 6]")
        if not 1 <= self.hidden_dim <= 512:
            raise ValidationError("hidden_dim must lie in [1, 512]")
        if self.aggregation not in (AGG_LAST, AGG_ATTENTION, AGG_MAXPOOL):
            raise ValidationError(f"unknown aggregation {self.aggregation!r}")
        if self.aggregation == AGG_ATTENTION:
            if self.att_dim is None or not 1 <= self.att_dim <= 512:
                raise ValidationError("attention needs att_dim in [1, 512]")
        elif self.att_dim is not None:
            raise ValidationError("att_dim only applies to attention aggregation")
        if self.input_dim < 1:
            raise ValidationError("input_dim must be positive")
        if self.dropout_prob not in ALLOWED_DROPOUT:
            raise ValidationError(f"dropout_prob must be one of {ALLOWED_DROPOUT}")
        if self.weight_decay not in ALLOWED_WEIGHT_DECAY:
            raise ValidationError(f"weight_decay must be one of {ALLOWED_WEIGHT_DECAY}")
        if self.head.input_dim != self.agg_dim:
            raise ValidationError(
                f"head expects input {self.head.input_dim}, aggregation yields {self.agg_dim}"
            )

    @property
    def agg_dim(self) -> int:
        return 2 * self.hidden_dim if self.bidirectional else self.hidden_dim

    def to_dict(self) -> dict:
        return {
            "cell": self.cell,
            "input_dim": self.input_dim,
            "hidden_dim": self.hidden_dim,
            "layers": self.layers,
            "bidirectional": self.bidirectional,
            "aggregation": self.aggregation,
            "att_dim": self.att_dim,
            "dropout_prob": self.dropout_prob,
            "weight_decay": self.weight_decay,
            "input_gain": self.input_gain,
            "head": self.head.to_dict(),
        }

    @staticmethod
    def from_dict(d: dict) -> "RnnConfig":
        return RnnConfig(
            cell=d["cell"],
            input_dim=d["input_dim"],
            hidden_dim=d["hidden_dim"],
            layers=d["layers"],
            bidirectional=d["bidirectional"],
            aggregation=d["aggregation"],
            head=MlpConfig.from_dict(d["head"]),
            att_dim=d.get("att_dim"),
            dropout_prob=d.get("dropout_prob", 0.0),
            weight_decay=d.get("weight_decay", 0.0),
            input_gain=d.get("input_gain", 1.0),
        )

    @staticmethod
    def build(
        cell: str,
        input_dim: int,
        hidden_dim: int,
        layers: int = 1,
        bidirectional: bool = True,
        aggregation: str = AGG_LAST,
        att_dim: int | None = None,
        head_hidden: tuple[int, ...] = (),
        head_activation: str = "relu",
        dropout_prob: float = 0.0,
        weight_decay: float = 0.0,
        input_gain: float = 1.0,
    ) -> "RnnConfig":
        agg_dim = 2 * hidden_dim if bidirectional else hidden_dim
        head = MlpConfig(
            (agg_dim, *head_hidden, 2),
            tuple(head_activation for _ in head_hidden),
            dropout_prob=dropout_prob,
            weight_decay=weight_decay,
        )
        return RnnConfig(
            cell=cell,
            input_dim=input_dim,
            hidden_dim=hidden_dim,
            layers=layers,
            bidirectional=bidirectional,
            aggregation=aggregation,
            head=head,
            att_dim=att_dim if aggregation == AGG_ATTENTION else None,
            dropout_prob=dropout_prob,
            weight_decay=weight_decay,
            input_gain=input_gain,
        )


class MlpClassifier:
    """Feature-vector classifier; flattens any trailing input axes."""

    kind = "mlp"

    def __init__(self, config: MlpConfig):
        self.config = config

    def init_params(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        return init_mlp(self.config, rng)

    @property
    def weight_decay(self) -> float:
        return self.config.weight_decay

    def _flat(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return x.reshape(x.shape[0], -1)

    def logits(self, params, x, train_mode=False, rng=None):
        return mlp_forward(self.config, params, self._flat(x), train_mode, rng)

    def loss(self, params, x, y, train_mode=False, rng=None) -> float:
        logits, _ = self.logits(params, x, train_mode, rng)
        loss, _, _ = softmax_cross_entropy(logits, y)
        return loss

    def loss_and_grad(self, params, x, y, train_mode=False, rng=None):
        logits, cache = self.logits(params, x, train_mode, rng)
        loss, dlogits, _ = softmax_cross_entropy(logits, y)
        grads: dict[str, np.ndarray] = {}
        mlp_backward(self.config, params, cache, dlogits, grads)
        return loss, grads

    def predict_proba(self, params, x, batch_size: int = 1024) -> np.ndarray:
        x = self._flat(x)
        outs = []
        for k in range(0, x.shape[0], batch_size):
            logits, _ = mlp_forward(self.config, params, x[k : k + batch_size])
            shifted = logits - logits.max(axis=1, keepdims=True)
            ez = np.exp(shifted)
            outs.append(ez / ez.sum(axis=1, keepdims=True))
        return np.concatenate(outs, axis=0)


class RnnClassifier:
    """Sequence classifier: recurrent stack(s), aggregation, MLP head."""

    kind = "rnn"

    def __init__(self, config: RnnConfig):
        self.config = config
        if config.cell == CELL_GRU:
            self._init_layer = init_gru_layer
            self._fwd = gru_layer_forward
            self._bwd = gru_layer_backward
        else:
            self._init_layer = init_lstm_layer
            self._fwd = lstm_layer_forward
            self._bwd = lstm_layer_backward

    @property
    def weight_decay(self) -> float:
        return self.config.weight_decay

    def init_params(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        cfg = self.config
        params: dict[str, np.ndarray] = {}
        directions = ["fw", "bw"] if cfg.bidirectional else ["fw"]
        for direction in directions:
            in_dim = cfg.input_dim
            for l in range(cfg.layers):
                self._init_layer(rng, in_dim, cfg.hidden_dim, params, f"{direction}{l}_")
                in_dim = cfg.hidden_dim
        if cfg.aggregation == AGG_ATTENTION:
            params["att_w"] = glorot_uniform(rng, cfg.agg_dim, cfg.att_dim)
            params["att_b"] = np.zeros(cfg.att_dim)
            params["att_c"] = rng.normal(scale=1.0 / np.sqrt(cfg.att_dim), size=cfg.att_dim)
        params.update(init_mlp(cfg.head, rng, prefix="head_"))
        return params

    def _run_stack(self, params, xs, direction, train_mode, rng, cache):
        cfg = self.config
        cur = xs
        layer_caches = []
        for l in range(cfg.layers):
            outs, steps = self._fwd(params, f"{direction}{l}_", cur)
            mask = None
            if l < cfg.layers - 1:
                if train_mode and cfg.dropout_prob > 0.0:
                    mask = dropout_mask(rng, outs.shape, cfg.dropout_prob)
                    cur = outs * mask
                else:
                    cur = outs
            layer_caches.append((steps, mask))
        cache[direction] = layer_caches
        return outs

    def _stack_backward(self, params, direction, cache, d_top, grads):
        cfg = self.config
        layer_caches = cache[direction]
        d_out = d_top
        for l in range(cfg.layers - 1, -1, -1):
            steps, _ = layer_caches[l]
            d_in = self._bwd(params, f"{direction}{l}_", steps, d_out, grads)
            if l > 0:
                mask = layer_caches[l - 1][1]
                d_out = d_in if mask is None else d_in * mask
        return d_in

    def forward(self, params, xs, train_mode=False, rng=None):
        cfg = self.config
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim != 3 or xs.shape[2] != cfg.input_dim:
            raise ValidationError(f"expected (batch, time, {cfg.input_dim}) input, got {xs.shape}")
        if cfg.input_gain != 1.0:
            xs = xs * cfg.input_gain
        cache: dict = {}
        h_fwd = self._run_stack(params, xs, "fw", train_mode, rng, cache)
        if cfg.bidirectional:
            h_bwd_rev = self._run_stack(params, xs[:, ::-1], "bw", train_mode, rng, cache)
            h_bwd = h_bwd_rev[:, ::-1]
            u = np.concatenate([h_fwd, h_bwd], axis=2)
        else:
            u = h_fwd
        cache["u_shape"] = u.shape

        if cfg.aggregation == AGG_LAST:
            agg = (
                np.concatenate([h_fwd[:, -1], h_bwd[:, 0]], axis=1)
                if cfg.bidirectional
                else h_fwd[:, -1]
            )
        elif cfg.aggregation == AGG_ATTENTION:
            v = np.tanh(u @ params["att_w"] + params["att_b"])
            scores = v @ params["att_c"]
            shifted = scores - scores.max(axis=1, keepdims=True)
            ez = np.exp(shifted)
            alpha = ez / ez.sum(axis=1, keepdims=True)
            agg = np.einsum("bt,btd->bd", alpha, u)
            cache["attention"] = (u, v, alpha)
        else:
            idx = u.argmax(axis=1)
            agg = np.take_along_axis(u, idx[:, None, :], axis=1)[:, 0, :]
            cache["maxpool"] = (u.shape, idx)
            cache["u"] = u

        logits, head_cache = mlp_forward(cfg.head, params, agg, train_mode, rng, prefix="head_")
        cache["head"] = head_cache
        return logits, cache

    def attention_weights(self, params, xs) -> np.ndarray:
        """Per-timestep attention weights in eval mode (attention models only)."""
        if self.config.aggregation != AGG_ATTENTION:
            raise ValidationError("model has no attention aggregation")
        _, cache = self.forward(params, xs)
        return cache["attention"][2]

    def backward(self, params, cache, dlogits, grads):
        cfg = self.config
        d_agg = mlp_backward(cfg.head, params, cache["head"], dlogits, grads, prefix="head_")
        b, t, _ = cache["u_shape"]
        hidden = cfg.hidden_dim

        if cfg.aggregation == AGG_LAST:
            d_fwd = np.zeros((b, t, hidden))
            d_fwd[:, -1] = d_agg[:, :hidden]
            if cfg.bidirectional:
                d_bwd = np.zeros((b, t, hidden))
                d_bwd[:, 0] = d_agg[:, hidden:]
            du = None
        elif cfg.aggregation == AGG_ATTENTION:
            u, v, alpha = cache["attention"]
            d_alpha = np.einsum("bd,btd->bt", d_agg, u)
            du = alpha[:, :, None] * d_agg[:, None, :]
            d_scores = alpha * (d_alpha - (alpha * d_alpha).sum(axis=1, keepdims=True))
            grads["att_c"] = np.einsum("bt,bta->a", d_scores, v)
            dv_pre = d_scores[:, :, None] * params["att_c"] * (1.0 - v**2)
            grads["att_w"] = np.einsum("btd,bta->da", u, dv_pre)
            grads["att_b"] = dv_pre.sum(axis=(0, 1))
            du = du + dv_pre @ params["att_w"].T
        else:
            u_shape, idx = cache["maxpool"]
            du = np.zeros(u_shape)
            np.put_along_axis(du, idx[:, None, :], d_agg[:, None, :], axis=1)

        if du is not None:
            d_fwd = du[..., :hidden]
            if cfg.bidirectional:
                d_bwd = du[..., hidden:]

        self._stack_backward(params, "fw", cache, np.ascontiguousarray(d_fwd), grads)
        if cfg.bidirectional:
            self._stack_backward(params, "bw", cache, np.ascontiguousarray(d_bwd[:, ::-1]), grads)

    def loss(self, params, xs, y, train_mode=False, rng=None) -> float:
        logits, _ = self.forward(params, xs, train_mode, rng)
        loss, _, _ = softmax_cross_entropy(logits, y)
        return loss

    def loss_and_grad(self, params, xs, y, train_mode=False, rng=None):
        logits, cache = self.forward(params, xs, train_mode, rng)
        loss, dlogits, _ = softmax_cross_entropy(logits, y)
        grads: dict[str, np.ndarray] = {}
        self.backward(params, cache, dlogits, grads)
        return loss, grads

    def predict_proba(self, params, xs, batch_size: int = 512) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.float64)
        outs = []
        for k in range(0, xs.shape[0], batch_size):
            logits, _ = self.forward(params, xs[k : k + batch_size])
            shifted = logits - logits.max(axis=1, keepdims=True)
            ez = np.exp(shifted)
            outs.append(ez / ez.sum(axis=1, keepdims=True))
        return np.concatenate(outs, axis=0)


def make_classifier(kind: str, config) -> MlpClassifier | RnnClassifier:
    if kind == "mlp":
        return MlpClassifier(config)
    if kind == "rnn":
        return RnnClassifier(config)
    raise ValidationError(f"unknown classifier kind {kind!r}")
