"""Multi-layer perceptron block: config, initialization, forward/backward.

The block maps a feature vector through fully connected hidden layers to a
pair of logits. It is used standalone for the MLP classifiers and as the
classification head on top of recurrent aggregations; parameter keys take a
prefix so several blocks can share one parameter dict.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from .core import activation_backward, activation_forward, canonical_activation, dropout_mask

ALLOWED_DROPOUT = (0.0, 0.2, 0.5)
ALLOWED_WEIGHT_DECAY = (0.0, 1e-4, 1e-3)


@dataclass(frozen=True)
class MlpConfig:
    """Layer sizes (input, hidden..., 2) with one activation per hidden layer."""

    layer_dims: tuple[int, ...]
    activations: tuple[str, ...]
    dropout_prob: float = 0.0
    weight_decay: float = 0.0

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        if len(dims) < 2:
            raise ValidationError("need at least input and output dims")
        if dims[-1] != 2:
            raise ValidationError("output dimension must be 2")
        if any(d < 1 for d in dims):
            raise ValidationError("layer dimensions must be positive")
        if any(d > 512 for d in dims[1:-1]):
            raise ValidationError("hidden dimensions must not exceed 512")
        acts = tuple(canonical_activation(a) for a in self.activations)
        object.__setattr__(self, "activations", acts)
        if len(acts) != len(dims) - 2:
            raise ValidationError(
                f"{len(dims) - 2} hidden layers need as many activations, got {len(acts)}"
            )
        if self.dropout_prob not in ALLOWED_DROPOUT:
            raise ValidationError(f"dropout_prob must be one of {ALLOWED_DROPOUT}")
        if self.weight_decay not in ALLOWED_WEIGHT_DECAY:
            raise ValidationError(f"weight_decay must be one of {ALLOWED_WEIGHT_DECAY}")

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def n_layers(self) -> int:
        return len(self.layer_dims) - 1

    def to_dict(self) -> dict:
        return {
            "layer_dims": list(self.layer_dims),
            "activations": list(self.activations),
            "dropout_prob": self.dropout_prob,
            "weight_decay": self.weight_decay,
        }

    @staticmethod
    def from_dict(d: dict) -> "MlpConfig":
        return MlpConfig(
            tuple(d["layer_dims"]),
            tuple(d["activations"]),
            d.get("dropout_prob", 0.0),
            d.get("weight_decay", 0.0),
        )


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_mlp(config: MlpConfig, rng: np.random.Generator, prefix: str = "") -> dict[str, np.ndarray]:
    params = {}
    dims = config.layer_dims
    for l in range(config.n_layers):
        params[f"{prefix}w{l}"] = glorot_uniform(rng, dims[l], dims[l + 1])
        params[f"{prefix}b{l}"] = np.zeros(dims[l + 1])
    return params


def mlp_forward(
    config: MlpConfig,
    params: dict[str, np.ndarray],
    x: np.ndarray,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
    prefix: str = "",
):
    """Batched forward pass returning logits and the backward cache.

    Dropout masks hit hidden-layer outputs and only in train mode.
    """
    if x.ndim != 2 or x.shape[1] != config.input_dim:
        raise ValidationError(f"expected input of dim {config.input_dim}, got {x.shape}")
    h = x
    inputs = []  # per layer: input it consumed
    activated = []  # per hidden layer: activation output before dropout
    masks = []
    n_hidden = config.n_layers - 1
    for l in range(n_hidden):
        inputs.append(h)
        z = h @ params[f"{prefix}w{l}"] + params[f"{prefix}b{l}"]
        a = activation_forward(config.activations[l], z)
        activated.append(a)
        if train_mode and config.dropout_prob > 0.0:
            mask = dropout_mask(rng, a.shape, config.dropout_prob)
            h = a * mask
            masks.append(mask)
        else:
            h = a
            masks.append(None)
    inputs.append(h)
    logits = h @ params[f"{prefix}w{n_hidden}"] + params[f"{prefix}b{n_hidden}"]
    cache = {"inputs": inputs, "activated": activated, "masks": masks}
    return logits, cache


def mlp_predict(
    config: MlpConfig,
    params: dict[str, np.ndarray],
    x: np.ndarray,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Class-probability pair for a single feature vector."""
    from .core import softmax

    logits, _ = mlp_forward(config, params, np.atleast_2d(np.asarray(x, dtype=np.float64)), train_mode, rng)
    return softmax(logits)[0]


def mlp_backward(
    config: MlpConfig,
    params: dict[str, np.ndarray],
    cache: dict,
    dlogits: np.ndarray,
    grads: dict[str, np.ndarray],
    prefix: str = "",
) -> np.ndarray:
    """Accumulate parameter grads into ``grads``; return gradient w.r.t. input."""
    inputs = cache["inputs"]
    activated = cache["activated"]
    masks = cache["masks"]
    n_hidden = config.n_layers - 1
    grads[f"{prefix}w{n_hidden}"] = inputs[-1].T @ dlogits
    grads[f"{prefix}b{n_hidden}"] = dlogits.sum(axis=0)
    dh = dlogits @ params[f"{prefix}w{n_hidden}"].T
    for l in range(n_hidden - 1, -1, -1):
        if masks[l] is not None:
            dh = dh * masks[l]
        dz = dh * activation_backward(config.activations[l], activated[l])
        grads[f"{prefix}w{l}"] = inputs[l].T @ dz
        grads[f"{prefix}b{l}"] = dz.sum(axis=0)
        dh = dz @ params[f"{prefix}w{l}"].T
    return dh
