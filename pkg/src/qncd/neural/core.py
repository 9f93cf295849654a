"""Shared numerically careful pieces: activations, softmax, losses, accuracy."""

from __future__ import annotations

import logging

import numpy as np

from ..errors import ValidationError

log = logging.getLogger(__name__)

_ACTIVATION_ALIASES = {"rectifier": "relu"}


def canonical_activation(name: str) -> str:
    name = _ACTIVATION_ALIASES.get(name, name)
    if name not in ("relu", "sigmoid", "tanh"):
        raise ValidationError(f"unknown activation {name!r}")
    return name


def activation_forward(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    return np.tanh(z)


def activation_backward(name: str, activated: np.ndarray) -> np.ndarray:
    """Derivative expressed through the activation's output value."""
    if name == "relu":
        return (activated > 0.0).astype(activated.dtype)
    if name == "sigmoid":
        return activated * (1.0 - activated)
    return 1.0 - activated**2


def sigmoid(z: np.ndarray) -> np.ndarray:
    return activation_forward("sigmoid", z)


def softmax(z: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax; output is positive and sums to 1.

    Shifted logits are floored at -700 so no entry underflows to zero for
    any finite input (exp(-700) is the practical float64 lower end).
    """
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    ez = np.exp(np.maximum(shifted, -700.0))
    return ez / ez.sum(axis=-1, keepdims=True)


#: number of times cross_entropy had to clamp a zero predicted probability
clamp_warnings = 0


def cross_entropy(pred, target) -> float:
    """Categorical cross entropy -sum_j y_j log yhat_j for one prediction.

    A zero predicted probability at the target index is clamped at 1e-12 and
    counted in ``clamp_warnings``.
    """
    global clamp_warnings
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValidationError("prediction and target shapes differ")
    if np.any(pred < 0) or np.any(pred > 1 + 1e-12):
        raise ValidationError("predictions must be probabilities")
    hot = target > 0
    p = pred[hot]
    if np.any(p <= 0):
        clamp_warnings += 1
        log.warning("cross_entropy clamped a zero predicted probability")
        p = np.maximum(p, 1e-12)
    return float(-(target[hot] * np.log(p)).sum())


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross entropy from logits plus gradient w.r.t. the logits.

    Numerically this is logsumexp(z) - z[label], identical to softmax
    followed by cross_entropy but without intermediate clamping.
    """
    shifted = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(shifted)
    denom = ez.sum(axis=1, keepdims=True)
    probs = ez / denom
    n = logits.shape[0]
    picked = shifted[np.arange(n), labels] - np.log(denom[:, 0])
    loss = float(-picked.mean())
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    return loss, dlogits, probs


def accuracy(predictions) -> float:
    """Percent of (true one-hot, predicted pair) items whose argmaxes agree.

    Ties in the predicted pair resolve toward index 0 (np.argmax convention).
    """
    if len(predictions) == 0:
        raise ValidationError("accuracy of an empty prediction set is undefined")
    hits = 0
    for truth, pred in predictions:
        hits += int(np.argmax(pred) == np.argmax(truth))
    return 100.0 * hits / len(predictions)


def accuracy_from_probs(probs: np.ndarray, labels: np.ndarray) -> float:
    """Percent accuracy of class-probability rows against 0/1 labels."""
    if probs.shape[0] == 0:
        raise ValidationError("accuracy of an empty prediction set is undefined")
    return float(100.0 * np.mean(np.argmax(probs, axis=1) == labels))


def dropout_mask(rng: np.random.Generator, shape, prob: float) -> np.ndarray:
    """Inverted-dropout mask: zeros with probability prob, survivors scaled."""
    return (rng.random(shape) >= prob) / (1.0 - prob)
