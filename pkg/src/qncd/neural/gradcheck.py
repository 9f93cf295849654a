"""Backpropagation verification against central finite differences."""

from __future__ import annotations

import numpy as np


def gradient_check(
    classifier,
    params: dict[str, np.ndarray],
    xs: np.ndarray,
    ys: np.ndarray,
    epsilon: float = 1e-5,
    n_coords: int = 200,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between analytic and numeric gradients.

    Samples at least ``n_coords`` coordinates with every parameter group
    represented. The eval-mode loss is used so both gradient routes see the
    same deterministic function. Relative error uses a 1e-4 denominator
    floor so finite-difference noise on near-zero gradients cannot dominate.
    """
    rng = rng or np.random.default_rng(0)
    _, grads = classifier.loss_and_grad(params, xs, ys, train_mode=False)
    keys = sorted(params.keys())
    per_key = max(1, n_coords // len(keys))
    worst = 0.0
    for key in keys:
        flat = params[key].reshape(-1)
        size = flat.shape[0]
        count = min(size, per_key)
        coords = rng.choice(size, size=count, replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + epsilon
            loss_plus = classifier.loss(params, xs, ys, train_mode=False)
            flat[c] = orig - epsilon
            loss_minus = classifier.loss(params, xs, ys, train_mode=False)
            flat[c] = orig
            numeric = (loss_plus - loss_minus) / (2.0 * epsilon)
            analytic = float(grads[key].reshape(-1)[c])
            denom = max(abs(analytic), abs(numeric), 1e-4)
            worst = max(worst, abs(analytic - numeric) / denom)
    return worst
