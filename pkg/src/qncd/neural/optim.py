"""Adam with bias correction; weight decay is coupled (added to the gradient)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericalError


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(repr=False)
    v: dict[str, np.ndarray] = field(repr=False)
    step: int = 0

    @staticmethod
    def zeros_like(params: dict[str, np.ndarray]) -> "AdamState":
        return AdamState(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    weights: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    moments: AdamState,
    lr: float = 1e-3,
    weight_decay: float = 0.0,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One in-place Adam update over every parameter array.

    ``weight_decay`` adds lambda * w to each gradient before the moment
    update, matching an L2 penalty added to the risk function.
    """
    b1, b2 = betas
    moments.step += 1
    t = moments.step
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    for key, w in weights.items():
        g = grads[key]
        if not np.all(np.isfinite(g)):
            bad = int(np.count_nonzero(~np.isfinite(g)))
            raise NumericalError(
                f"non-finite gradient for {key!r} at step {t} ({bad} entries)"
            )
        if weight_decay:
            g = g + weight_decay * w
        m = moments.m[key]
        v = moments.v[key]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        w -= lr * (m / corr1) / (np.sqrt(v / corr2) + eps)
    return weights, moments
