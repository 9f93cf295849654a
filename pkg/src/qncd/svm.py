"""Kernel soft-margin support vector classification.

The dual problem is solved by sequential minimal optimization with
maximal-violating-pair working-set selection; convergence is certified by
the KKT gap. Dataset labels {0,1} map to {-1,+1}.
"""

from __future__ import annotations

import json
import logging
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, ValidationError

log = logging.getLogger(__name__)

KERNEL_LINEAR = "linear"
KERNEL_POLY = "poly"
KERNEL_RBF = "rbf"


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    degree: int | None = None
    scale: float | None = None
    offset: float | None = None
    gamma: float | None = None

    def __post_init__(self):
        if self.kind == KERNEL_LINEAR:
            pass
        elif self.kind == KERNEL_POLY:
            if self.degree not in (2, 3, 4):
                raise ValidationError("polynomial degree must be 2, 3 or 4")
            if self.scale is None or self.offset is None:
                raise ValidationError("polynomial kernel needs scale and offset")
        elif self.kind == KERNEL_RBF:
            if self.gamma is None or self.gamma <= 0:
                raise ValidationError("rbf kernel needs gamma > 0")
        else:
            raise ValidationError(f"unknown kernel kind {self.kind!r}")

    def describe(self) -> str:
        if self.kind == KERNEL_LINEAR:
            return "linear"
        if self.kind == KERNEL_POLY:
            return f"poly{self.degree}(scale={self.scale:g},offset={self.offset:g})"
        return f"rbf(gamma={self.gamma:g})"


def kernel_eval(spec: KernelSpec, x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError(f"kernel arguments must be equal-length vectors, got {x.shape} vs {y.shape}")
    return float(kernel_matrix(spec, x[None, :], y[None, :])[0, 0])


def kernel_matrix(spec: KernelSpec, xs: np.ndarray, ys: np.ndarray | None = None) -> np.ndarray:
    """Gram matrix K[a, b] = k(xs[a], ys[b]); ys defaults to xs."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = xs if ys is None else np.asarray(ys, dtype=np.float64)
    if xs.shape[1] != ys.shape[1]:
        raise ValidationError(f"feature dimensions differ: {xs.shape[1]} vs {ys.shape[1]}")
    if spec.kind == KERNEL_LINEAR:
        return xs @ ys.T
    if spec.kind == KERNEL_POLY:
        return (spec.scale * (xs @ ys.T) + spec.offset) ** spec.degree
    sq = (
        np.sum(xs**2, axis=1)[:, None]
        + np.sum(ys**2, axis=1)[None, :]
        - 2.0 * (xs @ ys.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-spec.gamma * sq)


@dataclass
class SmoDiagnostics:
    iterations: int
    final_gap: float
    objective_trace: list[float]
    alpha: np.ndarray = field(repr=False)
    support_idx: np.ndarray = field(repr=False)


@dataclass
class SvmModel:
    kernel: KernelSpec
    support_vectors: np.ndarray = field(repr=False)
    duals: np.ndarray = field(repr=False)  # alpha_i * y_i, one per support vector
    bias: float
    c: float
    feature_mode: str = "final"
    training_meta: dict = field(default_factory=dict)
    diagnostics: SmoDiagnostics | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.support_vectors = np.asarray(self.support_vectors, dtype=np.float64)
        self.duals = np.asarray(self.duals, dtype=np.float64)
        if self.c <= 0:
            raise ValidationError("c must be positive")
        if self.duals.shape[0] != self.support_vectors.shape[0]:
            raise ValidationError("one dual coefficient per support vector required")
        if np.any(np.abs(self.duals) > self.c * (1 + 1e-9)):
            raise ValidationError("|alpha_i y_i| must not exceed C")
        if abs(self.duals.sum()) > 1e-8 * max(1.0, self.c):
            raise ValidationError(f"dual coefficients must sum to 0, got {self.duals.sum():.3e}")


class _KernelCache:
    """Row cache for the training Gram matrix.

    Full precompute below ``full_limit`` training points; otherwise an LRU
    of kernel rows.
    """

    def __init__(self, spec: KernelSpec, xs: np.ndarray, full_limit: int = 6000, max_rows: int = 1024):
        self.spec = spec
        self.xs = xs
        n = xs.shape[0]
        self.full = None
        self._rows: OrderedDict[int, np.ndarray] = OrderedDict()
        self._max_rows = max_rows
        if n <= full_limit:
            self.full = kernel_matrix(spec, xs)
            self.diag = np.diag(self.full).copy()
        else:
            if spec.kind == KERNEL_RBF:
                self.diag = np.ones(n)
            else:
                self.diag = np.einsum("ij,ij->i", xs, xs)
                if spec.kind == KERNEL_POLY:
                    self.diag = (spec.scale * self.diag + spec.offset) ** spec.degree

    def row(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[i]
        row = self._rows.get(i)
        if row is None:
            row = kernel_matrix(self.spec, self.xs[i : i + 1], self.xs)[0]
            self._rows[i] = row
            if len(self._rows) > self._max_rows:
                self._rows.popitem(last=False)
        else:
            self._rows.move_to_end(i)
        return row


def train_svm(
    features: np.ndarray,
    labels: np.ndarray,
    kernel: KernelSpec,
    c: float,
    tol: float = 1e-3,
    max_iter: int = 100_000,
) -> SvmModel:
    """Solve the soft-margin dual by SMO until the KKT gap is below tol.

    ``labels`` are +/-1. Raises ConvergenceError (carrying the final gap)
    if the iteration cap is reached first.
    """
    xs = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if xs.ndim != 2 or y.shape != (xs.shape[0],):
        raise ValidationError("features must be (n, p) with one label per row")
    n = xs.shape[0]
    if n < 2 or not (np.any(y == 1) and np.any(y == -1)):
        raise ValidationError("need at least two points and both labels present")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValidationError("labels must be +/-1")
    if c <= 0:
        raise ValidationError("c must be positive")

    cache = _KernelCache(kernel, xs)
    alpha = np.zeros(n)
    err = -y.copy()  # E_i = f(x_i) - y_i with f = 0 initially
    neg_err = -err

    pos = y > 0
    objective_trace: list[float] = []
    iterations = 0
    gap = np.inf
    check_every = 64

    def dual_objective() -> float:
        # max-form objective from the maintained error cache
        f = err + y
        return float(alpha.sum() - 0.5 * np.dot(alpha * y, f))

    while iterations < max_iter:
        up = np.where(pos, alpha < c - 1e-12, alpha > 1e-12)
        low = np.where(pos, alpha > 1e-12, alpha < c - 1e-12)
        neg_err = -err
        i = int(np.where(up, neg_err, -np.inf).argmax())
        j = int(np.where(low, neg_err, np.inf).argmin())
        gap = neg_err[i] - neg_err[j]
        if gap <= tol:
            break
        ki = cache.row(i)
        kj = cache.row(j)
        eta = cache.diag[i] + cache.diag[j] - 2.0 * ki[j]
        if eta <= 1e-12:
            eta = 1e-12
        aj_old, ai_old = alpha[j], alpha[i]
        if y[i] != y[j]:
            lo, hi = max(0.0, aj_old - ai_old), min(c, c + aj_old - ai_old)
        else:
            lo, hi = max(0.0, ai_old + aj_old - c), min(c, ai_old + aj_old)
        aj = np.clip(aj_old + y[j] * (err[i] - err[j]) / eta, lo, hi)
        ai = ai_old + y[i] * y[j] * (aj_old - aj)
        alpha[i], alpha[j] = ai, aj
        err += (ai - ai_old) * y[i] * ki + (aj - aj_old) * y[j] * kj
        iterations += 1
        if iterations % check_every == 0:
            objective_trace.append(dual_objective())

    objective_trace.append(dual_objective())
    if gap > tol:
        raise ConvergenceError(
            f"SMO hit the {max_iter}-iteration cap with KKT gap {gap:.3e} > tol {tol:.3e}",
            violation=float(gap),
        )
    log.debug(
        "SMO converged: n=%d iterations=%d gap=%.3e objective=%.6f",
        n,
        iterations,
        gap,
        objective_trace[-1],
    )

    up = np.where(pos, alpha < c - 1e-12, alpha > 1e-12)
    low = np.where(pos, alpha > 1e-12, alpha < c - 1e-12)
    free = (alpha > 1e-12) & (alpha < c - 1e-12)
    if free.any():
        bias = float(np.mean(-err[free]))
    else:
        neg_err = -err
        m_up = np.where(up, neg_err, -np.inf).max()
        m_low = np.where(low, neg_err, np.inf).min()
        bias = float((m_up + m_low) / 2.0)

    support = alpha > 1e-12
    duals = alpha[support] * y[support]
    # enforce the equality constraint exactly against accumulated rounding
    duals -= duals.sum() / duals.size
    model = SvmModel(
        kernel=kernel,
        support_vectors=xs[support],
        duals=duals,
        bias=bias,
        c=c,
        training_meta={
            "iterations": iterations,
            "final_gap": float(gap),
            "n_support": int(support.sum()),
            "tol": tol,
        },
        diagnostics=SmoDiagnostics(
            iterations=iterations,
            final_gap=float(gap),
            objective_trace=objective_trace,
            alpha=alpha,
            support_idx=np.flatnonzero(support),
        ),
    )
    return model


def decision_function(model: SvmModel, xs: np.ndarray) -> np.ndarray:
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim == 1:
        xs = xs[None, :]
    if xs.shape[1] != model.support_vectors.shape[1]:
        raise ValidationError(
            f"expected {model.support_vectors.shape[1]} features, got {xs.shape[1]}"
        )
    return kernel_matrix(model.kernel, xs, model.support_vectors) @ model.duals + model.bias


def predict_svm(model: SvmModel, x: np.ndarray) -> tuple[int, float]:
    """Class in {0,1} plus the raw decision value; zero maps to class 0."""
    value = float(decision_function(model, np.asarray(x))[0])
    return (1 if value > 0 else 0), value


def predict_labels(model: SvmModel, xs: np.ndarray) -> np.ndarray:
    return (decision_function(model, xs) > 0).astype(np.int64)


def kkt_violations(
    model: SvmModel, features: np.ndarray, labels: np.ndarray
) -> dict[str, float]:
    """Max KKT violation per dual-variable category over a training set.

    Requires the model's attached diagnostics (full alpha vector).
    """
    if model.diagnostics is None:
        raise ValidationError("model has no attached SMO diagnostics")
    alpha = model.diagnostics.alpha
    y = np.asarray(labels, dtype=np.float64)
    yf = y * decision_function(model, features)
    at_zero = alpha <= 1e-12
    at_c = alpha >= model.c - 1e-12
    free = ~at_zero & ~at_c
    return {
        "zero": float(np.maximum(1.0 - yf[at_zero], 0.0).max(initial=0.0)),
        "free": float(np.abs(yf[free] - 1.0).max(initial=0.0)),
        "bound": float(np.maximum(yf[at_c] - 1.0, 0.0).max(initial=0.0)),
    }


def model_to_json(model: SvmModel) -> str:
    payload = {
        "format": "qncd-svm/1",
        "kernel": {
            "kind": model.kernel.kind,
            "degree": model.kernel.degree,
            "scale": model.kernel.scale,
            "offset": model.kernel.offset,
            "gamma": model.kernel.gamma,
        },
        "c": model.c,
        "bias": model.bias,
        "duals": model.duals.tolist(),
        "support_vectors": model.support_vectors.tolist(),
        "feature_mode": model.feature_mode,
        "training_meta": model.training_meta,
    }
    return json.dumps(payload)


def model_from_json(text: str) -> SvmModel:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"not a valid SVM model file: {exc}") from exc
    if payload.get("format") != "qncd-svm/1":
        raise ValidationError("not a qncd SVM model file")
    k = payload["kernel"]
    kernel = KernelSpec(
        kind=k["kind"], degree=k["degree"], scale=k["scale"], offset=k["offset"], gamma=k["gamma"]
    )
    return SvmModel(
        kernel=kernel,
        support_vectors=np.asarray(payload["support_vectors"], dtype=np.float64),
        duals=np.asarray(payload["duals"], dtype=np.float64),
        bias=float(payload["bias"]),
        c=float(payload["c"]),
        feature_mode=payload["feature_mode"],
        training_meta=payload["training_meta"],
    )
