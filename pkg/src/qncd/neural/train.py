"""Mini-batch supervised training with Adam and validation-risk early stopping.

The reported risks are plain cross entropy; the weight-decay penalty enters
the optimizer's gradients but is not folded into the logged numbers. The
weights returned are always the ones from the epoch with the lowest recorded
validation risk.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericalError, ValidationError
from ..seeds import derive_seed
from .core import accuracy_from_probs
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 16
DEFAULT_LR = 1e-3
DEFAULT_EPOCH_CAP = 200
DEFAULT_PATIENCE = 10


@dataclass
class TrainReport:
    config: dict
    seed: int
    batch_size: int
    lr: float
    epoch_cap: int
    patience: int
    epochs_run: int = 0
    best_epoch: int = -1
    stopping_epoch: int = 0
    train_risk: list[float] = field(default_factory=list)
    val_risk: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    best_val_risk: float = float("inf")
    best_val_accuracy: float = float("nan")
    test_accuracy: float | None = None
    wall_clock_seconds: float = 0.0
    aborted: str | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "seed": self.seed,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "epoch_cap": self.epoch_cap,
            "patience": self.patience,
            "epochs_run": self.epochs_run,
            "best_epoch": self.best_epoch,
            "stopping_epoch": self.stopping_epoch,
            "train_risk": self.train_risk,
            "val_risk": self.val_risk,
            "val_accuracy": self.val_accuracy,
            "best_val_risk": self.best_val_risk,
            "best_val_accuracy": self.best_val_accuracy,
            "test_accuracy": self.test_accuracy,
            "wall_clock_seconds": self.wall_clock_seconds,
            "aborted": self.aborted,
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @staticmethod
    def from_dict(d: dict) -> "TrainReport":
        report = TrainReport(
            config=d["config"],
            seed=d["seed"],
            batch_size=d["batch_size"],
            lr=d["lr"],
            epoch_cap=d["epoch_cap"],
            patience=d["patience"],
        )
        for key in (
            "epochs_run",
            "best_epoch",
            "stopping_epoch",
            "train_risk",
            "val_risk",
            "val_accuracy",
            "best_val_risk",
            "best_val_accuracy",
            "test_accuracy",
            "wall_clock_seconds",
            "aborted",
            "meta",
        ):
            if key in d:
                setattr(report, key, d[key])
        return report

    def epochs_csv(self) -> str:
        lines = ["epoch,train_risk,val_risk,val_accuracy"]
        for e, (tr, vr, va) in enumerate(zip(self.train_risk, self.val_risk, self.val_accuracy)):
            lines.append(f"{e},{tr:.6f},{vr:.6f},{va:.3f}")
        return "\n".join(lines) + "\n"


def _clone(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: p.copy() for k, p in params.items()}


class Trainer:
    """Resumable training loop; hyperparameter search drives it rung by rung."""

    def __init__(
        self,
        classifier,
        train_data,
        val_data,
        seed: int,
        batch_size: int = DEFAULT_BATCH_SIZE,
        lr: float = DEFAULT_LR,
        patience: int = DEFAULT_PATIENCE,
    ):
        self.classifier = classifier
        self.x_train, self.y_train = train_data
        self.x_val, self.y_val = val_data
        if len(self.x_train) == 0 or len(self.x_val) == 0:
            raise ValidationError("training and validation sets must be nonempty")
        self.batch_size = batch_size
        self.lr = lr
        self.patience = patience
        self.seed = seed
        self.params = classifier.init_params(np.random.default_rng(derive_seed(seed, 101)))
        self.moments = AdamState.zeros_like(self.params)
        self._shuffle_rng = np.random.default_rng(derive_seed(seed, 102))
        self._dropout_rng = np.random.default_rng(derive_seed(seed, 103))
        self.report = TrainReport(
            config=classifier.config.to_dict(),
            seed=seed,
            batch_size=batch_size,
            lr=lr,
            epoch_cap=0,
            patience=patience,
        )
        self.best_params = _clone(self.params)
        self._since_best = 0
        self.stopped = False

    @property
    def epoch(self) -> int:
        return self.report.epochs_run

    def _evaluate(self, xs, ys) -> tuple[float, float]:
        probs = self.classifier.predict_proba(self.params, xs)
        picked = np.clip(probs[np.arange(len(ys)), ys], 1e-300, None)
        return float(-np.log(picked).mean()), accuracy_from_probs(probs, ys)

    def run_epochs(self, n_epochs: int) -> None:
        """Train up to n_epochs more, honoring patience-based early stopping."""
        if self.stopped:
            return
        t0 = time.perf_counter()
        n = len(self.x_train)
        decay = self.classifier.weight_decay
        for _ in range(n_epochs):
            order = self._shuffle_rng.permutation(n)
            total = 0.0
            try:
                for k in range(0, n, self.batch_size):
                    batch = order[k : k + self.batch_size]
                    loss, grads = self.classifier.loss_and_grad(
                        self.params,
                        self.x_train[batch],
                        self.y_train[batch],
                        train_mode=True,
                        rng=self._dropout_rng,
                    )
                    if not np.isfinite(loss):
                        raise NumericalError(f"non-finite training loss at epoch {self.epoch}")
                    total += loss * len(batch)
                    adam_step(self.params, grads, self.moments, lr=self.lr, weight_decay=decay)
            except NumericalError as exc:
                log.warning("aborting training: %s", exc)
                self.report.aborted = str(exc)
                self.stopped = True
                break
            self.report.train_risk.append(total / n)
            val_risk, val_acc = self._evaluate(self.x_val, self.y_val)
            self.report.val_risk.append(val_risk)
            self.report.val_accuracy.append(val_acc)
            self.report.epochs_run += 1
            if val_risk < self.report.best_val_risk:
                self.report.best_val_risk = val_risk
                self.report.best_val_accuracy = val_acc
                self.report.best_epoch = self.epoch - 1
                self.best_params = _clone(self.params)
                self._since_best = 0
            else:
                self._since_best += 1
                if self._since_best >= self.patience:
                    self.stopped = True
                    break
        self.report.stopping_epoch = self.report.epochs_run
        self.report.wall_clock_seconds += time.perf_counter() - t0


def train(
    classifier,
    train_data,
    val_data,
    batch_size: int = DEFAULT_BATCH_SIZE,
    lr: float = DEFAULT_LR,
    epoch_cap: int = DEFAULT_EPOCH_CAP,
    patience: int = DEFAULT_PATIENCE,
    seed: int = 0,
) -> tuple[dict[str, np.ndarray], TrainReport]:
    """Train to the epoch cap or until validation risk stalls for ``patience``.

    Returns the best-validation weights and the full report. Identical
    arguments produce identical reports and weights.
    """
    trainer = Trainer(
        classifier, train_data, val_data, seed=seed, batch_size=batch_size, lr=lr, patience=patience
    )
    trainer.report.epoch_cap = epoch_cap
    while not trainer.stopped and trainer.epoch < epoch_cap:
        trainer.run_epochs(min(8, epoch_cap - trainer.epoch))
    return trainer.best_params, trainer.report
