"""Random hyperparameter search with successive-halving pruning.

Rungs sit at 1/4, 1/2, and the full epoch budget; after each of the first
two rungs only the top third of trials (by best validation accuracy) keeps
training. Trials are resumable Trainer instances, so survivors continue from
their checkpoints rather than retraining.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError
from ..seeds import derive_seed
from .mlp import MlpConfig
from .model import AGG_ATTENTION, MlpClassifier, RnnClassifier, RnnConfig
from .train import DEFAULT_BATCH_SIZE, DEFAULT_LR, DEFAULT_PATIENCE, Trainer

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MlpSearchSpace:
    activations: tuple[str, ...] = ("relu", "sigmoid", "tanh")
    layer_range: tuple[int, int] = (2, 6)
    width_range: tuple[int, int] = (1, 512)
    dropout: tuple[float, ...] = (0.0, 0.2, 0.5)
    weight_decay: tuple[float, ...] = (0.0, 1e-4, 1e-3)

    def sample(self, rng: np.random.Generator, input_shape) -> MlpConfig:
        input_dim = int(np.prod(input_shape))
        n_layers = int(rng.integers(self.layer_range[0], self.layer_range[1] + 1))
        width = int(rng.integers(self.width_range[0], self.width_range[1] + 1))
        act = str(rng.choice(self.activations))
        return MlpConfig(
            (input_dim, *([width] * n_layers), 2),
            tuple([act] * n_layers),
            dropout_prob=float(rng.choice(self.dropout)),
            weight_decay=float(rng.choice(self.weight_decay)),
        )

    def make_classifier(self, config) -> MlpClassifier:
        return MlpClassifier(config)


@dataclass(frozen=True)
class RnnSearchSpace:
    cell: str
    bidirectional: bool
    aggregation: str
    layer_range: tuple[int, int] = (1, 4)
    hidden_range: tuple[int, int] = (1, 512)
    att_range: tuple[int, int] = (1, 512)
    dropout: tuple[float, ...] = (0.0, 0.2, 0.5)
    weight_decay: tuple[float, ...] = (0.0, 1e-4, 1e-3)

    def sample(self, rng: np.random.Generator, input_shape) -> RnnConfig:
        features = int(input_shape[-1])
        layers = int(rng.integers(self.layer_range[0], self.layer_range[1] + 1))
        hidden = int(rng.integers(self.hidden_range[0], self.hidden_range[1] + 1))
        att = None
        if self.aggregation == AGG_ATTENTION:
            att = int(rng.integers(self.att_range[0], self.att_range[1] + 1))
        return RnnConfig.build(
            cell=self.cell,
            input_dim=features,
            hidden_dim=hidden,
            layers=layers,
            bidirectional=self.bidirectional,
            aggregation=self.aggregation,
            att_dim=att,
            head_hidden=(hidden,),
            dropout_prob=float(rng.choice(self.dropout)),
            weight_decay=float(rng.choice(self.weight_decay)),
            input_gain=float(features),
        )

    def make_classifier(self, config) -> RnnClassifier:
        return RnnClassifier(config)


@dataclass
class Trial:
    index: int
    config: dict
    best_val_accuracy: float = float("nan")
    epochs_trained: int = 0
    pruned_at_rung: int | None = None
    winner: bool = False


@dataclass
class SearchResult:
    best_index: int
    best_config: object
    best_params: dict
    best_report: object
    trials: list[Trial] = field(default_factory=list)


def hyperparameter_search(
    space,
    budget: int,
    seed: int,
    train_data,
    val_data,
    epoch_budget: int = 40,
    batch_size: int = DEFAULT_BATCH_SIZE,
    lr: float = DEFAULT_LR,
    patience: int = DEFAULT_PATIENCE,
) -> SearchResult:
    """Sample ``budget`` configs and race them through successive halving.

    Trials are ranked by the validation accuracy of their best-risk epoch;
    ties resolve toward the lower trial index. The winner's best-epoch
    weights and report come back along with the full trial log.
    """
    if budget < 1:
        raise ValidationError("budget must be >= 1")
    rng = np.random.default_rng(derive_seed(seed, 201))
    input_shape = np.asarray(train_data[0]).shape[1:]
    configs = [space.sample(rng, input_shape) for _ in range(budget)]
    trainers: dict[int, Trainer] = {}
    trials = [Trial(index=i, config=c.to_dict()) for i, c in enumerate(configs)]
    for i, config in enumerate(configs):
        trainers[i] = Trainer(
            space.make_classifier(config),
            train_data,
            val_data,
            seed=derive_seed(seed, 202, i),
            batch_size=batch_size,
            lr=lr,
            patience=patience,
        )
        trainers[i].report.epoch_cap = epoch_budget
    rungs = [
        max(1, math.ceil(epoch_budget / 4)),
        max(1, math.ceil(epoch_budget / 2)),
        epoch_budget,
    ]
    survivors = list(range(budget))
    for rung_idx, target in enumerate(rungs):
        for i in survivors:
            trainer = trainers[i]
            if trainer.epoch < target:
                trainer.run_epochs(target - trainer.epoch)
            trials[i].best_val_accuracy = trainer.report.best_val_accuracy
            trials[i].epochs_trained = trainer.epoch
        if rung_idx < len(rungs) - 1 and len(survivors) > 1:
            ranked = sorted(survivors, key=lambda i: (-trials[i].best_val_accuracy, i))
            keep = max(1, math.ceil(len(survivors) / 3))
            for i in ranked[keep:]:
                trials[i].pruned_at_rung = rung_idx
                del trainers[i]
            survivors = sorted(ranked[:keep])
            log.info("rung %d at %d epochs: %d trials survive", rung_idx, target, len(survivors))
    best = min(survivors, key=lambda i: (-trials[i].best_val_accuracy, i))
    trials[best].winner = True
    winner = trainers[best]
    return SearchResult(
        best_index=best,
        best_config=configs[best],
        best_params=winner.best_params,
        best_report=winner.report,
        trials=trials,
    )
