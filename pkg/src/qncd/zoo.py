"""The model roster: canonical names, feature modes, and default configs.

Names ending in ``-single`` consume only the final population distribution;
all other models read the full 16-row sequence (flattened for SVM/MLP, kept
as a sequence for recurrent models).
"""

from __future__ import annotations

from dataclasses import dataclass

from .dataset import FEATURE_FINAL, FEATURE_FULL
from .errors import ValidationError
from .neural.mlp import MlpConfig
from .neural.model import AGG_ATTENTION, AGG_LAST, AGG_MAXPOOL, RnnConfig
from .neural.search import MlpSearchSpace, RnnSearchSpace
from .svm import KernelSpec


@dataclass(frozen=True)
class ModelSpec:
    name: str
    kind: str  # svm | mlp | rnn
    feature_mode: str
    cell: str | None = None
    bidirectional: bool = False
    aggregation: str | None = None


MODEL_ROSTER = (
    ModelSpec("m-SVM-single", "svm", FEATURE_FINAL),
    ModelSpec("m-MLP-single", "mlp", FEATURE_FINAL),
    ModelSpec("m-SVM", "svm", FEATURE_FULL),
    ModelSpec("m-MLP", "mlp", FEATURE_FULL),
    ModelSpec("m-GRU", "rnn", FEATURE_FULL, cell="gru", aggregation=AGG_LAST),
    ModelSpec("m-LSTM", "rnn", FEATURE_FULL, cell="lstm", aggregation=AGG_LAST),
    ModelSpec("m-biGRU", "rnn", FEATURE_FULL, cell="gru", bidirectional=True, aggregation=AGG_LAST),
    ModelSpec("m-biLSTM", "rnn", FEATURE_FULL, cell="lstm", bidirectional=True, aggregation=AGG_LAST),
    ModelSpec("m-biGRU-att", "rnn", FEATURE_FULL, cell="gru", bidirectional=True, aggregation=AGG_ATTENTION),
    ModelSpec("m-biLSTM-att", "rnn", FEATURE_FULL, cell="lstm", bidirectional=True, aggregation=AGG_ATTENTION),
    ModelSpec("m-biGRU-max", "rnn", FEATURE_FULL, cell="gru", bidirectional=True, aggregation=AGG_MAXPOOL),
    ModelSpec("m-biLSTM-max", "rnn", FEATURE_FULL, cell="lstm", bidirectional=True, aggregation=AGG_MAXPOOL),
)

MODEL_NAMES = tuple(m.name for m in MODEL_ROSTER)
_BY_KEY = {m.name.lower(): m for m in MODEL_ROSTER}


def resolve(name: str) -> ModelSpec:
    spec = _BY_KEY.get(name.lower())
    if spec is None:
        raise ValidationError(f"unknown model {name!r}; choose one of {', '.join(MODEL_NAMES)}")
    return spec


def median_squared_distance(features, limit: int = 512) -> float:
    """Median pairwise squared distance over (at most) the first ``limit`` rows."""
    import numpy as np

    xs = np.asarray(features, dtype=float).reshape(len(features), -1)[:limit]
    sq = ((xs[:, None, :] - xs[None, :, :]) ** 2).sum(axis=2)
    upper = sq[np.triu_indices(len(xs), k=1)]
    med = float(np.median(upper))
    return med if med > 0 else 1.0


def svm_config_grid(features) -> list[tuple[KernelSpec, float]]:
    """Deterministic (kernel, C) grid, strongest defaults first.

    RBF bandwidths come from the median pairwise distance of the training
    features: population vectors live near the simplex, so distances are
    O(1/d) and fixed 1/p-style gammas would make the kernel nearly constant.
    """
    med = median_squared_distance(features)
    kernels = [
        KernelSpec("rbf", gamma=1.0 / med),
        KernelSpec("rbf", gamma=4.0 / med),
        KernelSpec("rbf", gamma=0.25 / med),
        KernelSpec("poly", degree=2, scale=1.0, offset=1.0),
        KernelSpec("poly", degree=3, scale=1.0, offset=1.0),
        KernelSpec("poly", degree=4, scale=1.0, offset=1.0),
        KernelSpec("linear"),
    ]
    return [(kernel, c) for c in (10.0, 1.0, 100.0, 0.1) for kernel in kernels]


def default_mlp_config(mspec: ModelSpec, n_features: int) -> MlpConfig:
    return MlpConfig(
        (n_features, 128, 128, 2),
        ("relu", "relu"),
        dropout_prob=0.2,
        weight_decay=1e-4,
    )


def default_rnn_config(mspec: ModelSpec, n_features: int) -> RnnConfig:
    return RnnConfig.build(
        cell=mspec.cell,
        input_dim=n_features,
        hidden_dim=64,
        layers=1,
        bidirectional=mspec.bidirectional,
        aggregation=mspec.aggregation,
        att_dim=64 if mspec.aggregation == AGG_ATTENTION else None,
        head_hidden=(64,),
        dropout_prob=0.2,
        weight_decay=1e-4,
        input_gain=float(n_features),
    )


def search_space(mspec: ModelSpec, nm_short_time: bool = False):
    """Family search space; the NM short-time variant widens the layer range."""
    if mspec.kind == "mlp":
        return MlpSearchSpace()
    if mspec.kind == "rnn":
        return RnnSearchSpace(
            cell=mspec.cell,
            bidirectional=mspec.bidirectional,
            aggregation=mspec.aggregation,
            layer_range=(1, 6) if nm_short_time else (1, 4),
        )
    raise ValidationError(f"{mspec.name} has no neural search space")
