"""From-scratch feed-forward and recurrent classifiers with supervised training."""

from .core import accuracy, cross_entropy, softmax
from .mlp import MlpConfig
from .model import MlpClassifier, RnnClassifier, RnnConfig
from .optim import AdamState, adam_step
from .gradcheck import gradient_check
from .train import TrainReport, Trainer, train
from .search import hyperparameter_search

__all__ = [
    "accuracy",
    "cross_entropy",
    "softmax",
    "MlpConfig",
    "MlpClassifier",
    "RnnClassifier",
    "RnnConfig",
    "AdamState",
    "adam_step",
    "gradient_check",
    "TrainReport",
    "Trainer",
    "train",
    "hyperparameter_search",
]
