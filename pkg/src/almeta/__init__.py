"""End-to-end meta active learning: a policy-gradient-trained model that
selects which pool items to label and predicts held-out labels with an
attention-based matching function."""

from . import autodiff
from .episodes import Episode, Item, TaskSpec
from .model import ModelConfig, init_params
from .nn import ParamStore
from .optim import AdamState, adam_step
from .training import ActiveSession, Rollout, TrainConfig, compute_gae, evaluate, train, unroll

__version__ = "0.1.0"

__all__ = [
    "ActiveSession",
    "AdamState",
    "Episode",
    "Item",
    "ModelConfig",
    "ParamStore",
    "Rollout",
    "TaskSpec",
    "TrainConfig",
    "adam_step",
    "autodiff",
    "compute_gae",
    "evaluate",
    "init_params",
    "train",
    "unroll",
]
