"""Meta-policy over recompute decisions, horizons, LQR weights and input noise."""

from .controller import ControlStep, MetaController
from .distributions import (
    MixtureTerms,
    bernoulli_log_prob,
    gaussian_log_prob,
    gpd_log_prob,
    gpd_sample,
    mixture_log_prob,
)
from .meta_policy import Decision, LogProbBatch, MetaPolicy, horizon_bias, recompute_bias
from .mlp import Mlp, RunningNormalizer
from .params import PolicyMode, PolicyParams
from .state import FEATURE_DIM, Action, AugmentedState, transition_bookkeeping

__all__ = [
    "ControlStep",
    "MetaController",
    "MixtureTerms",
    "bernoulli_log_prob",
    "gaussian_log_prob",
    "gpd_log_prob",
    "gpd_sample",
    "mixture_log_prob",
    "Decision",
    "LogProbBatch",
    "MetaPolicy",
    "horizon_bias",
    "recompute_bias",
    "Mlp",
    "RunningNormalizer",
    "PolicyMode",
    "PolicyParams",
    "FEATURE_DIM",
    "Action",
    "AugmentedState",
    "transition_bookkeeping",
]
