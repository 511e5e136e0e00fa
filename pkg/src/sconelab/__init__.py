"""Desk-scale open-world training lab: energy-margin OOD objectives with
temporal confidence regularization on synthetic drifting streams."""

from .config import ExperimentSpec, default_run_config, default_spec, parse_config
from .losses import Hyperparams, LossBreakdown, MultiplierState
from .metrics import MetricsRecord, accuracy, fit_threshold, fpr_at_tpr
from .model import ModelParams, OptimizerConfig, init_params
from .scores import ScoreKind, TemporalState
from .stream import DomainSnapshot, StreamConfig, WildBatch
from .trainer import METHODS, RunConfig, run_stream

__all__ = [
    "ExperimentSpec",
    "default_run_config",
    "default_spec",
    "parse_config",
    "Hyperparams",
    "LossBreakdown",
    "MultiplierState",
    "MetricsRecord",
    "accuracy",
    "fit_threshold",
    "fpr_at_tpr",
    "ModelParams",
    "OptimizerConfig",
    "init_params",
    "ScoreKind",
    "TemporalState",
    "DomainSnapshot",
    "StreamConfig",
    "WildBatch",
    "METHODS",
    "RunConfig",
    "run_stream",
]
