"""Temporal knowledge graph forecasting with graph Neural ODEs and jump events."""
from .data import (
    QuadrupleStore,
    augment_reciprocal,
    generate_synthetic_tkg,
    inductive_subset,
    load_dataset,
    parse_quadruples,
)
from .encoder import EncoderConfig, GraphHistory, infer_long_horizon, infer_representation
from .estimator import TKGForecaster
from .evaluation import FilterSetting, MetricsReport, evaluate, rank_query
from .exceptions import (
    ConfigError,
    ContractError,
    LeakageError,
    NumericError,
    ParseError,
    ShapeError,
)
from .model import ModelParams, init_params
from .ode import SolverConfig
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "QuadrupleStore",
    "augment_reciprocal",
    "generate_synthetic_tkg",
    "inductive_subset",
    "load_dataset",
    "parse_quadruples",
    "EncoderConfig",
    "GraphHistory",
    "infer_long_horizon",
    "infer_representation",
    "TKGForecaster",
    "FilterSetting",
    "MetricsReport",
    "evaluate",
    "rank_query",
    "ConfigError",
    "ContractError",
    "LeakageError",
    "NumericError",
    "ParseError",
    "ShapeError",
    "ModelParams",
    "init_params",
    "SolverConfig",
    "TrainConfig",
    "train",
]
