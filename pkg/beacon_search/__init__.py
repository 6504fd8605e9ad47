from .algorithms import ReplicateError, SearchState, build_algorithm, run_replicate
from .config import ConfigError, ExperimentConfig, load_config
from .harness import AggregateReport, aggregate, load_traces, run_experiment
from .traces import RunTrace, TraceRow

__all__ = [
    "AggregateReport",
    "ConfigError",
    "ExperimentConfig",
    "ReplicateError",
    "RunTrace",
    "SearchState",
    "TraceRow",
    "aggregate",
    "build_algorithm",
    "load_config",
    "load_traces",
    "run_experiment",
    "run_replicate",
]
