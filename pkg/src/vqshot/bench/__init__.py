"""Benchmark harness: tasks, TOML configuration, multi-seed runner, CLI."""

from .config import TASKS, BenchConfig, ConfigError, load_config
from .runner import (
    AGGREGATE_HEADER,
    METRIC_COLUMNS,
    TRACE_HEADER,
    aggregate_metric,
    build_task,
    run_experiment,
    worker_count,
    write_trace,
)
from .tasks import (
    IrisTask,
    RegressionTask,
    VqeTfimTask,
    load_iris_csv,
    normalize_features,
    tfim_ground_energy,
    tfim_observable,
    worst_case_error_rate,
)

__all__ = [
    "TASKS",
    "BenchConfig",
    "ConfigError",
    "load_config",
    "AGGREGATE_HEADER",
    "METRIC_COLUMNS",
    "TRACE_HEADER",
    "aggregate_metric",
    "build_task",
    "run_experiment",
    "worker_count",
    "write_trace",
    "IrisTask",
    "RegressionTask",
    "VqeTfimTask",
    "load_iris_csv",
    "normalize_features",
    "tfim_ground_energy",
    "tfim_observable",
    "worst_case_error_rate",
]
