"""Multi-seed experiment execution and learning-curve emission.

One optimization run produces one trace CSV; each (optimizer, metric)
pair additionally gets an aggregate CSV with the median and quartiles of
the metric resampled onto a common cumulative-shot grid. All output is
deterministic for a fixed config and seed count, byte for byte, however
many worker threads execute the runs.
"""

from __future__ import annotations

import os
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from ..optimizers import METHODS, run_optimizer
from .config import BenchConfig
from .tasks import IrisTask, RegressionTask, VqeTfimTask

__all__ = ["TRACE_HEADER", "AGGREGATE_HEADER", "METRIC_COLUMNS",
           "build_task", "write_trace", "aggregate_metric",
           "worker_count", "run_experiment"]

TRACE_HEADER = "iter,s_tot,train_loss,test_loss,train_err,test_err,mean_s,m"
AGGREGATE_HEADER = "s_grid,median,q1,q3"
METRIC_COLUMNS = ("train_loss", "test_loss", "train_err", "test_err")

_GRID_POINTS = 200


# ====== Task construction ======


def build_task(cfg: BenchConfig, seed: int, noise_on: bool):
    """Construct a fresh task instance for one run.

    Each run gets its own instance: noisy programs write error insertions
    into their op tables during sampling, and dataset tasks carry
    per-run batch state, so sharing one task across runs (or threads)
    would couple them.
    """
    model = cfg.noise if noise_on else None
    t = cfg.task
    if cfg.task_kind == "vqe-tfim":
        return VqeTfimTask(
            t["n_qubits"], t["depth"], t["coupling"], t["field"],
            allocation=t["allocation"], noise=model,
        )
    if cfg.task_kind == "regression":
        features = None
        if t["features_csv"]:
            features = RegressionTask.load_features(
                t["features_csv"], t["n_qubits"], t["n_train"] + t["n_test"]
            )
        return RegressionTask(
            t["n_qubits"], t["depth"], n_train=t["n_train"],
            n_test=t["n_test"], seed=seed, features=features, noise=model,
        )
    return IrisTask(
        t["depth"], n_train=t["n_train"], n_test=t["n_test"],
        epsilon=t["epsilon"], seed=seed, noise=model,
        data_path=t["data_csv"] or None,
    )


# ====== Trace and aggregate files ======


def _field(value) -> str:
    return "" if value is None else repr(value)


def write_trace(path, trace) -> None:
    """One CSV row per iteration; metrics the task does not report stay
    empty. repr-formatted floats keep round-trips exact."""
    lines = [TRACE_HEADER]
    for r in trace.records:
        lines.append(",".join((
            repr(int(r.iteration)),
            repr(int(r.s_tot)),
            _field(r.train_loss),
            _field(r.test_loss),
            _field(r.train_err),
            _field(r.test_err),
            repr(float(r.mean_s)),
            repr(int(r.m)),
        )))
    Path(path).write_text("\n".join(lines) + "\n")


def aggregate_metric(traces, metric: str):
    """Median and quartiles of one metric over several runs, resampled
    onto a geometric grid of cumulative shot counts by last-value
    carry-forward (a trace's first value extends left of its first
    record). Returns (grid, median, q1, q3), or None when any run lacks
    the metric."""
    series = []
    for trace in traces:
        if not trace.records:
            return None
        values = [getattr(r, metric) for r in trace.records]
        if any(v is None for v in values):
            return None
        series.append((
            np.array([r.s_tot for r in trace.records], dtype=np.float64),
            np.array(values, dtype=np.float64),
        ))
    lo = min(s[0] for s, _ in series)
    hi = max(s[-1] for s, _ in series)
    grid = np.geomspace(lo, hi, _GRID_POINTS)
    resampled = np.empty((len(series), _GRID_POINTS))
    for row, (s, values) in enumerate(series):
        idx = np.searchsorted(s, grid, side="right") - 1
        resampled[row] = values[np.clip(idx, 0, len(s) - 1)]
    return (
        grid,
        np.median(resampled, axis=0),
        np.percentile(resampled, 25, axis=0),
        np.percentile(resampled, 75, axis=0),
    )


def write_aggregate(path, grid, median, q1, q3) -> None:
    lines = [AGGREGATE_HEADER]
    for k in range(grid.shape[0]):
        lines.append(",".join((
            repr(float(grid[k])),
            repr(float(median[k])),
            repr(float(q1[k])),
            repr(float(q3[k])),
        )))
    Path(path).write_text("\n".join(lines) + "\n")


# ====== Experiment execution ======


def worker_count(n_jobs: int) -> int:
    """Worker threads to use: the CPU count, capped by BENCH_THREADS and
    by the number of jobs."""
    cap = os.cpu_count() or 1
    env = os.environ.get("BENCH_THREADS")
    if env is not None:
        try:
            limit = int(env)
        except ValueError:
            raise ValueError(
                f"BENCH_THREADS must be an integer, got {env!r}"
            ) from None
        if limit < 1:
            raise ValueError(f"BENCH_THREADS must be >= 1, got {limit}")
        cap = min(cap, limit)
    return max(1, min(n_jobs, cap))


def run_experiment(cfg: BenchConfig, out_dir, n_seeds: int, *,
                   methods=None, noise_override: str | None = None):
    """Run every (optimizer, seed) pair and write trace plus aggregate
    files into out_dir. Returns the list of written paths.

    Seeds are 0..n_seeds-1; every method sees the same seeds, hence the
    same dataset splits and initial parameters. `noise_override` ("on" /
    "off") takes precedence over the config's noise toggle.
    """
    if n_seeds < 1:
        raise ValueError("need at least one seed")
    methods = tuple(methods) if methods is not None else METHODS
    for method in methods:
        if method not in METHODS:
            raise ValueError(
                f"unknown method {method!r}; expected one of {METHODS}"
            )
    if noise_override not in (None, "on", "off"):
        raise ValueError("noise_override must be 'on' or 'off'")
    noise_on = (
        cfg.noise_enabled if noise_override is None
        else noise_override == "on"
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    jobs = [(method, seed) for method in methods for seed in range(n_seeds)]

    def execute(job):
        method, seed = job
        task = build_task(cfg, seed, noise_on)
        trace = run_optimizer(task, method, cfg.hyper_for(method), seed)
        trace.metadata["task"] = cfg.task_kind
        trace.metadata["noise"] = noise_on
        return trace

    workers = worker_count(len(jobs))
    if workers == 1:
        traces = [execute(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(execute, jobs))

    written = []
    by_method = defaultdict(list)
    for (method, seed), trace in zip(jobs, traces):
        path = out / f"{cfg.task_kind}_{method}_seed{seed}.csv"
        write_trace(path, trace)
        written.append(path)
        by_method[method].append(trace)
    for method in methods:
        for metric in METRIC_COLUMNS:
            agg = aggregate_metric(by_method[method], metric)
            if agg is None:
                continue
            path = out / f"{cfg.task_kind}_{method}_agg_{metric}.csv"
            write_aggregate(path, *agg)
            written.append(path)
    return written
