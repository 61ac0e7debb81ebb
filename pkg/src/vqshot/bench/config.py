"""TOML run configuration for the benchmark harness.

A config file has four sections — [task], [optimizer], [schedules] and
[noise] — all optional except that [optimizer] must set s_max (there is
no sensible universal default for a shot budget). Every other key has a
per-task default matching the published benchmark settings. Unknown keys
and out-of-range values are collected and reported together, before any
run starts.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ..noise import NoiseModel
from ..optimizers import Hyperparams

__all__ = ["TASKS", "BenchConfig", "ConfigError", "load_config",
           "resolve_config"]

TASKS = ("vqe-tfim", "regression", "iris")

_SECTIONS = ("task", "optimizer", "schedules", "noise")

# ====== Per-task defaults ======

_TASK_DEFAULTS = {
    "vqe-tfim": {
        "kind": "vqe-tfim",
        "n_qubits": 6,
        "depth": 3,
        "coupling": 1.0,
        "field": 1.5,
        "allocation": "wds",
    },
    "regression": {
        "kind": "regression",
        "n_qubits": 4,
        "depth": 10,
        "n_train": 880,
        "n_test": 220,
        "features_csv": "",
    },
    "iris": {
        "kind": "iris",
        "depth": 4,
        "n_train": 120,
        "n_test": 30,
        "epsilon": 1e-2,
        "data_csv": "",
    },
}

_OPTIMIZER_DEFAULTS = {
    "s_max": None,  # mandatory
    "s_min": 4,
    "warmup_iters": 5,
    "adam_shots": 100,
    "s_cap": 0,  # 0 means "no cap"
    "thermo_init": 5.0,
    "precond_floor": 1e-8,
    "sq_grad_decay": 0.99,
    "stat_decay": 0.99,
    "g_scale": 1.0,
    "adam_beta1": 0.9,
    "adam_beta2": 0.99,
    "adam_eps": 1e-8,
}

_COMMON_SCHEDULES = {
    "beta_init": 10.0,
    "lr_start": 0.01,
    "lr_end": 0.001,
    "refine_lr_factor": 100.0,
}

_SCHEDULE_DEFAULTS = {
    "vqe-tfim": {
        **_COMMON_SCHEDULES,
        "burn_fraction": 0.8,
        "beta_burn_end": 1e4,
        "beta_refine_end": 1e4,
        "burn_exponent": 5.0,
        "refine_exponent": 5.0,
        "lr_exponent": 0.5,
        "adam_lr_exponent": 0.1,
        "m_start": 1,
        "m_end": 1,
        "m_exponent": 1.0,
        "ds_shots_start": 4,
        "ds_shots_end": 100,
        "ds_exponent": 10.0,
    },
    "regression": {
        **_COMMON_SCHEDULES,
        "burn_fraction": 0.5,
        "beta_burn_end": 5e3,
        "beta_refine_end": 1e4,
        "burn_exponent": 3.0,
        "refine_exponent": 3.0,
        "lr_exponent": 0.3,
        "adam_lr_exponent": 0.3,
        "m_start": 2,
        "m_end": 16,
        "m_exponent": 2.0,
        "ds_shots_start": 4,
        "ds_shots_end": 100,
        "ds_exponent": 2.0,
    },
    "iris": {
        **_COMMON_SCHEDULES,
        "burn_fraction": 0.5,
        "beta_burn_end": 1e4,
        "beta_refine_end": 5e4,
        "burn_exponent": 3.0,
        "refine_exponent": 3.0,
        "lr_exponent": 0.3,
        "adam_lr_exponent": 0.3,
        "m_start": 2,
        "m_end": 16,
        "m_exponent": 1.0,
        "ds_shots_start": 4,
        "ds_shots_end": 10,
        "ds_exponent": 3.0,
    },
}

_NOISE_DEFAULTS = {
    "vqe-tfim": {"enabled": False, "p1": 1e-3, "p2": 1e-2,
                 "exempt_multi_z": False},
    "regression": {"enabled": False, "p1": 1e-3, "p2": 1e-2,
                   "exempt_multi_z": False},
    "iris": {"enabled": True, "p1": 1e-3, "p2": 1e-2,
             "exempt_multi_z": False},
}


# ====== Config objects ======


class ConfigError(ValueError):
    """All configuration problems found, reported together."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class BenchConfig:
    """A fully resolved run configuration."""

    task_kind: str
    task: dict
    hyper: Hyperparams  # carries the annealed optimizer's learning-rate exponent
    adam_lr_exponent: float
    noise_enabled: bool
    noise: NoiseModel

    def hyper_for(self, method: str) -> Hyperparams:
        """Per-method view: the Adam baselines run a different
        learning-rate decay exponent than the annealed optimizer."""
        if method == "santaqlaus":
            return self.hyper
        return dataclasses.replace(
            self.hyper, lr_exponent=self.adam_lr_exponent
        )


# ====== Validation helpers ======


def _merge(section: str, table: dict, defaults: dict, errors: list) -> dict:
    merged = dict(defaults)
    for key, value in table.items():
        if key not in defaults:
            errors.append(f"[{section}] unknown key {key!r}")
            continue
        merged[key] = value
    return merged


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _check_number(errors, section, key, value, *, integer=False,
                  minimum=None, above=None, maximum=None):
    label = f"[{section}] {key}"
    if integer and not (isinstance(value, int) and not isinstance(value, bool)):
        errors.append(f"{label} must be an integer, got {value!r}")
        return False
    if not integer and not _is_number(value):
        errors.append(f"{label} must be a number, got {value!r}")
        return False
    if minimum is not None and value < minimum:
        errors.append(f"{label} must be >= {minimum}, got {value!r}")
        return False
    if above is not None and value <= above:
        errors.append(f"{label} must be > {above}, got {value!r}")
        return False
    if maximum is not None and value > maximum:
        errors.append(f"{label} must be <= {maximum}, got {value!r}")
        return False
    return True


def _check_str(errors, section, key, value, choices=None):
    label = f"[{section}] {key}"
    if not isinstance(value, str):
        errors.append(f"{label} must be a string, got {value!r}")
        return False
    if choices is not None and value not in choices:
        errors.append(f"{label} must be one of {choices}, got {value!r}")
        return False
    return True


def _check_bool(errors, section, key, value):
    if not isinstance(value, bool):
        errors.append(f"[{section}] {key} must be a boolean, got {value!r}")
        return False
    return True


def _validate_task(kind: str, task: dict, errors: list):
    if kind == "vqe-tfim":
        _check_number(errors, "task", "n_qubits", task["n_qubits"],
                      integer=True, minimum=2)
        _check_number(errors, "task", "depth", task["depth"],
                      integer=True, minimum=1)
        _check_number(errors, "task", "coupling", task["coupling"], above=0.0)
        _check_number(errors, "task", "field", task["field"], above=0.0)
        _check_str(errors, "task", "allocation", task["allocation"],
                   choices=("wds", "wrs"))
    elif kind == "regression":
        _check_number(errors, "task", "n_qubits", task["n_qubits"],
                      integer=True, minimum=2)
        _check_number(errors, "task", "depth", task["depth"],
                      integer=True, minimum=1)
        _check_number(errors, "task", "n_train", task["n_train"],
                      integer=True, minimum=1)
        _check_number(errors, "task", "n_test", task["n_test"],
                      integer=True, minimum=1)
        _check_str(errors, "task", "features_csv", task["features_csv"])
    else:
        _check_number(errors, "task", "depth", task["depth"],
                      integer=True, minimum=1)
        _check_number(errors, "task", "n_train", task["n_train"],
                      integer=True, minimum=1)
        _check_number(errors, "task", "n_test", task["n_test"],
                      integer=True, minimum=1)
        _check_number(errors, "task", "epsilon", task["epsilon"], minimum=0.0)
        _check_str(errors, "task", "data_csv", task["data_csv"])


# ====== Loading ======


def load_config(path, task_kind: str) -> BenchConfig:
    """Parse and resolve a TOML config file for the given task."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: {exc}"]) from None
    return resolve_config(raw, task_kind)


def resolve_config(raw: dict, task_kind: str) -> BenchConfig:
    """Merge raw tables over the task's defaults and validate everything,
    collecting all problems into a single ConfigError."""
    errors = []
    if task_kind not in TASKS:
        raise ConfigError(
            [f"unknown task {task_kind!r}; expected one of {TASKS}"]
        )
    for section in raw:
        if section not in _SECTIONS:
            errors.append(f"unknown section [{section}]")

    task = _merge("task", raw.get("task", {}),
                  _TASK_DEFAULTS[task_kind], errors)
    if task["kind"] != task_kind:
        errors.append(
            f"config declares kind {task['kind']!r} but the requested "
            f"task is {task_kind!r}"
        )
    _validate_task(task_kind, task, errors)

    opt = _merge("optimizer", raw.get("optimizer", {}),
                 _OPTIMIZER_DEFAULTS, errors)
    if opt["s_max"] is None:
        errors.append("[optimizer] s_max is required (total shot budget)")
    else:
        _check_number(errors, "optimizer", "s_max", opt["s_max"],
                      integer=True, minimum=1)
    _check_number(errors, "optimizer", "s_min", opt["s_min"],
                  integer=True, minimum=1)
    _check_number(errors, "optimizer", "warmup_iters", opt["warmup_iters"],
                  integer=True, minimum=0)
    _check_number(errors, "optimizer", "adam_shots", opt["adam_shots"],
                  integer=True, minimum=1)
    _check_number(errors, "optimizer", "s_cap", opt["s_cap"],
                  integer=True, minimum=0)
    for key in ("thermo_init", "g_scale"):
        _check_number(errors, "optimizer", key, opt[key], above=0.0)
    _check_number(errors, "optimizer", "precond_floor", opt["precond_floor"],
                  minimum=0.0)
    for key in ("sq_grad_decay", "stat_decay", "adam_beta1", "adam_beta2"):
        _check_number(errors, "optimizer", key, opt[key], above=0.0,
                      maximum=1.0)
    _check_number(errors, "optimizer", "adam_eps", opt["adam_eps"], above=0.0)

    sched = _merge("schedules", raw.get("schedules", {}),
                   _SCHEDULE_DEFAULTS[task_kind], errors)
    ok_fraction = _check_number(
        errors, "schedules", "burn_fraction", sched["burn_fraction"],
        above=0.0,
    )
    if ok_fraction and not sched["burn_fraction"] < 1.0:
        errors.append(
            f"[schedules] burn_fraction must be < 1, got "
            f"{sched['burn_fraction']!r}"
        )
    for key in ("beta_init", "beta_burn_end", "beta_refine_end",
                "lr_start", "lr_end", "refine_lr_factor"):
        _check_number(errors, "schedules", key, sched[key], above=0.0)
    for key in ("burn_exponent", "refine_exponent", "lr_exponent",
                "adam_lr_exponent", "m_exponent", "ds_exponent"):
        _check_number(errors, "schedules", key, sched[key], above=0.0)
    _check_number(errors, "schedules", "m_start", sched["m_start"],
                  integer=True, minimum=1)
    _check_number(errors, "schedules", "m_end", sched["m_end"],
                  integer=True, minimum=1)
    if (isinstance(sched["m_start"], int) and isinstance(sched["m_end"], int)
            and sched["m_end"] < sched["m_start"]):
        errors.append("[schedules] m_end must be >= m_start")
    _check_number(errors, "schedules", "ds_shots_start",
                  sched["ds_shots_start"], integer=True, minimum=1)
    _check_number(errors, "schedules", "ds_shots_end",
                  sched["ds_shots_end"], integer=True, minimum=1)

    noise = _merge("noise", raw.get("noise", {}),
                   _NOISE_DEFAULTS[task_kind], errors)
    _check_bool(errors, "noise", "enabled", noise["enabled"])
    _check_bool(errors, "noise", "exempt_multi_z", noise["exempt_multi_z"])
    for key in ("p1", "p2"):
        _check_number(errors, "noise", key, noise[key], minimum=0.0,
                      maximum=1.0)

    if errors:
        raise ConfigError(errors)

    hyper = None
    try:
        hyper = Hyperparams(
            s_max=opt["s_max"],
            burn_shots=int(round(sched["burn_fraction"] * opt["s_max"])),
            lr_start=float(sched["lr_start"]),
            lr_end=float(sched["lr_end"]),
            lr_exponent=float(sched["lr_exponent"]),
            beta_init=float(sched["beta_init"]),
            beta_burn_end=float(sched["beta_burn_end"]),
            beta_refine_end=float(sched["beta_refine_end"]),
            burn_exponent=float(sched["burn_exponent"]),
            refine_exponent=float(sched["refine_exponent"]),
            refine_lr_factor=float(sched["refine_lr_factor"]),
            sq_grad_decay=float(opt["sq_grad_decay"]),
            thermo_init=float(opt["thermo_init"]),
            precond_floor=float(opt["precond_floor"]),
            stat_decay=float(opt["stat_decay"]),
            s_min=opt["s_min"],
            warmup_iters=opt["warmup_iters"],
            g_scale=float(opt["g_scale"]),
            s_cap=opt["s_cap"] or None,
            m_start=sched["m_start"],
            m_end=sched["m_end"],
            m_exponent=float(sched["m_exponent"]),
            adam_beta1=float(opt["adam_beta1"]),
            adam_beta2=float(opt["adam_beta2"]),
            adam_eps=float(opt["adam_eps"]),
            adam_shots=opt["adam_shots"],
            ds_shots_start=sched["ds_shots_start"],
            ds_shots_end=sched["ds_shots_end"],
            ds_exponent=float(sched["ds_exponent"]),
        )
    except ValueError as exc:
        errors.append(str(exc))
    try:
        model = NoiseModel(float(noise["p1"]), float(noise["p2"]),
                           exempt_multi_z=noise["exempt_multi_z"])
    except ValueError as exc:
        errors.append(f"[noise] {exc}")
        model = None
    if errors:
        raise ConfigError(errors)

    return BenchConfig(
        task_kind=task_kind,
        task=task,
        hyper=hyper,
        adam_lr_exponent=float(sched["adam_lr_exponent"]),
        noise_enabled=noise["enabled"],
        noise=model,
    )
