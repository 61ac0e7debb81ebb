"""vqshot: a desk-scale lab for shot-adaptive annealing optimizers on
variational quantum algorithms.

Modules:
    core        dense state-vector simulator, observables, grouped sampling
    circuits    parameterized circuit constructors and parameter-shift pairs
    estimators  shot allocation, loss-gradient estimators, shot accounting
    optimizers  SantaQlaus / Adam / Adam-DS loops and annealing schedules
    noise       depolarizing trajectory noise and a density-matrix oracle
    bench       benchmark tasks, runner, config parsing, CLI
"""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
