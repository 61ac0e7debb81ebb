"""Shot-adaptive annealing optimizer with a Nose-Hoover-style thermostat,
plus Adam baselines (fixed and scheduled shot counts) and a generic
budget-terminated run loop.

The annealing optimizer treats the per-iteration gradient estimate as the
thermal noise of a Langevin-type sampler: an RMSprop-style preconditioner
rescales each coordinate, a per-coordinate thermostat variable keeps the
momentum's kinetic energy at the target temperature, and the shot rule
inverts the role of noise — instead of fighting shot noise it requests
exactly enough shots that the estimator's variance supplies the noise the
current inverse temperature calls for. All schedules are driven by the
cumulative shot count rather than the iteration index.

Update order within one iteration is the palindromic A-B-O-B-A splitting:
half position step, thermostat update, momentum (friction + gradient kick
+ friction), thermostat update, half position step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .estimators import EstimatorFailureError, GradSample, i_evaluate

# hard ceiling on a single component's requested shots; reaching it means
# the budget will be exhausted this iteration anyway, and it keeps the
# ceil/int conversion safe when the gamma correction blows up
_SHOT_CEILING = float(2**40)


@dataclass(frozen=True)
class Schedule:
    """Monotone power-law interpolation between two values, driven by the
    cumulative shot count: at s_start the value is y_start, at s_end it is
    y_end, and the exponent shapes the path. Evaluation clamps the input
    into [s_start, s_end]."""

    s_start: float
    s_end: float
    y_start: float
    y_end: float
    exponent: float

    def __post_init__(self):
        if not self.s_end > self.s_start:
            raise ValueError(f"need s_end > s_start, got {self}")
        if self.exponent == 0.0:
            raise ValueError("exponent must be nonzero")
        if self.y_start <= 0.0 or self.y_end <= 0.0:
            raise ValueError(f"endpoint values must be positive, got {self}")

    def __call__(self, s_tot: float) -> float:
        s = min(max(s_tot, self.s_start), self.s_end)
        frac = (s - self.s_start) / (self.s_end - self.s_start)
        a = self.exponent
        base = frac * ((self.y_end / self.y_start) ** (1.0 / a) - 1.0) + 1.0
        return self.y_start * base**a


def schedule_eval(sched: Schedule, s_tot: float) -> float:
    return sched(s_tot)


@dataclass(frozen=True)
class Hyperparams:
    """Run hyperparameters. Defaults are the fixed recommended values;
    per-task knobs (schedule endpoints, exponents, batch sizes) have no
    universal defaults and are set by the benchmark configs."""

    s_max: int
    burn_shots: int  # annealing stage switch, in cumulative shots

    # learning-rate schedule, shared by every optimizer
    lr_start: float = 0.01
    lr_end: float = 0.001
    lr_exponent: float = 0.5

    # inverse-temperature schedule: burn-in stage rises from beta_init to
    # beta_burn_end over [0, burn_shots]; the refinement stage continues to
    # beta_refine_end over [burn_shots, s_max] and is divided by
    # (refine_lr_factor * lr_t) so shot counts do not sag as the learning
    # rate decays
    beta_init: float = 10.0
    beta_burn_end: float = 1e4
    beta_refine_end: float = 1e4
    burn_exponent: float = 5.0
    refine_exponent: float = 5.0
    refine_lr_factor: float = 100.0

    # annealing-optimizer core
    sq_grad_decay: float = 0.99  # EMA decay of the squared gradient
    thermo_init: float = 5.0  # initial thermostat scale
    precond_floor: float = 1e-8  # regularizer inside the preconditioner
    stat_decay: float = 0.99  # EMA decay for the shot rule's statistics
    s_min: int = 4
    warmup_iters: int = 5
    g_scale: float = 1.0  # per-component preconditioner scale
    s_cap: int | None = None  # optional per-component safety cap

    # batch-size schedule (constant 1 unless configured)
    m_start: int = 1
    m_end: int = 1
    m_exponent: float = 1.0

    # Adam family
    adam_beta1: float = 0.9
    adam_beta2: float = 0.99
    adam_eps: float = 1e-8
    adam_shots: int = 100  # fixed-shot Adam baseline
    ds_shots_start: int = 4  # scheduled-shot Adam baseline
    ds_shots_end: int = 100
    ds_exponent: float = 10.0

    def __post_init__(self):
        if not 0.0 < self.sq_grad_decay < 1.0:
            raise ValueError("sq_grad_decay must be in (0,1)")
        if not 0.0 < self.stat_decay < 1.0:
            raise ValueError("stat_decay must be in (0,1)")
        if self.s_min < 1:
            raise ValueError("s_min must be >= 1")
        if not 0 < self.burn_shots < self.s_max:
            raise ValueError("need 0 < burn_shots < s_max")

    def lr_schedule(self) -> Schedule:
        return Schedule(0, self.s_max, self.lr_start, self.lr_end,
                        self.lr_exponent)

    def m_schedule(self) -> Schedule:
        return Schedule(0, self.s_max, self.m_start, self.m_end,
                        self.m_exponent)

    def ds_schedule(self) -> Schedule:
        return Schedule(0, self.s_max, self.ds_shots_start, self.ds_shots_end,
                        self.ds_exponent)

    def m_at(self, s_tot: float) -> int:
        m = int(round(self.m_schedule()(s_tot)))
        return min(max(m, self.m_start), self.m_end)


def beta_schedule(h: Hyperparams, lr_t: float, s_tot: float) -> float:
    """Two-stage inverse temperature at cumulative shot count s_tot."""
    if s_tot < h.burn_shots:
        burn = Schedule(0, h.burn_shots, h.beta_init, h.beta_burn_end,
                        h.burn_exponent)
        return burn(s_tot)
    refine = Schedule(h.burn_shots, h.s_max, h.beta_burn_end,
                      h.beta_refine_end, h.refine_exponent)
    return refine(s_tot) / (h.refine_lr_factor * lr_t)


@dataclass
class SantaState:
    """Mutable per-run state of the annealing optimizer."""

    theta: np.ndarray
    u: np.ndarray  # momentum (learning-rate-scaled)
    alpha: np.ndarray  # per-coordinate thermostat
    v: np.ndarray  # squared-gradient EMA
    xi_raw: np.ndarray  # raw EMA of variance numerators S
    chi_raw: np.ndarray  # raw EMA of gradient estimates f
    gamma_raw: np.ndarray  # raw EMA of preconditioner values G
    s: np.ndarray  # per-component shots for the next evaluation
    t: int = 1
    s_tot: int = 0
    G_last: np.ndarray = field(default=None, repr=False)


def santaqlaus_init(theta0: np.ndarray, h: Hyperparams, rng) -> SantaState:
    rng = np.random.default_rng(rng)
    d = theta0.shape[0]
    scale = np.sqrt(h.lr_start)
    return SantaState(
        theta=np.array(theta0, dtype=np.float64),
        u=scale * rng.standard_normal(d),
        alpha=np.full(d, scale * h.thermo_init),
        v=np.zeros(d),
        xi_raw=np.zeros(d),
        chi_raw=np.zeros(d),
        gamma_raw=np.zeros(d),
        s=np.full(d, h.s_min, dtype=np.int64),
    )


def santaqlaus_step(state: SantaState, grad: GradSample, h: Hyperparams,
                    lr_t: float, beta_t: float) -> SantaState:
    """One A-B-O-B-A update; mutates and returns the state."""
    f = np.asarray(grad.f, dtype=np.float64)
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(grad.S))):
        raise EstimatorFailureError(
            f"non-finite gradient sample at iteration {state.t}: "
            f"f={f}, S={grad.S}"
        )
    sigma = h.sq_grad_decay
    state.v = sigma * state.v + (1.0 - sigma) * f * f
    G = h.g_scale / np.sqrt(h.precond_floor + np.sqrt(state.v))
    state.G_last = G
    noise_floor = lr_t / beta_t

    state.theta += 0.5 * G * state.u
    state.alpha += 0.5 * (state.u**2 - noise_floor)
    half_friction = np.exp(-0.5 * state.alpha)
    state.u *= half_friction
    state.u -= lr_t * G * f
    state.u *= half_friction
    state.alpha += 0.5 * (state.u**2 - noise_floor)
    state.theta += 0.5 * G * state.u
    state.t += 1
    return state


def next_shots(state: SantaState, grad: GradSample, h: Hyperparams,
               beta_t: float, lr_t: float, m_t: int) -> np.ndarray:
    """Per-component shot counts for the next evaluation.

    During warm-up the floor s_min is used and no statistics accumulate.
    Afterwards, bias-corrected EMAs of the variance numerator, the gradient,
    and the preconditioner feed the shot rule: request enough shots that
    the estimator's noise matches the sampler's target temperature, with a
    Taylor-correction factor for the gradient's own contribution."""
    d = state.theta.shape[0]
    if state.t <= h.warmup_iters:
        state.s = np.full(d, h.s_min, dtype=np.int64)
        return state.s
    mu = h.stat_decay
    state.xi_raw = mu * state.xi_raw + (1.0 - mu) * np.asarray(grad.S)
    state.chi_raw = mu * state.chi_raw + (1.0 - mu) * np.asarray(grad.f)
    state.gamma_raw = mu * state.gamma_raw + (1.0 - mu) * state.G_last
    correction = 1.0 - mu ** (state.t - h.warmup_iters)
    xi = state.xi_raw / correction
    chi = state.chi_raw / correction
    precond = state.gamma_raw / correction

    sigma = h.sq_grad_decay
    v_prime = sigma * state.v + (1.0 - sigma) * chi
    gamma_factor = np.ones(d)
    nonzero = v_prime != 0.0
    gamma_factor[nonzero] = (
        1.0 - 0.5 * (1.0 - sigma) * chi[nonzero] ** 2 / v_prime[nonzero]
    ) ** 2

    n = np.ceil(0.5 * beta_t * lr_t * precond * gamma_factor * xi)
    n = np.clip(n, 0.0, _SHOT_CEILING)
    s = np.ceil(n / m_t)
    s = np.maximum(s.astype(np.int64), h.s_min)
    if h.s_cap is not None:
        s = np.minimum(s, h.s_cap)
    state.s = s
    return s


@dataclass
class AdamState:
    theta: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    s: np.ndarray
    t: int = 1
    s_tot: int = 0


def adam_init(theta0: np.ndarray, h: Hyperparams, shots: int) -> AdamState:
    d = theta0.shape[0]
    return AdamState(
        theta=np.array(theta0, dtype=np.float64),
        m1=np.zeros(d),
        m2=np.zeros(d),
        s=np.full(d, shots, dtype=np.int64),
    )


def adam_step(state: AdamState, f: np.ndarray, h: Hyperparams,
              lr_t: float) -> AdamState:
    f = np.asarray(f, dtype=np.float64)
    if not np.all(np.isfinite(f)):
        raise EstimatorFailureError(
            f"non-finite gradient at iteration {state.t}: {f}"
        )
    b1, b2 = h.adam_beta1, h.adam_beta2
    state.m1 = b1 * state.m1 + (1.0 - b1) * f
    state.m2 = b2 * state.m2 + (1.0 - b2) * f * f
    m1_hat = state.m1 / (1.0 - b1**state.t)
    m2_hat = state.m2 / (1.0 - b2**state.t)
    state.theta -= lr_t * m1_hat / (np.sqrt(m2_hat) + h.adam_eps)
    state.t += 1
    return state


def adam_ds_shots(s_tot: float, sched: Schedule) -> int:
    return int(round(sched(s_tot)))


@dataclass
class TraceRecord:
    iteration: int
    s_tot: int
    train_loss: float | None
    test_loss: float | None
    train_err: float | None
    test_err: float | None
    mean_s: float
    m: int


@dataclass
class Trace:
    records: list
    method: str
    seed: int
    final_theta: np.ndarray
    metadata: dict


METHODS = ("santaqlaus", "adam", "adam-ds")


def run_optimizer(task, method: str, h: Hyperparams, seed: int) -> Trace:
    """Budget-terminated optimization loop.

    Each iteration: evaluate the mini-batch gradient with the current shot
    vector, charge the budget, apply the method's update, choose the next
    shot vector, and record exact metrics at the post-step parameters. The
    loop runs while the charged total stays within s_max, so the final
    iteration may overshoot the budget by at most its own cost.

    The seed splits into an initialization stream (shared by every method,
    so runs with the same seed start from the same parameters) and a
    sampling stream. On an estimator failure the partial trace is attached
    to the raised error as `.trace`.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected {METHODS}")
    init_ss, sample_ss = np.random.SeedSequence(seed).spawn(2)
    init_rng = np.random.default_rng(init_ss)
    sample_rng = np.random.default_rng(sample_ss)

    theta0 = np.asarray(task.init_theta(init_rng), dtype=np.float64)
    lr_sched = h.lr_schedule()
    ds_sched = h.ds_schedule() if method == "adam-ds" else None
    if method == "santaqlaus":
        state = santaqlaus_init(theta0, h, init_rng)
    else:
        start = h.adam_shots if method == "adam" else adam_ds_shots(0, ds_sched)
        state = adam_init(theta0, h, start)

    records = []
    trace = Trace(records, method, seed, theta0, {"hyperparams": h})
    try:
        while state.s_tot <= h.s_max:
            s_before = state.s_tot
            lr_t = lr_sched(s_before)
            m_t = h.m_at(s_before)
            iteration = state.t
            s_used = state.s.copy()
            grad = i_evaluate(task, state.theta, s_used, m_t, sample_rng)
            state.s_tot += grad.shots_spent
            if method == "santaqlaus":
                beta_t = beta_schedule(h, lr_t, s_before)
                santaqlaus_step(state, grad, h, lr_t, beta_t)
                next_shots(state, grad, h, beta_t, lr_t, m_t)
            else:
                adam_step(state, grad.f, h, lr_t)
                if method == "adam-ds":
                    state.s = np.full(
                        state.theta.shape[0],
                        adam_ds_shots(state.s_tot, ds_sched),
                        dtype=np.int64,
                    )
            metrics = task.metrics(state.theta)
            records.append(
                TraceRecord(
                    iteration=iteration,
                    s_tot=state.s_tot,
                    train_loss=metrics.get("train_loss"),
                    test_loss=metrics.get("test_loss"),
                    train_err=metrics.get("train_err"),
                    test_err=metrics.get("test_err"),
                    mean_s=float(np.mean(s_used)),
                    m=m_t,
                )
            )
    except EstimatorFailureError as err:
        err.trace = trace
        trace.final_theta = state.theta
        raise
    trace.final_theta = state.theta
    return trace
