"""Tests for schedules, the annealing optimizer's update and shot rule,
the Adam baselines, and the budget-terminated run loop."""

import copy

import numpy as np
import pytest

import oracles
from vqshot.circuits import compile_circuit, tfim_ansatz
from vqshot.core import Observable, PauliGroup, PauliString, expectation
from vqshot.estimators import (
    EstimatorFailureError,
    GradSample,
    grad_point_linear,
    s_count,
)
from vqshot.optimizers import (
    AdamState,
    Hyperparams,
    SantaState,
    Schedule,
    adam_ds_shots,
    adam_init,
    adam_step,
    beta_schedule,
    next_shots,
    run_optimizer,
    santaqlaus_init,
    santaqlaus_step,
    schedule_eval,
)


def default_hyper(**overrides):
    base = dict(s_max=10**6, burn_shots=10**5)
    base.update(overrides)
    return Hyperparams(**base)


def blank_state(d=3, t=6, v=1.0):
    return SantaState(
        theta=np.zeros(d),
        u=np.zeros(d),
        alpha=np.zeros(d),
        v=np.full(d, v),
        xi_raw=np.zeros(d),
        chi_raw=np.zeros(d),
        gamma_raw=np.zeros(d),
        s=np.full(d, 4, dtype=np.int64),
        t=t,
    )


class TestSchedule:
    def test_endpoints(self):
        sched = Schedule(0, 1000, 3.0, 7.0, 2.5)
        assert sched(0) == pytest.approx(3.0)
        assert sched(1000) == pytest.approx(7.0)

    def test_linear_midpoint(self):
        sched = Schedule(0, 2, 10.0, 1e4, 1.0)
        assert sched(1) == pytest.approx(5005.0)

    def test_quadratic_midpoint(self):
        sched = Schedule(0, 2, 1.0, 4.0, 2.0)
        assert sched(1) == pytest.approx(2.25)

    def test_clamps_outside_range(self):
        sched = Schedule(10, 20, 1.0, 2.0, 1.0)
        assert sched(0) == pytest.approx(1.0)
        assert sched(100) == pytest.approx(2.0)

    def test_flat_when_endpoints_equal(self):
        sched = Schedule(0, 10, 5.0, 5.0, 3.0)
        assert sched(7) == pytest.approx(5.0)

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            Schedule(0, 0, 1.0, 2.0, 1.0)
        with pytest.raises(ValueError):
            Schedule(0, 10, 1.0, 2.0, 0.0)
        with pytest.raises(ValueError):
            Schedule(0, 10, -1.0, 2.0, 1.0)

    def test_schedule_eval_delegates(self):
        sched = Schedule(0, 2, 1.0, 4.0, 2.0)
        assert schedule_eval(sched, 1) == sched(1)


class TestBetaSchedule:
    def test_starts_at_beta_init(self):
        h = default_hyper(beta_burn_end=1e4, burn_exponent=5.0)
        assert beta_schedule(h, 0.01, 0) == pytest.approx(10.0)

    def test_burn_end_approaches_burn_value(self):
        h = default_hyper(beta_burn_end=1e4, burn_exponent=5.0)
        assert beta_schedule(h, 0.01, h.burn_shots - 1) == pytest.approx(
            1e4, rel=1e-3
        )

    def test_refinement_rescales_by_learning_rate(self):
        h = default_hyper(beta_burn_end=1e4, beta_refine_end=1e4)
        assert beta_schedule(h, 0.001, h.burn_shots) == pytest.approx(1e5)

    def test_hyperparams_validation(self):
        with pytest.raises(ValueError):
            Hyperparams(s_max=100, burn_shots=100)
        with pytest.raises(ValueError):
            Hyperparams(s_max=100, burn_shots=50, s_min=0)
        with pytest.raises(ValueError):
            Hyperparams(s_max=100, burn_shots=50, stat_decay=1.0)

    def test_m_schedule_rounding_and_clamping(self):
        h = default_hyper(m_start=2, m_end=16, m_exponent=1.0)
        assert h.m_at(0) == 2
        assert h.m_at(h.s_max) == 16
        assert 2 <= h.m_at(h.s_max // 3) <= 16


class TestSantaStep:
    def test_zero_gradient_zero_momentum_fixed_point(self):
        h = default_hyper()
        state = blank_state(d=2, v=0.0)
        theta0 = state.theta.copy()
        alpha0 = state.alpha.copy()
        grad = GradSample(np.zeros(2), np.zeros(2), 0)
        santaqlaus_step(state, grad, h, lr_t=0.01, beta_t=10.0)
        np.testing.assert_array_equal(state.theta, theta0)
        np.testing.assert_allclose(state.alpha, alpha0 - 0.01 / 10.0)
        assert state.t == 7

    def test_rejects_non_finite_gradient(self):
        h = default_hyper()
        state = blank_state(d=2)
        with pytest.raises(EstimatorFailureError):
            santaqlaus_step(
                state, GradSample(np.array([np.nan, 0.0]), np.zeros(2), 0),
                h, 0.01, 10.0,
            )

    def test_thermostat_grows_when_momentum_hot(self):
        # with u^2 above the lr/beta floor at both thermostat updates,
        # alpha must increase over the step
        h = default_hyper()
        state = blank_state(d=1, v=0.0)
        state.u[:] = 1.0
        alpha0 = state.alpha.copy()
        santaqlaus_step(
            state, GradSample(np.zeros(1), np.zeros(1), 0), h, 1e-4, 1e4
        )
        assert np.all(state.alpha > alpha0)

    def test_gibbs_stationary_variance(self):
        # 1-D quadratic loss k*theta^2/2 (k=1) with exact gradient plus
        # injected Gaussian noise at the level the shot rule engineers,
        # var(f) = 2/(beta*lr*G): the long-run variance of theta must match
        # the Gibbs value 1/(beta*k) within 20%
        beta, lr, k = 1.0, 0.01, 1.0
        h = default_hyper()
        rng = np.random.default_rng(0)
        state = santaqlaus_init(np.array([0.0]), h, rng)
        g_prev = 1.0
        total, total_sq, count = 0.0, 0.0, 0
        steps, burn = 3 * 10**5, 5 * 10**4
        for i in range(steps):
            noise_sd = np.sqrt(2.0 / (beta * lr * g_prev))
            f = k * state.theta + rng.standard_normal(1) * noise_sd
            santaqlaus_step(state, GradSample(f, np.zeros(1), 0), h, lr, beta)
            g_prev = float(state.G_last[0])
            if i >= burn:
                x = float(state.theta[0])
                total += x
                total_sq += x * x
                count += 1
        mean = total / count
        var = total_sq / count - mean * mean
        assert abs(var - 1.0 / (beta * k)) < 0.20 / (beta * k)

    def test_noise_free_descent_converges(self):
        # beta -> infinity removes the thermal floor; the dynamics become
        # preconditioned momentum descent with thermostat friction
        h = default_hyper()
        state = santaqlaus_init(np.array([3.0]), h, np.random.default_rng(1))
        traj = []
        for _ in range(600):
            f = state.theta.copy()
            santaqlaus_step(state, GradSample(f, np.zeros(1), 0), h, 0.01, 1e12)
            traj.append(abs(float(state.theta[0])))
        window = 200
        peaks = [max(traj[i : i + window]) for i in range(0, 600, window)]
        assert peaks[0] > peaks[1] > peaks[2]
        assert traj[-1] < 1e-3 * 3.0


class TestNextShots:
    def test_warmup_returns_floor(self):
        h = default_hyper()
        state = blank_state(t=5)
        grad = GradSample(np.full(3, 9.0), np.full(3, 9.0), 0)
        s = next_shots(state, grad, h, 1e9, 0.01, 1)
        assert s.tolist() == [4, 4, 4]
        # warm-up leaves the EMAs untouched
        assert np.all(state.xi_raw == 0.0)

    def test_first_adaptive_iteration_matches_hand_arithmetic(self):
        # t just past warm-up, EMAs empty: bias correction makes the EMA
        # equal the injected sample, so beta*lr*G*gamma*xi/2 = 0.2 -> ceil
        # to 1 shot, then the floor lifts it to s_min=4
        h = default_hyper()
        state = blank_state(t=6, v=1.0)
        state.G_last = np.ones(3)
        grad = GradSample(np.zeros(3), np.full(3, 4.0), 0)
        s = next_shots(state, grad, h, beta_t=10.0, lr_t=0.01, m_t=1)
        assert s.tolist() == [4, 4, 4]

    def test_larger_statistics_raise_counts(self):
        h = default_hyper()
        state = blank_state(t=6, v=1.0)
        state.G_last = np.ones(3)
        grad = GradSample(np.zeros(3), np.full(3, 4.0), 0)
        s = next_shots(state, grad, h, beta_t=1e4, lr_t=0.01, m_t=1)
        assert s.tolist() == [200, 200, 200]

    def test_zero_variance_floors(self):
        h = default_hyper()
        state = blank_state(t=6)
        state.G_last = np.ones(3)
        grad = GradSample(np.zeros(3), np.zeros(3), 0)
        s = next_shots(state, grad, h, 1e9, 0.01, 1)
        assert s.tolist() == [4, 4, 4]

    def test_minibatch_divides_count(self):
        h = default_hyper()
        grads = GradSample(np.zeros(3), np.full(3, 4.0), 0)
        singles = []
        for m in (1, 4):
            state = blank_state(t=6, v=1.0)
            state.G_last = np.ones(3)
            singles.append(next_shots(state, grads, h, 1e4, 0.01, m)[0])
        assert singles[0] == 200
        assert singles[1] == 50

    def test_monotone_in_beta(self):
        rng = np.random.default_rng(2)
        h = default_hyper()
        for _ in range(200):
            state = blank_state(t=int(rng.integers(6, 50)))
            state.v = rng.uniform(0, 2, 3)
            state.xi_raw = rng.uniform(0, 5, 3)
            state.chi_raw = rng.uniform(-2, 2, 3)
            state.gamma_raw = rng.uniform(0, 3, 3)
            state.G_last = rng.uniform(0.1, 10, 3)
            grad = GradSample(rng.uniform(-1, 1, 3), rng.uniform(0, 5, 3), 0)
            beta = float(rng.uniform(1, 1e4))
            lo = next_shots(copy.deepcopy(state), grad, h, beta, 0.01, 1)
            hi = next_shots(copy.deepcopy(state), grad, h, 2 * beta, 0.01, 1)
            assert np.all(hi >= lo)

    def test_optional_cap(self):
        h = default_hyper(s_cap=100)
        state = blank_state(t=6, v=1.0)
        state.G_last = np.ones(3)
        grad = GradSample(np.zeros(3), np.full(3, 4.0), 0)
        s = next_shots(state, grad, h, 1e6, 0.01, 1)
        assert s.tolist() == [100, 100, 100]

    def test_gamma_correction_with_nonzero_gradient(self):
        # chi != 0 shrinks the count through the squared Taylor factor
        h = default_hyper()
        state = blank_state(t=6, v=0.0)
        state.G_last = np.ones(3)
        grad = GradSample(np.full(3, 2.0), np.full(3, 4.0), 0)
        s = next_shots(state, grad, h, 1e4, 0.01, 1)
        # v' = (1-sigma)*chi = 0.02, gamma = (1 - 0.5*0.01*4/0.02)^2 = 0
        assert s.tolist() == [4, 4, 4]


class TestAdam:
    def test_zero_gradient_is_fixed_point(self):
        h = default_hyper()
        state = adam_init(np.array([1.0, -2.0]), h, 100)
        adam_step(state, np.zeros(2), h, 0.01)
        np.testing.assert_array_equal(state.theta, [1.0, -2.0])

    def test_converges_on_quadratic(self):
        h = default_hyper()
        state = adam_init(np.array([1.0]), h, 100)
        for _ in range(1000):
            adam_step(state, state.theta.copy(), h, 0.01)
        assert abs(state.theta[0]) < 1e-6

    def test_rejects_non_finite(self):
        h = default_hyper()
        state = adam_init(np.array([1.0]), h, 100)
        with pytest.raises(EstimatorFailureError):
            adam_step(state, np.array([np.inf]), h, 0.01)

    def test_ds_shot_endpoints(self):
        sched = Schedule(0, 10**6, 4, 100, 10.0)
        assert adam_ds_shots(0, sched) == 4
        assert adam_ds_shots(10**6, sched) == 100


def tfim_observable(n, j, g):
    zz = PauliGroup(
        -j,
        tuple(
            PauliString(1.0, "I" * q + "ZZ" + "I" * (n - q - 2))
            for q in range(n - 1)
        ),
    )
    x = PauliGroup(
        -g,
        tuple(
            PauliString(1.0, "I" * q + "X" + "I" * (n - q - 1))
            for q in range(n)
        ),
    )
    return Observable(n, (zz, x))


class _ToyVqeTask:
    """Two-qubit transverse-field Ising energy minimization."""

    loss_kind = "linear"

    def __init__(self, j=1.0, g=1.5):
        self.circuit = compile_circuit(tfim_ansatz(2, 1))
        self.obs = tfim_observable(2, j, g)
        self.ground = oracles.tfim_ground_energy(2, j, g)
        self.j = j
        self.n = 2

    def init_theta(self, rng):
        return rng.uniform(0, 2 * np.pi, self.circuit.n_params)

    def next_batch(self, m, rng):
        assert m == 1
        return np.array([0])

    def grad_point(self, index, theta, s, rng):
        return grad_point_linear(self.circuit, self.obs, theta, s, rng)

    def exact_loss(self, theta):
        from vqshot.circuits import run_circuit

        return expectation(run_circuit(self.circuit, theta), self.obs)

    def metrics(self, theta):
        gap = (self.exact_loss(theta) - self.ground) / (self.j * self.n)
        return {"train_loss": gap, "test_loss": None,
                "train_err": None, "test_err": None}


def toy_hyper(s_max=10**5):
    return Hyperparams(
        s_max=s_max,
        burn_shots=int(0.8 * s_max),
        beta_burn_end=1e4,
        beta_refine_end=1e4,
        burn_exponent=5.0,
        refine_exponent=5.0,
        lr_exponent=0.5,
    )


class TestRunOptimizer:
    def test_trace_contract(self):
        trace = run_optimizer(_ToyVqeTask(), "santaqlaus", toy_hyper(), 0)
        s_tots = [r.s_tot for r in trace.records]
        assert all(b > a for a, b in zip(s_tots, s_tots[1:]))
        assert s_tots[-1] > toy_hyper().s_max
        iters = [r.iteration for r in trace.records]
        assert iters == list(range(1, len(iters) + 1))
        assert all(r.m == 1 for r in trace.records)
        assert all(r.mean_s >= 4 for r in trace.records)

    def test_warmup_floor_in_trace(self):
        trace = run_optimizer(_ToyVqeTask(), "santaqlaus", toy_hyper(), 1)
        assert [r.mean_s for r in trace.records[:5]] == [4.0] * 5

    def test_budget_smaller_than_one_iteration(self):
        h = Hyperparams(s_max=40, burn_shots=30)
        trace = run_optimizer(_ToyVqeTask(), "santaqlaus", h, 0)
        assert len(trace.records) == 1
        assert trace.records[0].s_tot == s_count([4] * 6, 1, "linear")

    def test_deterministic_reruns(self):
        a = run_optimizer(_ToyVqeTask(), "santaqlaus", toy_hyper(10**4), 7)
        b = run_optimizer(_ToyVqeTask(), "santaqlaus", toy_hyper(10**4), 7)
        assert a.records == b.records
        np.testing.assert_array_equal(a.final_theta, b.final_theta)

    def test_methods_share_initial_parameters(self):
        class RecordingTask(_ToyVqeTask):
            def init_theta(self, rng):
                self.theta0 = super().init_theta(rng)
                return self.theta0

        h = Hyperparams(s_max=60, burn_shots=48)
        starts, first_shots = {}, {}
        for m in ("santaqlaus", "adam", "adam-ds"):
            task = RecordingTask()
            trace = run_optimizer(task, m, h, 3)
            starts[m] = task.theta0
            first_shots[m] = trace.records[0].mean_s
        np.testing.assert_array_equal(starts["santaqlaus"], starts["adam"])
        np.testing.assert_array_equal(starts["adam"], starts["adam-ds"])
        assert first_shots["santaqlaus"] == 4
        assert first_shots["adam"] == 100
        assert first_shots["adam-ds"] == 4

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            run_optimizer(_ToyVqeTask(), "sgd", toy_hyper(), 0)

    def test_toy_vqe_improves(self):
        # budget 1e5: the final exact gap should fall well below the early
        # value; median over 5 seeds guards against unlucky starts
        task = _ToyVqeTask()
        ratios = []
        for seed in range(5):
            trace = run_optimizer(task, "santaqlaus", toy_hyper(), seed)
            first = trace.records[0].train_loss
            final = trace.records[-1].train_loss
            ratios.append(final / first)
        assert np.median(ratios) < 0.1

    def test_adam_ds_shots_grow_in_trace(self):
        h = Hyperparams(
            s_max=2 * 10**4, burn_shots=10**4,
            ds_shots_start=4, ds_shots_end=100, ds_exponent=2.0,
        )
        trace = run_optimizer(_ToyVqeTask(), "adam-ds", h, 0)
        mean_s = [r.mean_s for r in trace.records]
        assert mean_s[0] == 4
        assert mean_s[-1] > mean_s[0]
