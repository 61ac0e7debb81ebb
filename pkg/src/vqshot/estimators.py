"""Finite-shot gradient and variance estimators for linear and quadratic
losses, shot allocation across observable groups, and mini-batch iteration.

Every estimator returns both a gradient estimate f and a per-component
asymptotic-variance numerator S, defined so that var(f_j) ~= S_j / s_j for
the per-component shot parameter s_j. S feeds the shot-adaptive rule of the
annealing optimizer; its estimators prefer unbiased U-statistic forms and
fall back component-wise to a non-negative plug-in form when the unbiased
estimate goes negative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuits import CompiledCircuit, compile_circuit, run_bound, shifted_pair
from .core import Observable, sample_group_amps


class InsufficientSamplesError(ValueError):
    """Too few shots for the requested estimator."""


class EstimatorFailureError(RuntimeError):
    """An estimate came out non-finite."""


@dataclass
class GradSample:
    """Mini-batch gradient estimate with variance numerators.

    f: gradient estimate per component.
    S: asymptotic variance numerator per component (var(f_j) ~= S_j/s_j
       at batch size 1; the batch average divides by m on top).
    shots_spent: total measurement shots consumed, matching s_count.
    """

    f: np.ndarray
    S: np.ndarray
    shots_spent: int


# ====== Shot allocation across observable groups ======


def _check_weights(weights):
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] < 1:
        raise ValueError("weights must be a non-empty vector")
    if not np.all(np.isfinite(w)) or np.any(w <= 0.0):
        raise ValueError(f"weights must be positive and finite, got {w}")
    return w


def wds_allocate(weights, total: int) -> np.ndarray:
    """Deterministic proportional shares: floor of the exact share, then
    leftover shots one-by-one in descending fractional-remainder order."""
    w = _check_weights(weights)
    if total < w.shape[0]:
        raise ValueError(f"total {total} below group count {w.shape[0]}")
    exact = total * w / w.sum()
    shares = np.floor(exact).astype(np.int64)
    remainder = exact - shares
    for g in np.argsort(-remainder, kind="stable")[: total - shares.sum()]:
        shares[g] += 1
    return shares


def wrs_allocate(weights, total: int, rng) -> np.ndarray:
    """Random shares: one multinomial draw with probabilities w_i/sum(w).

    `rng` may be a Generator or anything default_rng accepts as a seed
    (true of every estimator entry point below).
    """
    w = _check_weights(weights)
    if total < 1:
        raise ValueError(f"total must be >= 1, got {total}")
    rng = np.random.default_rng(rng)
    return rng.multinomial(total, w / w.sum()).astype(np.int64)


# ====== U-statistics ======


def u_stat_power(outcomes, n: int) -> float:
    """Unbiased estimator of <h>**n from i.i.d. outcomes: the mean of the
    product over all size-n index subsets (scaled by C(s, n)).

    Computed via elementary symmetric polynomials (Newton's identities),
    O(s*n) instead of enumerating subsets.
    """
    r = np.asarray(outcomes, dtype=np.float64)
    s = r.shape[0]
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if s < n:
        raise InsufficientSamplesError(f"need >= {n} outcomes, got {s}")
    if n == 1:
        return float(np.mean(r))
    if n == 2:
        s1 = float(np.sum(r))
        s2 = float(np.sum(r * r))
        return (s1 * s1 - s2) / (s * (s - 1.0))
    power_sums = [float(np.sum(r**k)) for k in range(n + 1)]
    e = [1.0] + [0.0] * n
    for k in range(1, n + 1):
        acc = 0.0
        for i in range(1, k + 1):
            acc += (-1.0) ** (i - 1) * e[k - i] * power_sums[i]
        e[k] = acc / k
    # C(s, n) without overflow for the sizes used here
    binom = 1.0
    for i in range(n):
        binom *= (s - i) / (i + 1)
    return e[n] / binom


# ====== Measurement of one observable at one bound circuit ======


def default_sampler(bound, group_shots, rng) -> list[GroupSample]:
    """Noiseless measurement: run the circuit once, then rotate and sample
    each requested group from the same final state."""
    amps = run_bound(bound)
    return [
        sample_group_amps(amps, group, shots, rng)
        for group, shots in group_shots
    ]


def _bump_to_two(shares: np.ndarray) -> np.ndarray:
    """Move shots from the largest shares until every share is >= 2."""
    shares = shares.copy()
    while True:
        low = int(np.argmin(shares))
        if shares[low] >= 2:
            return shares
        high = int(np.argmax(shares))
        shares[high] -= 1
        shares[low] += 1


def measure_observable(bound, obs: Observable, shots: int, rng, *,
                       allocation: str = "wds", sampler=None):
    """Estimate <obs> with `shots` total shots split across groups.

    Returns (mean, S) where S is the variance numerator: var(mean) ~= S/shots.
    WDS needs shots >= 2 * n_groups so every group keeps an unbiased sample
    variance; WRS treats the draws as one compound i.i.d. stream.
    """
    sampler = sampler or default_sampler
    groups = obs.groups
    n_groups = len(groups)
    if n_groups == 1:
        out = sampler(bound, [(groups[0], shots)], rng)[0]
        c = groups[0].coefficient
        return c * float(np.mean(out.values)), c * c * float(
            np.var(out.values, ddof=1)
        )
    alloc_weights = np.array([abs(g.coefficient) * g.norm for g in groups])
    if allocation == "wds":
        if shots < 2 * n_groups:
            raise InsufficientSamplesError(
                f"{shots} shots across {n_groups} groups leaves a group "
                "without an unbiased variance; need >= 2 per group"
            )
        shares = _bump_to_two(wds_allocate(alloc_weights, shots))
        samples = sampler(bound, list(zip(groups, shares)), rng)
        mean, var_num = 0.0, 0.0
        for group, share, out in zip(groups, shares, samples):
            c = group.coefficient
            mean += c * float(np.mean(out.values))
            var_num += c * c * float(np.var(out.values, ddof=1)) * (
                shots / share
            )
        return mean, var_num
    if allocation == "wrs":
        shares = wrs_allocate(alloc_weights, shots, rng)
        pairs = [(g, int(k)) for g, k in zip(groups, shares) if k > 0]
        samples = sampler(bound, pairs, rng)
        w_tot = alloc_weights.sum()
        compound = np.concatenate(
            [
                np.sign(g.coefficient) * w_tot * out.values / g.norm
                for (g, _), out in zip(pairs, samples)
            ]
        )
        return float(np.mean(compound)), float(np.var(compound, ddof=1))
    raise ValueError(f"unknown allocation {allocation!r}")


# ====== Per-point gradient estimators ======


def _check_shot_vector(s, d, lower):
    s = np.asarray(s)
    if s.shape != (d,):
        raise ValueError(f"shot vector must have length {d}, got {s.shape}")
    if np.any(s < lower):
        raise InsufficientSamplesError(
            f"every component needs >= {lower} shots, got {s.min()}"
        )
    return s.astype(np.int64)


def grad_point_linear(circuit, obs: Observable, theta, s, rng, *,
                      allocation: str = "wds", sampler=None):
    """Parameter-shift gradient of a linear loss E(theta) = <obs>.

    Per component j: f_j = (mean+ - mean-)/2 from s_j shots at each shift;
    S_j = (S+ + S-)/4 so that var(f_j) ~= S_j/s_j. Returns (f, S, shots).
    """
    compiled = (
        circuit
        if isinstance(circuit, CompiledCircuit)
        else compile_circuit(circuit)
    )
    rng = np.random.default_rng(rng)
    d = compiled.n_params
    lower = 2 * len(obs.groups) if allocation == "wds" else 2
    s = _check_shot_vector(s, d, lower)
    f = np.zeros(d)
    S = np.zeros(d)
    for j in range(d):
        plus, minus = shifted_pair(compiled, theta, j)
        mean_p, s_p = measure_observable(
            plus, obs, int(s[j]), rng, allocation=allocation, sampler=sampler
        )
        mean_m, s_m = measure_observable(
            minus, obs, int(s[j]), rng, allocation=allocation, sampler=sampler
        )
        f[j] = 0.5 * (mean_p - mean_m)
        S[j] = 0.25 * (s_p + s_m)
    shots = int(2 * s.sum())
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(S))):
        raise EstimatorFailureError(f"non-finite estimate: f={f}, S={S}")
    return f, S, shots


def _single_group(obs: Observable):
    if len(obs.groups) != 1:
        raise ValueError("quadratic estimators take a single-group observable")
    return obs.groups[0]


def _outcomes(bound, group, shots, rng, sampler, outcome_map):
    out = (sampler or default_sampler)(bound, [(group, shots)], rng)[0]
    if outcome_map is None:
        return out.values
    return outcome_map(out.values, out.bits)


def grad_point_quadratic(circuit, obs: Observable, theta, w, a_coeffs, s,
                         rng, *, sampler=None, outcome_map=None):
    """Gradient of the quadratic loss a0 + a1*(w<h>) + a2*(w<h>)**2.

    `w` is the trainable output weight; pass None when the loss has no
    weight parameter, in which case w = 1 is used in the formulas and no
    weight component is produced. The unshifted circuit is measured once
    with max(s) shots and that pool is shared by every component.
    `outcome_map(values, bits)` optionally re-maps raw measurement outcomes
    (used for indicator observables). Returns (f, S, shots).
    """
    compiled = (
        circuit
        if isinstance(circuit, CompiledCircuit)
        else compile_circuit(circuit)
    )
    rng = np.random.default_rng(rng)
    group = _single_group(obs)
    coeff = group.coefficient
    a0, a1, a2 = (float(a) for a in a_coeffs)
    has_weight = w is not None
    w_eff = float(w) if has_weight else 1.0
    n_circ = compiled.n_params
    d = n_circ + 1 if has_weight else n_circ
    s = _check_shot_vector(s, d, 2)

    pool_shots = int(s.max())
    out0 = coeff * _outcomes(
        compiled.bind(theta), group, pool_shots, rng, sampler, outcome_map
    )
    mean0 = float(np.mean(out0))
    var0 = float(np.var(out0, ddof=1))
    u2_0 = u_stat_power(out0, 2)

    f = np.zeros(d)
    S = np.zeros(d)
    wa2 = w_eff * a2
    # unbiased estimate of mu2**2 = (a1/2 + w*a2*<h>)**2 via the pool's
    # U-statistic; may go negative, handled per component below
    mu2 = 0.5 * a1 + wa2 * mean0
    mu2_sq_u = 0.25 * a1 * a1 + a1 * wa2 * mean0 + wa2 * wa2 * u2_0
    for j in range(n_circ):
        plus, minus = shifted_pair(compiled, theta, j)
        sj = int(s[j])
        out_p = coeff * _outcomes(plus, group, sj, rng, sampler, outcome_map)
        out_m = coeff * _outcomes(minus, group, sj, rng, sampler, outcome_map)
        mean_p, mean_m = float(np.mean(out_p)), float(np.mean(out_m))
        var_p, var_m = (
            float(np.var(out_p, ddof=1)),
            float(np.var(out_m, ddof=1)),
        )
        f[j] = w_eff * (mean_p - mean_m) * mu2
        mu1_sq_u = (
            u_stat_power(out_p, 2)
            - 2.0 * mean_p * mean_m
            + u_stat_power(out_m, 2)
        )
        S_j = mu2_sq_u * (var_p + var_m) + mu1_sq_u * wa2 * wa2 * var0
        if S_j < 0.0:
            S_j = (
                mu2 * mu2 * (var_p + var_m)
                + (mean_p - mean_m) ** 2 * wa2 * wa2 * var0
            )
        S[j] = S_j
    if has_weight:
        f[-1] = a1 * mean0 + 2.0 * wa2 * u2_0
        S_d = var0 * (
            a1 * a1 + 8.0 * a1 * wa2 * mean0 + 16.0 * wa2 * wa2 * u2_0
        )
        if S_d < 0.0:
            S_d = var0 * (a1 + 4.0 * wa2 * mean0) ** 2
        S[-1] = S_d

    kind = "quadratic" if has_weight else "quadratic_noweight"
    shots = s_count(s, 1, kind)
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(S))):
        raise EstimatorFailureError(f"non-finite estimate: f={f}, S={S}")
    return f, S, shots


# ====== Mini-batch machinery ======


class MinibatchSampler:
    """Without-replacement index stream over a dataset.

    A random permutation is consumed chunk by chunk; the final short chunk
    of an epoch is emitted as-is and a fresh permutation then starts. The
    chunk size may vary between calls (batch-size schedules).
    """

    def __init__(self, n_points: int, rng):
        if n_points < 1:
            raise ValueError("dataset must be non-empty")
        self.n_points = n_points
        self._rng = np.random.default_rng(rng)
        self._order = self._rng.permutation(n_points)
        self._cursor = 0

    def take(self, m: int) -> np.ndarray:
        if not 1 <= m <= self.n_points:
            raise ValueError(f"batch size {m} outside [1, {self.n_points}]")
        if self._cursor >= self.n_points:
            self._order = self._rng.permutation(self.n_points)
            self._cursor = 0
        batch = self._order[self._cursor : self._cursor + m]
        self._cursor += batch.shape[0]
        return batch


def minibatch_iter(n_points: int, m: int, seed):
    """Endless stream of index batches of size m (short end-of-epoch
    chunks included)."""
    if not 1 <= m <= n_points:
        raise ValueError(f"batch size {m} outside [1, {n_points}]")
    sampler = MinibatchSampler(n_points, seed)
    while True:
        yield sampler.take(m)


# ====== Shot accounting ======


def s_count(s, m: int, loss_kind: str) -> int:
    """Total shots one mini-batch gradient evaluation consumes.

    linear:              2 * m * sum(s)        (two shifts per component)
    quadratic:           m * (2 * sum(s[:-1]) + max(s))   (weight slot last;
                         the unshifted pool is measured with max(s) shots)
    quadratic_noweight:  m * (2 * sum(s) + max(s))
    """
    if m == 0:
        return 0
    s = np.asarray(s)
    if loss_kind == "linear":
        return int(2 * m * s.sum())
    if loss_kind == "quadratic":
        return int(m * (2 * s[:-1].sum() + s.max()))
    if loss_kind == "quadratic_noweight":
        return int(m * (2 * s.sum() + s.max()))
    raise ValueError(f"unknown loss kind {loss_kind!r}")


def i_evaluate(task, theta, s, m: int, rng) -> GradSample:
    """Mini-batch gradient: the batch mean of per-point estimates.

    The task supplies the batch (its epoch stream) and the per-point
    estimator; every point in the batch gets the same shot vector s.
    """
    rng = np.random.default_rng(rng)
    batch = task.next_batch(m, rng)
    d = len(s)
    f = np.zeros(d)
    S = np.zeros(d)
    shots = 0
    for index in batch:
        f_i, S_i, n_i = task.grad_point(int(index), theta, s, rng)
        f += f_i
        S += S_i
        shots += n_i
    k = batch.shape[0]
    f /= k
    S /= k
    expected = s_count(s, k, task.loss_kind)
    if shots != expected:
        raise AssertionError(
            f"shot accounting drifted: spent {shots}, contract {expected}"
        )
    return GradSample(f, S, shots)


def exact_loss(task, theta) -> float:
    """Noise-free, sampling-free loss; trace reporting only."""
    return task.exact_loss(theta)
