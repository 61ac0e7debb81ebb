"""Local depolarizing noise applied during shot sampling.

Hardware noise is modeled as stochastic Pauli-error trajectories: after
every non-exempt gate an error fires with the gate-arity probability and
applies a uniformly drawn non-identity Pauli on the gate's targets. Every
shot sees a fresh trajectory. Shots that drew the same error pattern share
one state-vector run, so the overhead over noiseless sampling scales with
the error rate rather than the shot count.

A density-matrix oracle with explicit channel mixing (capped at 4 qubits)
provides the exact noisy expectation for validating the sampled
trajectories in tests. Exact-loss reporting elsewhere in the package always
uses the noiseless simulator.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels as K
from .circuits import BoundCircuit, CompiledCircuit, ParamCircuit, run_bound
from .core import Gate, GroupSample, Observable, encode_gates, sample_group_amps

_AXES = "IXYZ"
_CODE_OPS = (K.OP_NOP, K.OP_X, K.OP_Y, K.OP_Z)


@dataclass(frozen=True)
class NoiseModel:
    """Depolarizing error rates and the gate kinds exempt from noise.

    `p1` / `p2` are the per-gate error probabilities for one- and two-qubit
    gates. An error applies a uniform non-identity Pauli on the gate's
    targets: one of {X, Y, Z} with probability p1/3 each, or one of the 15
    two-qubit options with probability p2/15 each. Z-rotation gates are
    exempt by default; multi-qubit Z rotations count as ordinary two-qubit
    gates unless `exempt_multi_z` is set.
    """

    p1: float
    p2: float
    exempt_kinds: tuple[str, ...] = ("rz",)
    exempt_multi_z: bool = False

    def __post_init__(self):
        for name, p in (("p1", self.p1), ("p2", self.p2)):
            if not (np.isfinite(p) and 0.0 <= p <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {p}")

    def is_exempt(self, gate: Gate) -> bool:
        if gate.kind in self.exempt_kinds:
            return True
        if gate.kind == "pauli_rot" and set(gate.axes) == {"Z"}:
            if len(gate.targets) == 1:
                return "rz" in self.exempt_kinds
            return self.exempt_multi_z
        return False


def _noise_site(gate: Gate, model: NoiseModel):
    """(error probability, targets) when the gate gets noise, else None."""
    if gate.kind == "pauli_err":
        raise ValueError("circuit already contains error insertions")
    if model.is_exempt(gate):
        return None
    arity = len(gate.targets)
    if arity == 1:
        return model.p1, gate.targets
    if arity == 2:
        return model.p2, gate.targets
    raise ValueError(f"no depolarizing rate for a {arity}-qubit gate")


def noisy_trajectory(
    circuit: ParamCircuit, theta, model: NoiseModel, rng
) -> list[Gate]:
    """One concrete error realization of the bound circuit, as a gate list.

    Angles are bound from `theta`; after each gate whose error fired, a
    `pauli_err` gate carries the drawn Pauli. Reference implementation for
    the trajectory distribution; `noisy_sampler` draws from the same
    distribution without materializing gate lists.
    """
    rng = np.random.default_rng(rng)
    theta = np.asarray([] if theta is None else theta, dtype=np.float64)
    out = []
    for pg in circuit.gates:
        gate = pg.gate
        if pg.slot >= 0:
            gate = replace(gate, angle=float(theta[pg.slot]))
        out.append(gate)
        site = _noise_site(gate, model)
        if site is None:
            continue
        prob, targets = site
        if rng.random() >= prob:
            continue
        if len(targets) == 1:
            axes = _AXES[int(rng.integers(1, 4))]
        else:
            code = int(rng.integers(1, 16))
            axes = _AXES[code & 3] + _AXES[code >> 2]
        out.append(Gate("pauli_err", targets, axes=axes))
    return out


class NoisyCompiledCircuit(CompiledCircuit):
    """Compiled circuit with two reserved no-op rows after every noise site.

    Trajectory runs write Pauli opcodes for a drawn error pattern into the
    reserved rows and restore them afterwards. Bound programs share the op
    table, so a write is only valid while its restore is guaranteed
    (`noisy_sampler` pairs them in a finally block); programs must not be
    sampled concurrently from threads.
    """

    def __init__(self, circuit: ParamCircuit, model: NoiseModel):
        rows, probs, q0, q1 = [], [], [], []

        def pad(gate, next_row):
            site = _noise_site(gate, model)
            if site is None:
                return 0
            prob, targets = site
            rows.append(next_row)
            probs.append(prob)
            q0.append(targets[0])
            q1.append(targets[1] if len(targets) == 2 else -1)
            return 2

        super().__init__(circuit, pad_rows=pad)
        self.model = model
        self.site_rows = np.array(rows, dtype=np.int64)
        self.site_prob = np.array(probs, dtype=np.float64)
        self.site_q0 = np.array(q0, dtype=np.int64)
        self.site_q1 = np.array(q1, dtype=np.int64)
        self.n_sites = len(rows)

    def bind(self, theta) -> "NoisyBoundCircuit":
        bound = super().bind(theta)
        return NoisyBoundCircuit(
            bound.n_qubits, bound.ops, bound.arg0, bound.arg1, bound.angles,
            self,
        )


@dataclass
class NoisyBoundCircuit(BoundCircuit):
    """Bound program carrying its noise-site table for trajectory runs."""

    program: NoisyCompiledCircuit = None


def compile_noisy(circuit: ParamCircuit, model: NoiseModel) -> NoisyCompiledCircuit:
    return NoisyCompiledCircuit(circuit, model)


def draw_error_patterns(
    program: NoisyCompiledCircuit, shots: int, rng: np.random.Generator
) -> dict[tuple, int]:
    """Group `shots` i.i.d. trajectories by their error pattern.

    A pattern is a tuple of (site index, code) pairs in circuit order. The
    code picks the Pauli: 1..3 for X/Y/Z on a one-qubit site, 1..15 on a
    two-qubit site read as the pair (code & 3, code >> 2) over IXYZ.
    Returns {pattern: shot count} in first-drawn order.
    """
    counts: dict[tuple, int] = {}
    if program.n_sites == 0:
        counts[()] = shots
        return counts
    hit = rng.random((shots, program.n_sites)) < program.site_prob
    hit_rows, hit_cols = np.nonzero(hit)
    codes = np.zeros(hit_rows.shape[0], dtype=np.int64)
    two = program.site_q1[hit_cols] >= 0
    codes[~two] = rng.integers(1, 4, size=int((~two).sum()))
    codes[two] = rng.integers(1, 16, size=int(two.sum()))
    # np.nonzero scans row-major, so hit_rows is sorted: group equal-row runs
    # instead of materialising a per-shot list (most shots draw no error).
    rows = hit_rows.tolist()
    cols = hit_cols.tolist()
    code_list = codes.tolist()
    n_hits = len(rows)
    n_dirty = 0
    placed = 0  # shot indices below this are accounted for
    i = 0
    while i < n_hits:
        row = rows[i]
        if row > placed and () not in counts:
            counts[()] = 0
        j = i + 1
        while j < n_hits and rows[j] == row:
            j += 1
        key = tuple(zip(cols[i:j], code_list[i:j]))
        counts[key] = counts.get(key, 0) + 1
        n_dirty += 1
        placed = row + 1
        i = j
    if n_dirty < shots:
        counts[()] = counts.get((), 0) + (shots - n_dirty)
    return counts


def _write_site(ops, arg0, row, q0, q1, code):
    if q1 < 0:
        ops[row] = _CODE_OPS[code]
        arg0[row] = q0
        return
    part0, part1 = code & 3, code >> 2
    if part0:
        ops[row] = _CODE_OPS[part0]
        arg0[row] = q0
    if part1:
        ops[row + 1] = _CODE_OPS[part1]
        arg0[row + 1] = q1


def noisy_sampler(bound, group_shots, rng) -> list[GroupSample]:
    """Shot sampler where every shot sees a fresh error trajectory.

    Drop-in for the estimator sampler hook. Shots are grouped by drawn
    error pattern; each distinct pattern costs one state-vector run. The
    returned outcomes are ordered by pattern rather than by shot, which
    leaves them i.i.d. draws from the per-shot trajectory distribution.
    """
    program = getattr(bound, "program", None)
    if program is None:
        raise TypeError(
            "noisy sampling needs a program from compile_noisy(); got a "
            f"bound circuit of type {type(bound).__name__}"
        )
    ops, arg0 = bound.ops, bound.arg0
    buf = np.empty(1 << bound.n_qubits, dtype=np.complex128)
    out = []
    for group, shots in group_shots:
        patterns = draw_error_patterns(program, shots, rng)
        values, bits = [], []
        for pattern, count in patterns.items():
            touched = []
            try:
                for site_idx, code in pattern:
                    row = int(program.site_rows[site_idx])
                    _write_site(
                        ops, arg0, row,
                        int(program.site_q0[site_idx]),
                        int(program.site_q1[site_idx]),
                        code,
                    )
                    touched.append(row)
                amps = run_bound(bound, out=buf)
                sample = sample_group_amps(amps, group, count, rng)
            finally:
                for row in touched:
                    ops[row] = K.OP_NOP
                    ops[row + 1] = K.OP_NOP
                    arg0[row] = 0
                    arg0[row + 1] = 0
            values.append(sample.values)
            bits.append(sample.bits)
        out.append(
            GroupSample(np.concatenate(values), np.concatenate(bits))
        )
    return out


# ====== Density-matrix oracle ======

_PAULI_MATS = {
    "I": np.eye(2, dtype=np.complex128),
    "X": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128),
    "Y": np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=np.complex128),
    "Z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=np.complex128),
}

ORACLE_MAX_QUBITS = 4


def pauli_on(n_qubits: int, placements: dict[int, str]) -> np.ndarray:
    """Dense Pauli product with qubit k acting on bit k of the index."""
    full = np.ones((1, 1), dtype=np.complex128)
    for q in range(n_qubits - 1, -1, -1):
        full = np.kron(full, _PAULI_MATS[placements.get(q, "I")])
    return full


def _gate_unitary(gate: Gate, n_qubits: int) -> np.ndarray:
    """Dense unitary of one gate, built column-by-column."""
    dim = 1 << n_qubits
    encoded = encode_gates([gate], n_qubits)
    columns = []
    for k in range(dim):
        col = np.zeros(dim, dtype=np.complex128)
        col[k] = 1.0
        K.apply_ops(col, *encoded)
        columns.append(col)
    return np.column_stack(columns)


def noisy_expectation_oracle(
    circuit: ParamCircuit, theta, obs: Observable, model: NoiseModel
) -> float:
    """Exact noisy expectation via density-matrix evolution (<= 4 qubits).

    Each gate acts as U rho U-dagger; each noise site then mixes rho with
    its uniformly Pauli-conjugated copies at the site's error rate. Test
    oracle for the trajectory sampler — quadratic in the state dimension,
    so it is deliberately capped at small systems.
    """
    n = circuit.n_qubits
    if n > ORACLE_MAX_QUBITS:
        raise ValueError(
            f"density-matrix oracle capped at {ORACLE_MAX_QUBITS} qubits, "
            f"got {n}"
        )
    if obs.n_qubits != n:
        raise ValueError("observable size does not match circuit")
    theta = np.asarray([] if theta is None else theta, dtype=np.float64)
    dim = 1 << n
    rho = np.zeros((dim, dim), dtype=np.complex128)
    rho[0, 0] = 1.0
    for pg in circuit.gates:
        gate = pg.gate
        if pg.slot >= 0:
            gate = replace(gate, angle=float(theta[pg.slot]))
        u = _gate_unitary(gate, n)
        rho = u @ rho @ u.conj().T
        site = _noise_site(gate, model)
        if site is None:
            continue
        prob, targets = site
        if prob == 0.0:
            continue
        if len(targets) == 1:
            paulis = [pauli_on(n, {targets[0]: a}) for a in "XYZ"]
        else:
            paulis = [
                pauli_on(
                    n,
                    {targets[0]: _AXES[c & 3], targets[1]: _AXES[c >> 2]},
                )
                for c in range(1, 16)
            ]
        mixed = np.zeros_like(rho)
        for pm in paulis:
            mixed += pm @ rho @ pm
        rho = (1.0 - prob) * rho + (prob / len(paulis)) * mixed
    total = 0.0
    for group in obs.groups:
        for s in group.strings:
            placements = {q: a for q, a in enumerate(s.axes) if a != "I"}
            pm = pauli_on(n, placements)
            total += (
                group.coefficient * s.weight * float(np.trace(pm @ rho).real)
            )
    return total
