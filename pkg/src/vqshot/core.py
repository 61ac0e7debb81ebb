"""Dense state-vector simulator with grouped Pauli measurement.

Conventions:
    * little-endian bit order: qubit k is bit k of the basis-state index,
      so |q1 q0> = |10> has index 2 when n_qubits == 2.
    * all rotation gates are exp(-i * angle * A / 2) for a Pauli-product A.
    * observables are sums of qubit-wise commuting groups; each group is
      measured in a single shared basis obtained by per-qubit rotations
      (H for X, S-dagger then H for Y).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels as K

MAX_QUBITS = 24

_ROTATION_KINDS = {"rx": K.OP_RX, "ry": K.OP_RY, "rz": K.OP_RZ}
_FIXED_KINDS = {"h": K.OP_H, "cz": K.OP_CZ}
_PAULI_OPS = {"X": K.OP_X, "Y": K.OP_Y, "Z": K.OP_Z}
GATE_KINDS = ("h", "rx", "ry", "rz", "cz", "pauli_rot", "pauli_err")


@lru_cache(maxsize=512)
def parity_signs(dim: int, mask: int) -> np.ndarray:
    """(-1)**parity(i & mask) for i in range(dim)."""
    x = np.arange(dim, dtype=np.int64) & np.int64(mask)
    for shift in (32, 16, 8, 4, 2, 1):
        x ^= x >> shift
    return 1.0 - 2.0 * (x & 1).astype(np.float64)


@dataclass(frozen=True)
class Gate:
    """One gate: kind, target qubits, optional angle, optional Pauli axes.

    `axes` is used by "pauli_rot" (rotation generator, one of XYZ per
    target) and "pauli_err" (Pauli to apply per target, I entries skipped).
    """

    kind: str
    targets: tuple[int, ...]
    angle: float = 0.0
    axes: str = ""

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if len(set(self.targets)) != len(self.targets):
            raise ValueError(f"repeated target in {self.targets}")
        n_targets = len(self.targets)
        if self.kind == "cz":
            if n_targets != 2:
                raise ValueError("cz takes exactly two targets")
        elif self.kind in ("h", "rx", "ry", "rz"):
            if n_targets != 1:
                raise ValueError(f"{self.kind} takes exactly one target")
        else:
            if n_targets < 1:
                raise ValueError(f"{self.kind} needs at least one target")
            if len(self.axes) != n_targets:
                raise ValueError("axes length must match targets")
            allowed = "XYZ" if self.kind == "pauli_rot" else "IXYZ"
            if any(a not in allowed for a in self.axes):
                raise ValueError(f"bad axes {self.axes!r} for {self.kind}")
            if self.kind == "pauli_err" and set(self.axes) == {"I"}:
                raise ValueError("pauli_err with all-identity axes")
        if self.kind in _ROTATION_KINDS or self.kind == "pauli_rot":
            if not np.isfinite(self.angle):
                raise ValueError(f"non-finite angle {self.angle}")


@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray


def new_state(n_qubits: int) -> StateVector:
    """|0...0> on n_qubits qubits (1 <= n_qubits <= 24)."""
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise ValueError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}")
    amps = np.zeros(1 << n_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(n_qubits, amps)


def encode_gates(gates, n_qubits):
    """Encode Gate objects into (ops, arg0, arg1, angles) kernel arrays.

    pauli_rot is lowered to basis changes around a multi-Z rotation;
    pauli_err is lowered to single-qubit Pauli ops.
    """
    ops, a0, a1, ang = [], [], [], []

    def emit(op, x=0, y=0, theta=0.0):
        ops.append(op)
        a0.append(x)
        a1.append(y)
        ang.append(theta)

    for gate in gates:
        for q in gate.targets:
            if not 0 <= q < n_qubits:
                raise IndexError(f"target {q} outside [0, {n_qubits})")
        kind = gate.kind
        if kind in _ROTATION_KINDS:
            emit(_ROTATION_KINDS[kind], gate.targets[0], 0, gate.angle)
        elif kind == "h":
            emit(K.OP_H, gate.targets[0])
        elif kind == "cz":
            emit(K.OP_CZ, gate.targets[0], gate.targets[1])
        elif kind == "pauli_err":
            for q, axis in zip(gate.targets, gate.axes):
                if axis != "I":
                    emit(_PAULI_OPS[axis], q)
        else:  # pauli_rot: V ... MRZ ... V-dagger
            mask = 0
            for q, axis in zip(gate.targets, gate.axes):
                mask |= 1 << q
                if axis == "X":
                    emit(K.OP_H, q)
                elif axis == "Y":
                    emit(K.OP_SDG, q)
                    emit(K.OP_H, q)
            emit(K.OP_MRZ, mask, 0, gate.angle)
            for q, axis in zip(gate.targets, gate.axes):
                if axis == "X":
                    emit(K.OP_H, q)
                elif axis == "Y":
                    emit(K.OP_H, q)
                    emit(K.OP_S, q)
    return (
        np.array(ops, dtype=np.int64),
        np.array(a0, dtype=np.int64),
        np.array(a1, dtype=np.int64),
        np.array(ang, dtype=np.float64),
    )


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    """Unitary action of one gate; returns a new StateVector."""
    ops, a0, a1, ang = encode_gates([gate], state.n_qubits)
    amps = state.amplitudes.copy()
    K.apply_ops(amps, ops, a0, a1, ang)
    return StateVector(state.n_qubits, amps)


def run_gates(n_qubits: int, gates) -> StateVector:
    """Apply a gate sequence to |0...0>."""
    state = new_state(n_qubits)
    ops, a0, a1, ang = encode_gates(gates, n_qubits)
    K.apply_ops(state.amplitudes, ops, a0, a1, ang)
    return state


# ====== Observables ======


@dataclass(frozen=True)
class PauliString:
    """One weighted Pauli product, axes as a length-n string over IXYZ."""

    weight: float
    axes: str


@dataclass
class PauliGroup:
    """Qubit-wise commuting strings measured together.

    The group's contribution to an observable is
        coefficient * sum_strings weight * <string>.
    `norm` records sum |weight|, which bounds the operator norm of the
    weighted string sum, so single-shot outcomes lie in [-norm, norm].
    """

    coefficient: float
    strings: tuple[PauliString, ...]
    basis: str = field(init=False)
    norm: float = field(init=False)

    def __post_init__(self):
        if not self.strings:
            raise ValueError("group needs at least one string")
        if not np.isfinite(self.coefficient):
            raise ValueError("non-finite coefficient")
        n = len(self.strings[0].axes)
        basis = ["I"] * n
        for s in self.strings:
            if len(s.axes) != n:
                raise ValueError("inconsistent string lengths in group")
            if not np.isfinite(s.weight) or s.weight == 0.0:
                raise ValueError(f"bad string weight {s.weight}")
            if set(s.axes) - set("IXYZ"):
                raise ValueError(f"bad axes {s.axes!r}")
            if set(s.axes) == {"I"}:
                raise ValueError("identity string not allowed in a group")
            for q, axis in enumerate(s.axes):
                if axis == "I":
                    continue
                if basis[q] == "I":
                    basis[q] = axis
                elif basis[q] != axis:
                    raise ValueError(
                        f"strings not qubit-wise commuting at qubit {q}: "
                        f"{basis[q]} vs {axis}"
                    )
        self.basis = "".join(basis)
        self.norm = float(sum(abs(s.weight) for s in self.strings))
        ops, a0 = [], []
        for q, axis in enumerate(self.basis):
            if axis == "X":
                ops.append(K.OP_H)
                a0.append(q)
            elif axis == "Y":
                ops.extend((K.OP_SDG, K.OP_H))
                a0.extend((q, q))
        m = len(ops)
        self._rot_ops = (
            np.array(ops, dtype=np.int64),
            np.array(a0, dtype=np.int64),
            np.zeros(m, dtype=np.int64),
            np.zeros(m, dtype=np.float64),
        )
        self._masks = [
            sum(1 << q for q, axis in enumerate(s.axes) if axis != "I")
            for s in self.strings
        ]

    @property
    def n_qubits(self) -> int:
        return len(self.basis)

    def basis_rotation_ops(self):
        """Kernel ops rotating the shared basis to computational Z."""
        return self._rot_ops

    def string_masks(self):
        """Bitmask of non-identity qubits for each string."""
        return self._masks


@dataclass
class Observable:
    n_qubits: int
    groups: tuple[PauliGroup, ...]

    def __post_init__(self):
        if not self.groups:
            raise ValueError("observable needs at least one group")
        for g in self.groups:
            if g.n_qubits != self.n_qubits:
                raise ValueError("group size does not match observable")


def _rotated_probs(amps: np.ndarray, group: PauliGroup) -> np.ndarray:
    rotated = amps.copy()
    K.apply_ops(rotated, *group.basis_rotation_ops())
    return np.abs(rotated) ** 2


def group_outcome_distribution(state: StateVector, group: PauliGroup):
    """Exact per-shot outcome values and their probabilities.

    Returns (values, probs) over the 2**n basis outcomes of the group's
    shared measurement basis; values exclude the group coefficient.
    """
    probs = _rotated_probs(state.amplitudes, group)
    dim = probs.shape[0]
    values = np.zeros(dim)
    for s, mask in zip(group.strings, group.string_masks()):
        values += s.weight * parity_signs(dim, mask)
    return values, probs


def expectation(state: StateVector, obs: Observable) -> float:
    """Exact <psi|O|psi>, real by construction."""
    if obs.n_qubits != state.n_qubits:
        raise ValueError("observable size does not match state")
    total = 0.0
    for group in obs.groups:
        values, probs = group_outcome_distribution(state, group)
        total += group.coefficient * float(values @ probs)
    return total


@dataclass
class GroupSample:
    """Per-shot outcomes of one measured group.

    values: weighted string-sum eigenvalue per shot (no coefficient);
    bits:   raw little-endian bit-string per shot, as integer indices.
    """

    values: np.ndarray
    bits: np.ndarray


def sample_indices(probs: np.ndarray, shots: int, rng: np.random.Generator):
    """Draw i.i.d. basis indices from a probability vector."""
    cum = np.cumsum(probs)
    idx = np.searchsorted(cum, rng.random(shots) * cum[-1], side="right")
    return np.minimum(idx, probs.shape[0] - 1).astype(np.int64)


def sample_group_amps(
    amps: np.ndarray, group: PauliGroup, shots: int, rng: np.random.Generator
) -> GroupSample:
    """Measure every string of the group on `shots` i.i.d. preparations of
    the state with the given amplitudes."""
    if shots < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    if amps.shape[0] != 1 << group.n_qubits:
        raise ValueError("group size does not match state")
    probs = _rotated_probs(amps, group)
    total = probs.sum()
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"state norm drifted: sum(p) = {total!r}")
    probs = probs / total
    idx = sample_indices(probs, shots, rng)
    dim = probs.shape[0]
    values = np.zeros(shots)
    for s, mask in zip(group.strings, group.string_masks()):
        values += s.weight * parity_signs(dim, mask)[idx]
    return GroupSample(values, idx)


def sample_group(
    state: StateVector, group: PauliGroup, shots: int, rng: np.random.Generator
) -> GroupSample:
    """Measure every string of the group on `shots` i.i.d. preparations."""
    if group.n_qubits != state.n_qubits:
        raise ValueError("group size does not match state")
    return sample_group_amps(state.amplitudes, group, shots, rng)
