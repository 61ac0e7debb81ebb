"""Parameterized circuits: construction, binding, and parameter-shift pairs.

A ParamCircuit is an ordered gate list where rotation gates may reference a
parameter slot. Compiling lowers the list to kernel op arrays once; binding
a parameter vector then only rewrites the angle column, which keeps the
per-evaluation cost of gradient estimators low.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .core import Gate, MAX_QUBITS, StateVector, encode_gates, new_state

_SHIFT = np.pi / 2  # two-point parameter-shift offset for involutory generators


@dataclass(frozen=True)
class ParamGate:
    """A gate whose angle is either fixed (slot == -1) or theta[slot]."""

    gate: Gate
    slot: int = -1

    def __post_init__(self):
        if self.slot >= 0 and self.gate.kind not in ("rx", "ry", "rz", "pauli_rot"):
            raise ValueError(f"gate kind {self.gate.kind!r} cannot take a slot")


@dataclass
class ParamCircuit:
    n_qubits: int
    gates: list[ParamGate]
    n_params: int

    def __post_init__(self):
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise ValueError(f"bad qubit count {self.n_qubits}")
        referenced = np.zeros(self.n_params, dtype=np.int64)
        for pg in self.gates:
            if pg.slot >= self.n_params:
                raise IndexError(f"slot {pg.slot} outside [0, {self.n_params})")
            if pg.slot >= 0:
                referenced[pg.slot] += 1
        if self.n_params and not referenced.all():
            missing = int(np.flatnonzero(referenced == 0)[0])
            raise ValueError(f"parameter slot {missing} is never referenced")
        self.slot_refcounts = referenced


@dataclass
class BoundCircuit:
    """Concrete kernel program: a circuit with all angles fixed."""

    n_qubits: int
    ops: np.ndarray
    arg0: np.ndarray
    arg1: np.ndarray
    angles: np.ndarray


class CompiledCircuit:
    """Kernel-array form of a ParamCircuit with fast angle rebinding.

    `pad_rows`, when given, is called after each gate's encoding as
    pad_rows(gate, next_row) and must return how many reserved no-op rows
    to append there; the noise layer uses the reserved rows to splice
    per-trajectory error operations into the program.
    """

    def __init__(self, circuit: ParamCircuit, pad_rows=None):
        self.n_qubits = circuit.n_qubits
        self.n_params = circuit.n_params
        self.slot_refcounts = circuit.slot_refcounts
        ops, a0, a1, ang = [], [], [], []
        slot_rows, slot_ids = [], []
        for pg in circuit.gates:
            sub = encode_gates([pg.gate], circuit.n_qubits)
            base = len(ops)
            ops.extend(sub[0])
            a0.extend(sub[1])
            a1.extend(sub[2])
            ang.extend(sub[3])
            if pg.slot >= 0:
                # the angle-bearing row of this gate's encoding
                rot_rows = [
                    base + k
                    for k, op in enumerate(sub[0])
                    if op in (K.OP_RX, K.OP_RY, K.OP_RZ, K.OP_MRZ)
                ]
                slot_rows.append(rot_rows[0])
                slot_ids.append(pg.slot)
            if pad_rows is not None:
                for _ in range(pad_rows(pg.gate, len(ops))):
                    ops.append(K.OP_NOP)
                    a0.append(0)
                    a1.append(0)
                    ang.append(0.0)
        self.ops = np.array(ops, dtype=np.int64)
        self.arg0 = np.array(a0, dtype=np.int64)
        self.arg1 = np.array(a1, dtype=np.int64)
        self.angle_template = np.array(ang, dtype=np.float64)
        self.slot_rows = np.array(slot_rows, dtype=np.int64)
        self.slot_ids = np.array(slot_ids, dtype=np.int64)

    def bind(self, theta: np.ndarray) -> BoundCircuit:
        """Fix parameters; theta may be longer than n_params (extra slots
        belong to non-circuit parameters such as an output weight)."""
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape[0] < self.n_params:
            raise ValueError(
                f"need >= {self.n_params} parameters, got {theta.shape[0]}"
            )
        angles = self.angle_template.copy()
        angles[self.slot_rows] = theta[self.slot_ids]
        return BoundCircuit(self.n_qubits, self.ops, self.arg0, self.arg1, angles)


def compile_circuit(circuit: ParamCircuit) -> CompiledCircuit:
    return CompiledCircuit(circuit)


def run_bound(bound: BoundCircuit, out: np.ndarray | None = None) -> np.ndarray:
    """Apply a bound circuit to |0...0>, reusing `out` when provided."""
    dim = 1 << bound.n_qubits
    if out is None:
        out = np.empty(dim, dtype=np.complex128)
    out[:] = 0.0
    out[0] = 1.0
    K.apply_ops(out, bound.ops, bound.arg0, bound.arg1, bound.angles)
    return out


def run_circuit(circuit_or_compiled, theta) -> StateVector:
    """Bind and run on |0...0>; convenience wrapper for tests and tasks."""
    compiled = (
        circuit_or_compiled
        if isinstance(circuit_or_compiled, CompiledCircuit)
        else compile_circuit(circuit_or_compiled)
    )
    amps = run_bound(compiled.bind(theta))
    return StateVector(compiled.n_qubits, amps)


def psr_eligible(circuit, j: int) -> bool:
    """True when slot j is referenced by exactly one rotation gate, so the
    two-point parameter-shift rule applies exactly."""
    if not 0 <= j < circuit.n_params:
        raise IndexError(f"slot {j} outside [0, {circuit.n_params})")
    return int(circuit.slot_refcounts[j]) == 1


def shifted_pair(compiled: CompiledCircuit, theta: np.ndarray, j: int):
    """Bound circuits at theta ± (pi/2) e_j for the parameter-shift rule."""
    if not isinstance(compiled, CompiledCircuit):
        compiled = compile_circuit(compiled)
    if not psr_eligible(compiled, j):
        raise ValueError(
            f"slot {j} is referenced by {int(compiled.slot_refcounts[j])} gates; "
            "the two-point shift rule needs exactly one"
        )
    theta = np.asarray(theta, dtype=np.float64)
    plus = theta.copy()
    plus[j] += _SHIFT
    minus = theta.copy()
    minus[j] -= _SHIFT
    return compiled.bind(plus), compiled.bind(minus)


# ====== Circuit constructors ======


def _cz_chain(n_qubits: int):
    return [ParamGate(Gate("cz", (q, q + 1))) for q in range(n_qubits - 1)]


def tfim_ansatz(n_qubits: int, depth: int) -> ParamCircuit:
    """Hardware-efficient ansatz for the transverse-field Ising ground state.

    One initial RY layer, then `depth` blocks of {CZ chain, RY layer,
    RZ layer}; n_params = n_qubits * (1 + 2 * depth).
    """
    if n_qubits < 2:
        raise ValueError("ansatz needs at least two qubits")
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    gates = []
    slot = 0
    for q in range(n_qubits):
        gates.append(ParamGate(Gate("ry", (q,)), slot))
        slot += 1
    for _ in range(depth):
        gates.extend(_cz_chain(n_qubits))
        for kind in ("ry", "rz"):
            for q in range(n_qubits):
                gates.append(ParamGate(Gate(kind, (q,)), slot))
                slot += 1
    return ParamCircuit(n_qubits, gates, slot)


def feature_map(x) -> ParamCircuit:
    """Data-encoding circuit: two repetitions of (H layer, diagonal phase
    layer) where the phases are exp(-i*pi*x_i*Z_i) on each qubit and
    exp(-i*pi*x_i*x_j*Z_i Z_j) on each pair. No free parameters."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] < 1:
        raise ValueError("x must be a non-empty vector")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite feature value")
    n = x.shape[0]
    gates = []
    for _ in range(2):
        for q in range(n):
            gates.append(ParamGate(Gate("h", (q,))))
        for q in range(n):
            gates.append(ParamGate(Gate("rz", (q,), angle=2.0 * np.pi * x[q])))
        for i in range(n):
            for j in range(i + 1, n):
                gates.append(
                    ParamGate(
                        Gate(
                            "pauli_rot",
                            (i, j),
                            angle=2.0 * np.pi * x[i] * x[j],
                            axes="ZZ",
                        )
                    )
                )
    return ParamCircuit(n, gates, 0)


def trainable_circuit(n_qubits: int, depth: int) -> ParamCircuit:
    """Trainable block: depth + 1 layers of per-qubit RZ, RY, RX rotations
    (realizing RX(a) RY(b) RZ(c) as an operator product) interlaid with
    `depth` CZ chains; n_params = 3 * n_qubits * (depth + 1).

    Slot packing is layer-major, qubit-minor, with axis order (X, Y, Z)
    last: slot 3*(layer*n + q) + axis.
    """
    if n_qubits < 2:
        raise ValueError("trainable circuit needs at least two qubits")
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    gates = []
    for layer in range(depth + 1):
        if layer > 0:
            gates.extend(_cz_chain(n_qubits))
        for q in range(n_qubits):
            base = 3 * (layer * n_qubits + q)
            gates.append(ParamGate(Gate("rz", (q,)), base + 2))
            gates.append(ParamGate(Gate("ry", (q,)), base + 1))
            gates.append(ParamGate(Gate("rx", (q,)), base + 0))
    return ParamCircuit(n_qubits, gates, 3 * n_qubits * (depth + 1))


def concat(a: ParamCircuit, b: ParamCircuit) -> ParamCircuit:
    """Apply `a` then `b`; parameter slots are shared, not renumbered."""
    if a.n_qubits != b.n_qubits:
        raise ValueError("qubit counts differ")
    return ParamCircuit(
        a.n_qubits, a.gates + b.gates, max(a.n_params, b.n_params)
    )
