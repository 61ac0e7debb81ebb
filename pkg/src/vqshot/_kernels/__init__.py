"""Backend selection for the state-vector kernels.

The compiled Cython core is used when its extension module is importable;
otherwise the pure-NumPy fallback takes over with identical semantics.
Set VQSHOT_BACKEND=python to force the fallback (used by the backend
benchmark and the equivalence tests).

Opcode table shared by both backends (must stay in sync with _statevec.pyx):

    OP_NOP  -1   skipped (reserved slot for noise injection)
    OP_H     0   Hadamard                        arg0 = qubit
    OP_RX    1   exp(-i*angle*X/2)               arg0 = qubit
    OP_RY    2   exp(-i*angle*Y/2)               arg0 = qubit
    OP_RZ    3   exp(-i*angle*Z/2)               arg0 = qubit
    OP_CZ    4   controlled-Z                    arg0, arg1 = qubits
    OP_X     5   Pauli X                         arg0 = qubit
    OP_Y     6   Pauli Y                         arg0 = qubit
    OP_Z     7   Pauli Z                         arg0 = qubit
    OP_SDG   8   S-dagger = diag(1, -i)          arg0 = qubit
    OP_S     9   S = diag(1, i)                  arg0 = qubit
    OP_MRZ  10   exp(-i*angle*Z⊗...⊗Z/2)         arg0 = qubit bitmask

Bit order is little-endian: qubit k corresponds to bit k of the basis index.
"""

import os

OP_NOP = -1
OP_H = 0
OP_RX = 1
OP_RY = 2
OP_RZ = 3
OP_CZ = 4
OP_X = 5
OP_Y = 6
OP_Z = 7
OP_SDG = 8
OP_S = 9
OP_MRZ = 10

from . import py_fallback

if os.environ.get("VQSHOT_BACKEND", "").lower() == "python":
    _impl = py_fallback
    BACKEND = "python"
else:
    try:
        from . import _statevec as _impl

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build environment
        _impl = py_fallback
        BACKEND = "python"

apply_ops = _impl.apply_ops


def available_backends():
    """Names of the importable backends ("cython" is absent if unbuilt)."""
    out = ["python"]
    try:
        from . import _statevec  # noqa: F401

        out.insert(0, "cython")
    except ImportError:  # pragma: no cover
        pass
    return out


def get_apply_ops(backend):
    """Fetch a specific backend's apply_ops (for benchmarks and tests)."""
    if backend == "python":
        return py_fallback.apply_ops
    if backend == "cython":
        from . import _statevec

        return _statevec.apply_ops
    raise ValueError(f"unknown backend {backend!r}")
