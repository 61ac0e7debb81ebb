"""Pure-NumPy implementation of the state-vector kernel.

Semantically identical to the compiled core in _statevec.pyx; used when the
extension is unavailable or when VQSHOT_BACKEND=python.
"""

from functools import lru_cache

import numpy as np

_RSQRT2 = 1.0 / np.sqrt(2.0)


@lru_cache(maxsize=256)
def _parity_signs(dim, mask):
    """(-1)**parity(i & mask) for i in range(dim), as a float array."""
    x = np.arange(dim, dtype=np.int64) & np.int64(mask)
    for shift in (32, 16, 8, 4, 2, 1):
        x ^= x >> shift
    return 1.0 - 2.0 * (x & 1).astype(np.float64)


def _mat1q(amps, q, u00, u01, u10, u11):
    view = amps.reshape(-1, 2, 1 << q)
    a0 = view[:, 0, :].copy()
    a1 = view[:, 1, :]
    view[:, 0, :] = u00 * a0 + u01 * a1
    view[:, 1, :] = u10 * a0 + u11 * a1


def _diag1q(amps, q, d0, d1):
    view = amps.reshape(-1, 2, 1 << q)
    view[:, 0, :] *= d0
    view[:, 1, :] *= d1


def _swap1q(amps, q, lo, hi):
    view = amps.reshape(-1, 2, 1 << q)
    a0 = view[:, 0, :].copy()
    view[:, 0, :] = lo * view[:, 1, :]
    view[:, 1, :] = hi * a0


def apply_ops(amps, ops, arg0, arg1, angles):
    """Apply the encoded gate sequence to `amps` in place."""
    dim = amps.shape[0]
    for g in range(len(ops)):
        op = ops[g]
        if op == -1:  # NOP
            continue
        elif op == 0:  # H
            _mat1q(amps, arg0[g], _RSQRT2, _RSQRT2, _RSQRT2, -_RSQRT2)
        elif op == 1:  # RX
            c, s = np.cos(0.5 * angles[g]), np.sin(0.5 * angles[g])
            _mat1q(amps, arg0[g], c, -1j * s, -1j * s, c)
        elif op == 2:  # RY
            c, s = np.cos(0.5 * angles[g]), np.sin(0.5 * angles[g])
            _mat1q(amps, arg0[g], c, -s, s, c)
        elif op == 3:  # RZ
            c, s = np.cos(0.5 * angles[g]), np.sin(0.5 * angles[g])
            _diag1q(amps, arg0[g], c - 1j * s, c + 1j * s)
        elif op == 4:  # CZ
            m = (1 << int(arg0[g])) | (1 << int(arg1[g]))
            idx = np.arange(dim)
            sel = (idx & m) == m
            amps[sel] = -amps[sel]
        elif op == 5:  # X
            _swap1q(amps, arg0[g], 1.0, 1.0)
        elif op == 6:  # Y
            _swap1q(amps, arg0[g], -1j, 1j)
        elif op == 7:  # Z
            _diag1q(amps, arg0[g], 1.0, -1.0)
        elif op == 8:  # S-dagger
            _diag1q(amps, arg0[g], 1.0, -1j)
        elif op == 9:  # S
            _diag1q(amps, arg0[g], 1.0, 1j)
        elif op == 10:  # multi-qubit Z rotation over a bitmask
            c, s = np.cos(0.5 * angles[g]), np.sin(0.5 * angles[g])
            signs = _parity_signs(dim, int(arg0[g]))
            amps *= np.where(signs < 0, c + 1j * s, c - 1j * s)
        else:
            raise ValueError(f"unknown opcode {op}")
