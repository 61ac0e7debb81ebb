# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled state-vector kernel: sequential gate application on a dense
complex128 amplitude array. Opcode table documented in _kernels/__init__.py."""

from libc.math cimport cos, sin

cdef extern from *:
    """
    static inline int vq_parity64(unsigned long long x) {
        return __builtin_parityll(x);
    }
    """
    int vq_parity64(unsigned long long x) nogil

ctypedef double complex cplx

cdef double RSQRT2 = 0.7071067811865475244

cdef int OP_NOP = -1
cdef int OP_H = 0
cdef int OP_RX = 1
cdef int OP_RY = 2
cdef int OP_RZ = 3
cdef int OP_CZ = 4
cdef int OP_X = 5
cdef int OP_Y = 6
cdef int OP_Z = 7
cdef int OP_SDG = 8
cdef int OP_S = 9
cdef int OP_MRZ = 10


cdef void _u1q(cplx* a, Py_ssize_t dim, int q,
               cplx u00, cplx u01, cplx u10, cplx u11) noexcept nogil:
    cdef Py_ssize_t step = (<Py_ssize_t>1) << q
    cdef Py_ssize_t base = 0, i
    cdef cplx x, y
    while base < dim:
        for i in range(base, base + step):
            x = a[i]
            y = a[i + step]
            a[i] = u00 * x + u01 * y
            a[i + step] = u10 * x + u11 * y
        base += 2 * step


cdef void _diag1q(cplx* a, Py_ssize_t dim, int q, cplx d0, cplx d1) noexcept nogil:
    cdef Py_ssize_t step = (<Py_ssize_t>1) << q
    cdef Py_ssize_t base = 0, i
    while base < dim:
        for i in range(base, base + step):
            a[i] = d0 * a[i]
            a[i + step] = d1 * a[i + step]
        base += 2 * step


cdef void _swap1q(cplx* a, Py_ssize_t dim, int q, cplx lo, cplx hi) noexcept nogil:
    # |0><1| gets weight lo, |1><0| gets weight hi: X is (1,1), Y is (-i,i).
    cdef Py_ssize_t step = (<Py_ssize_t>1) << q
    cdef Py_ssize_t base = 0, i
    cdef cplx x
    while base < dim:
        for i in range(base, base + step):
            x = a[i]
            a[i] = lo * a[i + step]
            a[i + step] = hi * x
        base += 2 * step


cdef void _cz(cplx* a, Py_ssize_t dim, int q0, int q1) noexcept nogil:
    cdef Py_ssize_t m = ((<Py_ssize_t>1) << q0) | ((<Py_ssize_t>1) << q1)
    cdef Py_ssize_t i
    for i in range(dim):
        if (i & m) == m:
            a[i] = -a[i]


cdef void _mrz(cplx* a, Py_ssize_t dim, unsigned long long mask, double angle) noexcept nogil:
    cdef double c = cos(0.5 * angle), s = sin(0.5 * angle)
    cdef cplx em, ep
    em.real = c
    em.imag = -s
    ep.real = c
    ep.imag = s
    cdef Py_ssize_t i
    for i in range(dim):
        if vq_parity64((<unsigned long long>i) & mask):
            a[i] = ep * a[i]
        else:
            a[i] = em * a[i]


def apply_ops(cplx[::1] amps, long long[::1] ops, long long[::1] arg0,
              long long[::1] arg1, double[::1] angles):
    """Apply the encoded gate sequence to `amps` in place."""
    cdef Py_ssize_t dim = amps.shape[0]
    cdef Py_ssize_t n = ops.shape[0]
    cdef cplx* a = &amps[0] if dim > 0 else NULL
    cdef Py_ssize_t g
    cdef int op
    cdef double th, c, s
    cdef cplx i_unit
    i_unit.real = 0.0
    i_unit.imag = 1.0
    with nogil:
        for g in range(n):
            op = <int>ops[g]
            if op == OP_NOP:
                continue
            elif op == OP_H:
                _u1q(a, dim, <int>arg0[g], RSQRT2, RSQRT2, RSQRT2, -RSQRT2)
            elif op == OP_RX:
                th = 0.5 * angles[g]
                c = cos(th)
                s = sin(th)
                _u1q(a, dim, <int>arg0[g], c, -s * i_unit, -s * i_unit, c)
            elif op == OP_RY:
                th = 0.5 * angles[g]
                c = cos(th)
                s = sin(th)
                _u1q(a, dim, <int>arg0[g], c, -s, s, c)
            elif op == OP_RZ:
                th = 0.5 * angles[g]
                c = cos(th)
                s = sin(th)
                _diag1q(a, dim, <int>arg0[g], c - s * i_unit, c + s * i_unit)
            elif op == OP_CZ:
                _cz(a, dim, <int>arg0[g], <int>arg1[g])
            elif op == OP_X:
                _swap1q(a, dim, <int>arg0[g], 1.0, 1.0)
            elif op == OP_Y:
                _swap1q(a, dim, <int>arg0[g], -i_unit, i_unit)
            elif op == OP_Z:
                _diag1q(a, dim, <int>arg0[g], 1.0, -1.0)
            elif op == OP_SDG:
                _diag1q(a, dim, <int>arg0[g], 1.0, -i_unit)
            elif op == OP_S:
                _diag1q(a, dim, <int>arg0[g], 1.0, i_unit)
            elif op == OP_MRZ:
                _mrz(a, dim, <unsigned long long>arg0[g], angles[g])
            else:
                with gil:
                    raise ValueError(f"unknown opcode {op}")
