# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled gate application kernels for the statevector emulator."""

import numpy as np
cimport numpy as cnp

BACKEND = "cython"


def apply_gate1(cnp.ndarray[cnp.complex128_t, ndim=1] state,
                double complex m00, double complex m01,
                double complex m10, double complex m11,
                int target):
    cdef Py_ssize_t n = state.shape[0]
    cdef Py_ssize_t stride = 1 << target
    cdef Py_ssize_t block = stride << 1
    cdef Py_ssize_t base, lo, i0, i1
    cdef double complex a, b
    for base in range(0, n, block):
        for lo in range(stride):
            i0 = base + lo
            i1 = i0 + stride
            a = state[i0]
            b = state[i1]
            state[i0] = m00 * a + m01 * b
            state[i1] = m10 * a + m11 * b


def apply_controlled(cnp.ndarray[cnp.complex128_t, ndim=1] state,
                     double complex m00, double complex m01,
                     double complex m10, double complex m11,
                     int control, int target):
    cdef Py_ssize_t n = state.shape[0]
    cdef Py_ssize_t cbit = 1 << control
    cdef Py_ssize_t tbit = 1 << target
    cdef Py_ssize_t i, i1
    cdef double complex a, b
    for i in range(n):
        if (i & cbit) != 0 and (i & tbit) == 0:
            i1 = i | tbit
            a = state[i]
            b = state[i1]
            state[i] = m00 * a + m01 * b
            state[i1] = m10 * a + m11 * b
