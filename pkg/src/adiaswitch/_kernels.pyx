# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loop: RK4 steps of dU/dt = G(t) U with polar re-unitarization.

Must stay numerically equivalent to ``_kernels_py.rk4_propagate``.
"""

import numpy as np

from libc.math cimport sqrt

ctypedef double complex cplx


cdef inline void _matmul(const cplx* a, const cplx* b, cplx* out, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j, k
    cdef cplx acc
    for i in range(n):
        for j in range(n):
            acc = 0
            for k in range(n):
                acc = acc + a[i * n + k] * b[k * n + j]
            out[i * n + j] = acc


cdef inline double _gram_defect(const cplx* x, cplx* gram, Py_ssize_t n) noexcept nogil:
    """gram <- X^H X - I; returns its Frobenius norm."""
    cdef Py_ssize_t i, j, k
    cdef cplx acc
    cdef double total = 0.0
    for i in range(n):
        for j in range(n):
            acc = 0
            for k in range(n):
                acc = acc + x[k * n + i].conjugate() * x[k * n + j]
            if i == j:
                acc = acc - 1.0
            gram[i * n + j] = acc
            total += acc.real * acc.real + acc.imag * acc.imag
    return sqrt(total)


def rk4_propagate(const cplx[:, :, ::1] gen, cplx[:, ::1] u, double h,
                  bint reunitarize=True, int max_polish=6):
    """Advance ``u`` in place through ``(len(gen) - 1) // 2`` steps.

    ``gen[2 i]``, ``gen[2 i + 1]`` and ``gen[2 i + 2]`` hold the generator at
    the start, middle and end of step ``i``.  Returns the largest Frobenius
    defect ``||U^H U - I||`` seen before re-unitarization.
    """
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t steps = (gen.shape[0] - 1) // 2
    cdef Py_ssize_t nn = n * n
    cdef Py_ssize_t s, i, it
    cdef double half = 0.5 * h, sixth = h / 6.0
    cdef double defect, worst = 0.0

    work = np.empty((7, n, n), dtype=np.complex128)
    cdef cplx[:, :, ::1] w = work
    cdef cplx* x = &u[0, 0]
    cdef cplx* k1 = &w[0, 0, 0]
    cdef cplx* k2 = &w[1, 0, 0]
    cdef cplx* k3 = &w[2, 0, 0]
    cdef cplx* k4 = &w[3, 0, 0]
    cdef cplx* tmp = &w[4, 0, 0]
    cdef cplx* gram = &w[5, 0, 0]
    cdef cplx* nxt = &w[6, 0, 0]
    cdef const cplx* g0
    cdef const cplx* gm
    cdef const cplx* g1

    with nogil:
        for s in range(steps):
            g0 = &gen[2 * s, 0, 0]
            gm = &gen[2 * s + 1, 0, 0]
            g1 = &gen[2 * s + 2, 0, 0]
            _matmul(g0, x, k1, n)
            for i in range(nn):
                tmp[i] = x[i] + half * k1[i]
            _matmul(gm, tmp, k2, n)
            for i in range(nn):
                tmp[i] = x[i] + half * k2[i]
            _matmul(gm, tmp, k3, n)
            for i in range(nn):
                tmp[i] = x[i] + h * k3[i]
            _matmul(g1, tmp, k4, n)
            for i in range(nn):
                x[i] = x[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])

            defect = _gram_defect(x, gram, n)
            if defect > worst:
                worst = defect
            if not reunitarize:
                continue
            # Newton-Schulz iteration towards the polar factor: X <- X (I - D / 2)
            for it in range(max_polish):
                if defect < 1e-15:
                    break
                for i in range(nn):
                    gram[i] = -0.5 * gram[i]
                for i in range(n):
                    gram[i * n + i] = gram[i * n + i] + 1.0
                _matmul(x, gram, nxt, n)
                for i in range(nn):
                    x[i] = nxt[i]
                defect = _gram_defect(x, gram, n)
    return worst
