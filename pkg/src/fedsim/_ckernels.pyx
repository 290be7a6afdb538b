# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_pykernels``.

Same operations in the same order as the reference, so results are
bit-identical (build without -ffast-math and with fp contraction off).
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport ceil, floor, nextafter

cnp.import_array()


def path_totals(num, den):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] n_arr = np.ascontiguousarray(num, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] d_arr = np.ascontiguousarray(den, dtype=np.float64)
    if n_arr.shape[0] != d_arr.shape[0] or n_arr.shape[1] != d_arr.shape[1]:
        raise ValueError("num and den must be 2-D arrays of the same shape")
    cdef const double[:, ::1] nv = n_arr
    cdef const double[:, ::1] dv = d_arr
    cdef Py_ssize_t rows = nv.shape[0], cols = nv.shape[1], i, j
    out = np.empty(rows, dtype=np.float64)
    cdef double[::1] ov = out
    cdef double acc
    with nogil:
        for i in range(rows):
            acc = 0.0
            for j in range(cols):
                acc += nv[i, j] / dv[i, j]
            ov[i] = acc
    return out


def greedy_outsource(demand, capacity, double price, double budget, bint integral=False):
    cdef const double[::1] dv = np.ascontiguousarray(demand, dtype=np.float64)
    cdef const double[::1] cv = np.ascontiguousarray(capacity, dtype=np.float64)
    cdef Py_ssize_t n = dv.shape[0], i
    if cv.shape[0] != n:
        raise ValueError("demand and capacity lengths differ")
    local = np.empty(n)
    outs = np.empty(n)
    cost = np.empty(n)
    short = np.empty(n)
    cdef double[::1] lv = local, ov = outs, kv = cost, sv = short
    cdef double total = 0.0, d, c, loc, excess, o, k, afford, deficit, step
    with nogil:
        for i in range(n):
            d = dv[i]
            c = cv[i]
            loc = d if d < c else c
            excess = d - loc
            o = 0.0
            k = 0.0
            if excess > 0.0:
                if price > 0.0:
                    afford = (budget - total) / price
                    o = excess if excess < afford else afford
                    if o < 0.0:
                        o = 0.0
                else:
                    o = excess
                if integral:
                    o = floor(o)
                k = o * price
                while o > 0.0 and total + k > budget:
                    deficit = (total + k) - budget
                    if integral:
                        step = ceil(deficit / price)
                        o = o - (step if step > 1.0 else 1.0)
                        if o < 0.0:
                            o = 0.0
                    else:
                        o = nextafter(o - deficit / price, 0.0)
                        if o < 0.0:
                            o = 0.0
                    k = o * price
            lv[i] = loc
            ov[i] = o
            kv[i] = k
            sv[i] = excess - o
            total += k
    return local, outs, cost, short, total
