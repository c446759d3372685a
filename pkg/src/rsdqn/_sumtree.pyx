# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sum/max segment-tree kernels.

Trees are flat arrays of length ``2 * size`` with the root at index 1 and
leaves at ``[size, 2 * size)``. ``size`` is a power of two.
"""

cimport cython


def update(double[::1] sums, double[::1] maxes, Py_ssize_t size,
           long long[::1] index, double[::1] values):
    cdef Py_ssize_t i, node, n = index.shape[0]
    cdef double a, b
    for i in range(n):
        node = index[i] + size
        sums[node] = values[i]
        maxes[node] = values[i]
        node >>= 1
        while node >= 1:
            sums[node] = sums[2 * node] + sums[2 * node + 1]
            a = maxes[2 * node]
            b = maxes[2 * node + 1]
            maxes[node] = a if a >= b else b
            node >>= 1


def find(double[::1] sums, Py_ssize_t size, double[::1] mass, long long[::1] out):
    cdef Py_ssize_t i, node, n = mass.shape[0]
    cdef double m, left
    for i in range(n):
        m = mass[i]
        node = 1
        while node < size:
            left = sums[2 * node]
            if m >= left:
                m -= left
                node = 2 * node + 1
            else:
                node = 2 * node
        out[i] = node - size
