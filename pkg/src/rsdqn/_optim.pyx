# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled fused Adam update over flat parameter buffers."""

from libc.math cimport sqrt


def adam(double[::1] p, double[::1] g, double[::1] m, double[::1] v,
         double b1, double b2, double step_size, double root_c2, double eps):
    """One bias-corrected Adam step; ``g`` is zeroed as it is consumed."""
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double gi, mi, vi
    for i in range(n):
        gi = g[i]
        mi = b1 * m[i] + (1.0 - b1) * gi
        vi = b2 * v[i] + (1.0 - b2) * gi * gi
        m[i] = mi
        v[i] = vi
        p[i] -= step_size * mi / (sqrt(vi) / root_c2 + eps)
        g[i] = 0.0
