# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled tree kernel: backward value under the kappa-scaled abs driver."""
import numpy as np

from libc.math cimport fabs, sqrt


def tree_backward_value(terminal, double dt, double kappa, bint include_y):
    """Backward value at the root of a recombining binomial tree.

    Matches the numpy twin in ``_tree_np``: driver ``kappa*(|y| + |z|)``
    when ``include_y`` else ``kappa*|z|``, y implicit, z by difference
    quotient over one step.
    """
    w_arr = np.array(terminal, dtype=np.float64)
    if w_arr.ndim != 1 or w_arr.size == 0:
        raise ValueError("terminal must be a non-empty 1-d array")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if include_y and fabs(kappa) * dt >= 1.0:
        raise ValueError("kappa * dt must be < 1 for the implicit step")

    cdef double[::1] w = np.ascontiguousarray(w_arr)
    cdef Py_ssize_t n = w.shape[0]
    cdef Py_ssize_t level, k
    cdef double half_inv_sq = 0.5 / sqrt(dt)
    cdef double kdt = kappa * dt
    cdef double lo, hi, a

    for level in range(n - 2, -1, -1):
        for k in range(level + 1):
            lo = w[k]
            hi = w[k + 1]
            a = 0.5 * (lo + hi) + fabs((hi - lo) * half_inv_sq) * kdt
            if include_y:
                if a >= 0.0:
                    a = a / (1.0 - kdt)
                else:
                    a = a / (1.0 + kdt)
            w[k] = a
    return w[0]
