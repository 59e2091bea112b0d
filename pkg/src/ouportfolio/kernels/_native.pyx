# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: Crank-Nicolson sweeps and Ornstein-Uhlenbeck scans.

Same contracts as ``kernels.pure``; see that module for documentation.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

NAME = "native"


def thomas_pivots(double[::1] lo, double[::1] d, double[::1] up):
    cdef Py_ssize_t n = d.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] piv_arr = np.empty(n)
    cdef double[::1] piv = piv_arr
    cdef Py_ssize_t j
    piv[0] = d[0]
    for j in range(1, n):
        piv[j] = d[j] - lo[j - 1] * up[j - 1] / piv[j - 1]
    return piv_arr


def cn_sweep(
    double[::1] l_lo,
    double[::1] l_d,
    double[::1] l_up,
    double[::1] r_lo,
    double[::1] r_d,
    double[::1] r_up,
    double[:, ::1] src,
    double[::1] u_term,
    double dt,
):
    cdef Py_ssize_t n_t = src.shape[0] - 1
    cdef Py_ssize_t n_y = src.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] u_arr = np.empty((n_t + 1, n_y))
    cdef double[:, ::1] u = u_arr
    cdef cnp.ndarray[cnp.float64_t, ndim=1] scratch = np.empty(3 * n_y)
    cdef double[::1] piv = scratch[:n_y]
    cdef double[::1] w = scratch[n_y:2 * n_y]
    cdef double[::1] rhs = scratch[2 * n_y:]
    cdef Py_ssize_t i, j
    cdef double half_dt = 0.5 * dt

    # Prefactor the LHS once: piv[j] pivots, w[j] normalized superdiagonal.
    piv[0] = l_d[0]
    w[0] = l_up[0] / piv[0]
    for j in range(1, n_y - 1):
        piv[j] = l_d[j] - l_lo[j - 1] * w[j - 1]
        w[j] = l_up[j] / piv[j]
    piv[n_y - 1] = l_d[n_y - 1] - l_lo[n_y - 2] * w[n_y - 2]
    for j in range(n_y):
        if piv[j] <= 0.0:
            raise ArithmeticError(
                f"nonpositive pivot {piv[j]!r} at row {j} in tridiagonal factorization"
            )

    for j in range(n_y):
        u[n_t, j] = u_term[j]

    for i in range(n_t - 1, -1, -1):
        rhs[0] = r_d[0] * u[i + 1, 0] + r_up[0] * u[i + 1, 1] \
            + half_dt * (src[i, 0] + src[i + 1, 0])
        for j in range(1, n_y - 1):
            rhs[j] = (
                r_lo[j - 1] * u[i + 1, j - 1]
                + r_d[j] * u[i + 1, j]
                + r_up[j] * u[i + 1, j + 1]
                + half_dt * (src[i, j] + src[i + 1, j])
            )
        rhs[n_y - 1] = r_lo[n_y - 2] * u[i + 1, n_y - 2] + r_d[n_y - 1] * u[i + 1, n_y - 1] \
            + half_dt * (src[i, n_y - 1] + src[i + 1, n_y - 1])

        # Forward elimination, then back substitution.
        rhs[0] = rhs[0] / piv[0]
        for j in range(1, n_y):
            rhs[j] = (rhs[j] - l_lo[j - 1] * rhs[j - 1]) / piv[j]
        u[i, n_y - 1] = rhs[n_y - 1]
        for j in range(n_y - 2, -1, -1):
            u[i, j] = rhs[j] - w[j] * u[i, j + 1]
    return u_arr


def ou_paths(y0, double phi, double nu, double[:, ::1] z):
    cdef Py_ssize_t n_paths = z.shape[0]
    cdef Py_ssize_t n_steps = z.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] y_arr = np.empty((n_paths, n_steps + 1))
    cdef double[:, ::1] y = y_arr
    cdef cnp.ndarray[cnp.float64_t, ndim=1] y0_arr = \
        np.broadcast_to(np.asarray(y0, dtype=np.float64), (n_paths,)).copy()
    cdef double[::1] y0v = y0_arr
    cdef Py_ssize_t p, k
    cdef double cur
    for p in range(n_paths):
        cur = y0v[p]
        y[p, 0] = cur
        for k in range(n_steps):
            cur = phi * cur + nu * z[p, k]
            y[p, k + 1] = cur
    return y_arr


def ou_stop_stats(y0, double phi, double nu, double[:, ::1] z, double dt,
                  double threshold):
    cdef Py_ssize_t n_paths = z.shape[0]
    cdef Py_ssize_t n_steps = z.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] tau_arr = np.full(n_paths, np.nan)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ytau_arr = np.empty(n_paths)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] reached_arr = np.zeros(n_paths, dtype=np.uint8)
    cdef double[::1] tau = tau_arr
    cdef double[::1] ytau = ytau_arr
    cdef cnp.uint8_t[::1] reached = reached_arr
    cdef cnp.ndarray[cnp.float64_t, ndim=1] y0_arr = \
        np.broadcast_to(np.asarray(y0, dtype=np.float64), (n_paths,)).copy()
    cdef double[::1] y0v = y0_arr
    cdef Py_ssize_t p, k
    cdef double cur, nxt, cum, prev, incr, frac
    for p in range(n_paths):
        cur = y0v[p]
        cum = 0.0
        ytau[p] = cur
        for k in range(n_steps):
            nxt = phi * cur + nu * z[p, k]
            prev = cum
            incr = 0.5 * dt * (cur * cur + nxt * nxt)
            cum = cum + incr
            if cum >= threshold:
                if incr > 0.0:
                    frac = (threshold - prev) / incr
                else:
                    frac = 1.0
                if frac < 0.0:
                    frac = 0.0
                elif frac > 1.0:
                    frac = 1.0
                tau[p] = (k + frac) * dt
                ytau[p] = cur + (nxt - cur) * frac
                reached[p] = 1
                break
            cur = nxt
        if not reached[p]:
            ytau[p] = cur
    return tau_arr, ytau_arr, reached_arr.view(np.bool_)
