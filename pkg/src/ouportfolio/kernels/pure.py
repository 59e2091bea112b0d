"""NumPy/SciPy reference implementations of the hot kernels.

These are the fallback lane selected when the compiled extension is not
available.  Semantics must match ``_native`` exactly up to floating-point
associativity; the parity tests in ``tests/test_kernels.py`` hold both
lanes to that contract.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

NAME = "pure"


def thomas_pivots(lo: np.ndarray, d: np.ndarray, up: np.ndarray) -> np.ndarray:
    """Pivots of the LU factorization of a tridiagonal matrix.

    Used to certify solvability before a sweep; a nonpositive pivot means
    the backward step is ill-posed for the given grid.
    """
    n = d.shape[0]
    piv = np.empty(n)
    piv[0] = d[0]
    for j in range(1, n):
        piv[j] = d[j] - lo[j - 1] * up[j - 1] / piv[j - 1]
    return piv


def cn_sweep(
    l_lo: np.ndarray,
    l_d: np.ndarray,
    l_up: np.ndarray,
    r_lo: np.ndarray,
    r_d: np.ndarray,
    r_up: np.ndarray,
    src: np.ndarray,
    u_term: np.ndarray,
    dt: float,
) -> np.ndarray:
    """Backward Crank-Nicolson sweep with a time-independent operator.

    Solves, for i = n_t-1 .. 0,

        M_lhs u[i] = M_rhs u[i+1] + dt/2 * (src[i] + src[i+1]),

    where the tridiagonal matrices are given by their (sub, main, super)
    diagonals and ``u[n_t] = u_term``.  Returns the full (n_t+1, n_y) grid.
    """
    src = np.ascontiguousarray(src, dtype=float)
    n_t = src.shape[0] - 1
    n_y = src.shape[1]
    ab = np.zeros((3, n_y))
    ab[0, 1:] = l_up
    ab[1] = l_d
    ab[2, :-1] = l_lo

    u = np.empty((n_t + 1, n_y))
    u[n_t] = u_term
    for i in range(n_t - 1, -1, -1):
        rhs = r_d * u[i + 1]
        rhs[1:] += r_lo * u[i + 1, :-1]
        rhs[:-1] += r_up * u[i + 1, 1:]
        rhs += 0.5 * dt * (src[i] + src[i + 1])
        u[i] = solve_banded((1, 1), ab, rhs, check_finite=False)
    return u


def ou_paths(y0, phi: float, nu: float, z: np.ndarray) -> np.ndarray:
    """Exact-transition Ornstein-Uhlenbeck recursion.

    ``y[k+1] = phi*y[k] + nu*z[k]`` with ``phi = exp(alpha*dt)`` and
    ``nu**2 = beta**2 (1 - phi**2) / (2|alpha|)``.  ``z`` has shape
    (n_paths, n_steps); ``y0`` is a scalar or an (n_paths,) array.
    Returns (n_paths, n_steps+1).
    """
    z = np.ascontiguousarray(z, dtype=float)
    n_paths, n_steps = z.shape
    y = np.empty((n_paths, n_steps + 1))
    y[:, 0] = y0
    for k in range(n_steps):
        y[:, k + 1] = phi * y[:, k] + nu * z[:, k]
    return y


def ou_stop_stats(
    y0, phi: float, nu: float, z: np.ndarray, dt: float, threshold: float
):
    """First crossing of the running trapezoid integral of Y**2.

    For each path, accumulates I(t) = int_0^t Y_s**2 ds by the trapezoid
    rule and locates the first time I(t) >= threshold, interpolating the
    crossing linearly inside the step.  Returns ``(tau, y_tau, reached)``
    where ``tau`` and ``y_tau`` are NaN / the terminal value for paths that
    never cross.
    """
    y = ou_paths(y0, phi, nu, z)
    y2 = y * y
    incr = 0.5 * dt * (y2[:, 1:] + y2[:, :-1])
    cum = np.cumsum(incr, axis=1)
    reached = cum[:, -1] >= threshold
    n_paths, n_steps = incr.shape

    tau = np.full(n_paths, np.nan)
    y_tau = y[:, -1].copy()
    if not np.any(reached):
        return tau, y_tau, reached

    idx = np.argmax(cum >= threshold, axis=1)
    rows = np.nonzero(reached)[0]
    k = idx[rows]
    prev = np.where(k > 0, cum[rows, np.maximum(k - 1, 0)], 0.0)
    step_mass = cum[rows, k] - prev
    frac = np.where(step_mass > 0.0, (threshold - prev) / step_mass, 1.0)
    frac = np.clip(frac, 0.0, 1.0)
    tau[rows] = (k + frac) * dt
    y_tau[rows] = y[rows, k] + (y[rows, k + 1] - y[rows, k]) * frac
    return tau, y_tau, reached
