"""Exact-in-distribution simulation of the factor, the stock, and drivers.

The factor uses the exact Ornstein-Uhlenbeck transition (no Euler bias):

    Y_{k+1} = Y_k * exp(alpha*dt) + nu * Z_k,
    nu**2   = beta**2 * (1 - exp(2*alpha*dt)) / (2*|alpha|).

The stock uses a positivity-preserving log scheme with the volatility
frozen at the left endpoint of each step:

    S_{k+1} = S_k * exp((mu - sigma(Y_k)**2 / 2) dt + sigma(Y_k) dW_k).

Each path owns a counter-based random stream keyed by (seed, stream_id), so
identical (seed, stream_id, grid) reproduce bit-identical arrays no matter
how many paths are generated or in what order.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from . import kernels, rng
from .model import ModelParams

__all__ = [
    "TimeGrid",
    "PathBundle",
    "PathBatch",
    "ou_transition",
    "ou_step",
    "simulate_paths",
    "ito_integral_y_dy",
    "dump_paths",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid on [start, end] with n_steps intervals."""

    start: float
    end: float
    n_steps: int

    def __post_init__(self):
        if not self.end > self.start:
            raise ValueError(f"grid requires end > start, got [{self.start}, {self.end}]")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return (self.end - self.start) / self.n_steps

    def times(self) -> NDArray[np.float64]:
        return np.linspace(self.start, self.end, self.n_steps + 1)

    @property
    def span(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class PathBundle:
    """One jointly simulated path with its seed provenance.

    ``w_increments`` drive the stock, ``u_increments`` the factor; the two
    streams are independent.  Arrays may be views into a ``PathBatch``.
    """

    grid: TimeGrid
    y_path: NDArray[np.float64]
    s_path: NDArray[np.float64]
    w_increments: NDArray[np.float64]
    u_increments: NDArray[np.float64]
    seed: int
    stream_id: int


class PathBatch:
    """Column-shared storage for many bundles; iteration yields views."""

    def __init__(self, grid, y, s, dw, du, seed, stream_ids):
        self.grid = grid
        self.y = y
        self.s = s
        self.dw = dw
        self.du = du
        self.seed = seed
        self.stream_ids = stream_ids

    @property
    def n_paths(self) -> int:
        return self.y.shape[0]

    def bundle(self, i: int) -> PathBundle:
        return PathBundle(
            grid=self.grid,
            y_path=self.y[i],
            s_path=self.s[i],
            w_increments=self.dw[i],
            u_increments=self.du[i],
            seed=self.seed,
            stream_id=int(self.stream_ids[i]),
        )

    def __len__(self) -> int:
        return self.n_paths

    def __iter__(self):
        return (self.bundle(i) for i in range(self.n_paths))


def ou_transition(alpha: float, beta: float, dt: float) -> tuple[float, float]:
    """One-step transition coefficients (phi, nu) of the exact OU kernel."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if alpha >= 0.0:
        raise ValueError(f"alpha must be negative, got {alpha}")
    phi = math.exp(alpha * dt)
    nu = beta * math.sqrt((1.0 - phi * phi) / (2.0 * abs(alpha)))
    return phi, nu


def ou_step(y, dt: float, alpha: float, beta: float, z):
    """Advance the factor by one exact transition given a N(0,1) draw."""
    phi, nu = ou_transition(alpha, beta, dt)
    return y * phi + nu * np.asarray(z)


def simulate_paths(
    params: ModelParams,
    grid: TimeGrid,
    s0: float,
    n_paths: int,
    seed: int,
    first_stream: int = 0,
    y_start: float | None = None,
) -> PathBatch:
    """Simulate ``n_paths`` joint (Y, S) paths on ``grid``.

    Path ``i`` draws from stream ``first_stream + i``: a (2, n_steps) block
    of standard normals, factor row first.  ``y_start`` defaults to the
    configured initial factor value.
    """
    if n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    if s0 <= 0.0:
        raise ValueError(f"s0 must be positive, got {s0}")
    n = grid.n_steps
    dt = grid.dt
    y0 = params.y0 if y_start is None else float(y_start)

    z = np.empty((n_paths, 2, n))
    stream_ids = np.arange(first_stream, first_stream + n_paths, dtype=np.int64)
    for i, sid in enumerate(stream_ids):
        z[i] = rng.stream(seed, int(sid)).standard_normal((2, n))
    du_z = np.ascontiguousarray(z[:, 0, :])
    dw_z = np.ascontiguousarray(z[:, 1, :])

    phi, nu = ou_transition(params.alpha, params.beta, dt)
    y = kernels.ou_paths(y0, phi, nu, du_z)

    sig = np.asarray(params.vol.evaluate(y[:, :-1]))
    sqdt = math.sqrt(dt)
    dw = dw_z * sqdt
    log_incr = (params.mu - 0.5 * sig * sig) * dt + sig * dw
    s = np.empty_like(y)
    s[:, 0] = s0
    s[:, 1:] = s0 * np.exp(np.cumsum(log_incr, axis=1))

    du = du_z * nu  # realized factor shocks (exact-transition scale)
    return PathBatch(grid=grid, y=y, s=s, dw=dw, du=du, seed=seed, stream_ids=stream_ids)


def ito_integral_y_dy(y_path: NDArray, grid: TimeGrid, beta: float) -> float:
    """Stochastic integral of Y against itself over the grid span.

    Computed through the exact identity

        int_0^tau Y dY = (Y_tau**2 - Y_0**2 - beta**2 * tau) / 2,

    which removes the O(dt) quadratic-variation bias of the left-point
    Riemann-Ito sum.
    """
    y_path = np.asarray(y_path, dtype=float)
    tau = grid.span
    return 0.5 * (y_path[-1] ** 2 - y_path[0] ** 2 - beta * beta * tau)


def dump_paths(batch: PathBatch, directory) -> list[str]:
    """Write one ``t,y,s`` CSV per stream id; returns the file paths."""
    os.makedirs(directory, exist_ok=True)
    times = batch.grid.times()
    written = []
    for bundle in batch:
        path = os.path.join(directory, f"path_{bundle.stream_id:06d}.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "y", "s"])
            for t, yv, sv in zip(times, bundle.y_path, bundle.s_path):
                writer.writerow([repr(float(t)), repr(float(yv)), repr(float(sv))])
        written.append(path)
    return written
