"""Time grids, Brownian paths, and the coupled Euler/Euler-Maruyama integrators.

All three integrators (deterministic flow, noisy flow, fluctuation process)
share one dyadic grid with impulse times landing exactly on grid nodes.
At an impulse node the Euler step into the node produces the left limit,
the reset applies instantaneously, and the step out of the node starts from
the post-reset value; no time is consumed by the reset.  Stored values are
right-continuous, with left limits recorded separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import IO, Optional

import numpy as np

from .dynamics import ImpulseSchedule, Model, impulse_time


class IntegrationOverflowError(RuntimeError):
    """Raised when a trajectory leaves the finite floats; never silently clamped."""


@dataclass(frozen=True)
class SampleGrid:
    """Uniform dyadic grid on [0, T] with dt = 2^-m, impulse-aligned."""

    T: float
    m: int
    dt: float
    n_steps: int
    schedule: ImpulseSchedule
    # (k, grid index of t_k) for every impulse time t_k <= T
    impulse_indices: tuple[tuple[int, int], ...]

    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def impulse_index_map(self) -> dict[int, int]:
        """Grid index -> impulse counter k."""
        return {idx: k for k, idx in self.impulse_indices}


def build_grid(T: float, m: int, schedule: ImpulseSchedule) -> SampleGrid:
    """Grid on [0, T] with dt = 2^-m; rejects misaligned alpha or T."""
    if T <= 0:
        raise ValueError(f"horizon T must be positive, got {T}")
    if m < 0:
        raise ValueError(f"dt exponent m must be >= 0, got {m}")
    scale = 2**m
    a_scaled = schedule.alpha * scale
    if a_scaled != round(a_scaled):
        raise ValueError(
            f"impulse offset alpha={schedule.alpha} is not aligned with "
            f"dt=2^-{m}: alpha*2^m = {a_scaled} is not an integer"
        )
    t_scaled = T * scale
    if t_scaled != round(t_scaled):
        raise ValueError(f"T={T} is not a multiple of dt=2^-{m}")
    n_steps = int(round(t_scaled))
    dt = 1.0 / scale
    impulses = []
    k = 1
    while impulse_time(schedule, k) <= T:
        impulses.append((k, int(round(a_scaled)) + (k - 1) * scale))
        k += 1
    return SampleGrid(
        T=T,
        m=m,
        dt=dt,
        n_steps=n_steps,
        schedule=schedule,
        impulse_indices=tuple(impulses),
    )


@dataclass(frozen=True)
class BrownianPath:
    """Increments of an r-dimensional Brownian motion on a grid."""

    increments: np.ndarray  # (n_steps, r), i.i.d. Normal(0, dt) entries
    dt: float
    seed: object


def path_seed(base_seed: int, path_index: int) -> np.random.SeedSequence:
    """Independent, scheduling-invariant seed for one Monte Carlo path."""
    return np.random.SeedSequence(base_seed, spawn_key=(path_index,))


def sample_brownian(grid: SampleGrid, r: int, seed) -> BrownianPath:
    """Draw Brownian increments on the grid; identical seed, identical bits."""
    if r < 1:
        raise ValueError("noise dimension r must be >= 1")
    rng = np.random.default_rng(seed)
    increments = rng.normal(0.0, math.sqrt(grid.dt), size=(grid.n_steps, r))
    return BrownianPath(increments=increments, dt=grid.dt, seed=seed)


@dataclass(frozen=True)
class CadlagTrajectory:
    """Right-continuous sampled path with recorded left limits at impulses.

    values[i] is the post-reset state at impulse nodes; pre_reset holds
    (impulse counter k, left-limit state) for each impulse on the grid.
    """

    grid: SampleGrid
    values: np.ndarray  # (n_steps + 1, d)
    pre_reset: tuple[tuple[int, np.ndarray], ...]

    def pre_reset_map(self) -> dict[int, np.ndarray]:
        return {k: v for k, v in self.pre_reset}


@dataclass(frozen=True)
class SimulationConfig:
    """Bundle of run parameters for a single simulation."""

    epsilon: float
    x0: np.ndarray
    seed: int
    T: float
    m: int
    alpha: float
    allow_degenerate: bool = False

    def __post_init__(self):
        if self.epsilon == 0.0 and self.allow_degenerate:
            return
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")


def _check_finite(x: np.ndarray, step: int, what: str):
    if not np.all(np.isfinite(x)):
        raise IntegrationOverflowError(
            f"{what} became non-finite at step {step}; aborting path"
        )


def integrate_deterministic(
    model: Model, grid: SampleGrid, x0: np.ndarray
) -> CadlagTrajectory:
    """Explicit Euler flow of the impulsive ODE on the grid."""
    return integrate_sde(model, grid, x0, 0.0, None)


def integrate_sde(
    model: Model,
    grid: SampleGrid,
    x0: np.ndarray,
    epsilon: float,
    path: Optional[BrownianPath],
) -> CadlagTrajectory:
    """Euler-Maruyama flow of the impulsive SDE; epsilon=0 degenerates bitwise
    to the deterministic integrator."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (model.d,):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({model.d},)")
    noisy = epsilon != 0.0
    if noisy:
        if path is None:
            raise ValueError("a BrownianPath is required when epsilon > 0")
        if path.dt != grid.dt:
            raise ValueError(f"path.dt={path.dt} does not match grid dt={grid.dt}")
        if path.increments.shape != (grid.n_steps, model.r):
            raise ValueError(
                f"increments shape {path.increments.shape} does not match "
                f"(n_steps, r) = ({grid.n_steps}, {model.r})"
            )
    dt = grid.dt
    impulses = grid.impulse_index_map()
    sigma_const = model.diffusion_constant
    values = np.empty((grid.n_steps + 1, model.d))
    values[0] = x0
    pre_reset = []
    x = x0
    for n in range(grid.n_steps):
        # left-endpoint evaluation: drift and diffusion at the pre-step state
        if noisy:
            sig = (
                sigma_const
                if sigma_const is not None
                else np.asarray(model.diffusion(x), dtype=float)
            )
            x = x + np.asarray(model.drift(x), dtype=float) * dt + epsilon * (
                sig @ path.increments[n]
            )
        else:
            x = x + np.asarray(model.drift(x), dtype=float) * dt
        _check_finite(x, n + 1, "state")
        k = impulses.get(n + 1)
        if k is not None:
            pre_reset.append((k, x))
            x = np.asarray(model.reset(x), dtype=float)
            _check_finite(x, n + 1, "post-reset state")
        values[n + 1] = x
    return CadlagTrajectory(grid=grid, values=values, pre_reset=tuple(pre_reset))


def integrate_fluctuation(
    model: Model,
    grid: SampleGrid,
    det: CadlagTrajectory,
    path: BrownianPath,
) -> CadlagTrajectory:
    """Linearized fluctuation process along the deterministic trajectory.

    Between impulses: Z' = Db(x(t)) Z + sigma(x(t)) dW, started at Z=0;
    at impulse k the left limit is reset by Dh evaluated at the
    deterministic left limit.  Uses the same increments as the noisy flow.
    """
    if det.grid is not grid and (det.grid.m != grid.m or det.grid.T != grid.T):
        raise ValueError("deterministic trajectory was produced on a different grid")
    if path.dt != grid.dt:
        raise ValueError(f"path.dt={path.dt} does not match grid dt={grid.dt}")
    if path.increments.shape != (grid.n_steps, model.r):
        raise ValueError(
            f"increments shape {path.increments.shape} does not match "
            f"(n_steps, r) = ({grid.n_steps}, {model.r})"
        )
    dt = grid.dt
    impulses = grid.impulse_index_map()
    det_pre = det.pre_reset_map()
    sigma_const = model.diffusion_constant
    values = np.zeros((grid.n_steps + 1, model.d))
    pre_reset = []
    z = np.zeros(model.d)
    for n in range(grid.n_steps):
        xn = det.values[n]
        sig = sigma_const if sigma_const is not None else np.asarray(
            model.diffusion(xn), dtype=float
        )
        z = z + (np.asarray(model.drift_jacobian(xn), float) @ z) * dt + sig @ path.increments[n]
        _check_finite(z, n + 1, "fluctuation state")
        k = impulses.get(n + 1)
        if k is not None:
            pre_reset.append((k, z))
            z = np.asarray(model.reset_jacobian(det_pre[k]), float) @ z
        values[n + 1] = z
    return CadlagTrajectory(grid=grid, values=values, pre_reset=tuple(pre_reset))


def write_trajectory_csv(
    out: IO[str],
    det: CadlagTrajectory,
    noisy: CadlagTrajectory,
    fluct: CadlagTrajectory,
    epsilon: float,
) -> int:
    """Write the coupled trajectories as CSV; returns the number of data rows.

    Columns: t, x1..xd, X1..Xd, Z1..Zd, A1..Ad, Y1..Yd, event, where
    A = x + eps*Z and Y = (X - x)/eps.  Impulse nodes emit a pre row
    (left limits) followed by a post row.  17 significant digits.
    """
    grid = det.grid
    d = det.values.shape[1]
    header = (
        ["t"]
        + [f"x{j}" for j in range(1, d + 1)]
        + [f"X{j}" for j in range(1, d + 1)]
        + [f"Z{j}" for j in range(1, d + 1)]
        + [f"A{j}" for j in range(1, d + 1)]
        + [f"Y{j}" for j in range(1, d + 1)]
        + ["event"]
    )
    out.write(",".join(header) + "\n")

    def fmt(v: float) -> str:
        return f"{v:.17g}"

    def row(t, x, X, Z, event):
        A = x + epsilon * Z
        Y = (X - x) / epsilon if epsilon != 0.0 else np.zeros_like(x)
        cells = [fmt(t)]
        for arr in (x, X, Z, A, Y):
            cells.extend(fmt(v) for v in arr)
        cells.append(event)
        out.write(",".join(cells) + "\n")

    times = grid.times()
    impulses = grid.impulse_index_map()
    det_pre = det.pre_reset_map()
    noisy_pre = noisy.pre_reset_map()
    fluct_pre = fluct.pre_reset_map()
    n_rows = 0
    for n in range(grid.n_steps + 1):
        k = impulses.get(n)
        if k is not None:
            row(times[n], det_pre[k], noisy_pre[k], fluct_pre[k], "pre")
            row(times[n], det.values[n], noisy.values[n], fluct.values[n], "post")
            n_rows += 2
        else:
            row(times[n], det.values[n], noisy.values[n], fluct.values[n], "flow")
            n_rows += 1
    return n_rows
