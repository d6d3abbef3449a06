"""Discrete probability-flow ODE sampling and its Gaussian closed form.

Sampling uses the sigma(t) = t convention, under which the first-order
reverse update collapses to a convex combination of the current state and
the denoiser output:

    x_{i+1} = (t_{i+1}/t_i) x_i + (1 - t_{i+1}/t_i) D(x_i; t_i)

with an implicit terminal level 0, where the step returns the denoiser
output at the last positive level. For a Gaussian denoiser the whole
trajectory has a closed form (a per-eigenmode rescaling of the start),
which serves as the integration oracle.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import GaussianStats, write_raw_f64
from .denoisers import Denoiser
from .errors import DimensionMismatchError, ValueRangeError


@dataclass(frozen=True)
class SigmaSchedule:
    """Strictly decreasing positive noise levels with an implicit final 0."""

    sigma_min: float
    sigma_max: float
    rho: float
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 1:
            raise ValueRangeError("schedule needs at least one level")
        if np.any(values <= 0) or np.any(np.diff(values) >= 0):
            raise ValueRangeError("schedule levels must be positive and strictly decreasing")
        if values[0] != self.sigma_max or values[-1] != self.sigma_min:
            raise ValueRangeError("schedule endpoints must equal sigma_max / sigma_min exactly")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n_steps(self) -> int:
        return self.values.size

    def tail(self, start: int) -> "SigmaSchedule":
        """Sub-schedule from level index ``start`` to the end."""
        if not 0 <= start < self.n_steps:
            raise ValueRangeError(f"start index {start} outside schedule")
        v = self.values[start:]
        return SigmaSchedule(sigma_min=float(v[-1]), sigma_max=float(v[0]),
                             rho=self.rho, values=v.copy())


@dataclass(frozen=True)
class Trajectory:
    """States of one sampling run, from sigma_max down to the terminal 0."""

    sigmas: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        sigmas = np.asarray(self.sigmas, dtype=np.float64)
        states = np.asarray(self.states, dtype=np.float64)
        if states.ndim != 2 or sigmas.shape != (states.shape[0],):
            raise DimensionMismatchError("trajectory needs one sigma per state row")
        sigmas.setflags(write=False)
        states.setflags(write=False)
        object.__setattr__(self, "sigmas", sigmas)
        object.__setattr__(self, "states", states)

    def __len__(self) -> int:
        return self.sigmas.size

    def __iter__(self):
        return zip(self.sigmas, self.states)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def edm_schedule(sigma_min: float, sigma_max: float, rho: float, n_steps: int) -> SigmaSchedule:
    """Power-law interpolation of noise levels between sigma_max and sigma_min.

    values[i] = (sigma_max^(1/rho) + i/(n-1) * (sigma_min^(1/rho) - sigma_max^(1/rho)))^rho
    """
    if not (0 < sigma_min < sigma_max):
        raise ValueRangeError(f"need 0 < sigma_min < sigma_max, got {sigma_min}, {sigma_max}")
    if rho <= 0:
        raise ValueRangeError(f"rho must be positive, got {rho}")
    if n_steps < 2:
        raise ValueRangeError(f"n_steps must be at least 2, got {n_steps}")
    ramp = np.arange(n_steps) / (n_steps - 1)
    values = (sigma_max ** (1 / rho) + ramp * (sigma_min ** (1 / rho) - sigma_max ** (1 / rho))) ** rho
    values[0], values[-1] = sigma_max, sigma_min  # pin endpoints against fp drift
    return SigmaSchedule(sigma_min=sigma_min, sigma_max=sigma_max, rho=rho, values=values)


def ode_sample(D: Denoiser, schedule: SigmaSchedule, x_T: np.ndarray) -> Trajectory:
    """Integrate the reverse ODE with first-order (Euler) steps.

    The terminal step to level 0 returns D evaluated at the last positive
    level. Denoiser failures propagate annotated with the step index.
    """
    x_T = np.asarray(x_T, dtype=np.float64)
    if x_T.shape != (D.dim,):
        raise DimensionMismatchError(f"start state shape {x_T.shape} != (dim={D.dim},)")
    t = schedule.values
    states = [x_T]
    x = x_T
    for i in range(schedule.n_steps - 1):
        try:
            denoised = D.evaluate(x, float(t[i]))
        except Exception as exc:
            exc.args = (f"denoiser failed at step {i} (sigma={t[i]}): {exc}",)
            raise
        ratio = t[i + 1] / t[i]
        x = ratio * x + (1.0 - ratio) * denoised
        states.append(x)
    try:
        final = D.evaluate(x, float(t[-1]))
    except Exception as exc:
        exc.args = (f"denoiser failed at terminal step (sigma={t[-1]}): {exc}",)
        raise
    states.append(final)
    return Trajectory(sigmas=np.append(t, 0.0), states=np.stack(states))


def gaussian_trajectory(stats: GaussianStats, x_T: np.ndarray,
                        schedule: SigmaSchedule) -> Trajectory:
    """Closed-form solution of the reverse ODE under the Gaussian denoiser.

    Each eigencomponent of x_T - mean is scaled by
    sqrt((sigma(t)^2 + eigval) / (sigma(T)^2 + eigval)); the component
    orthogonal to the basis follows the same law with eigval = 0, i.e. a
    plain sigma(t)/sigma(T) decay that vanishes at the terminal level.
    """
    x_T = np.asarray(x_T, dtype=np.float64)
    if x_T.shape != (stats.dim,):
        raise DimensionMismatchError(f"start state shape {x_T.shape} != (dim={stats.dim},)")
    sigma_T = schedule.values[0]
    lam = stats.eigvals
    centered = x_T - stats.mean
    proj = centered @ stats.basis
    ortho = centered - stats.basis @ proj
    sigmas = np.append(schedule.values, 0.0)
    states = np.empty((sigmas.size, stats.dim))
    for k, s in enumerate(sigmas):
        coef = np.sqrt((s**2 + lam) / (sigma_T**2 + lam))
        states[k] = stats.mean + stats.basis @ (coef * proj) + (s / sigma_T) * ortho
    states[0] = x_T  # coefficient is exactly 1 at sigma(T)
    return Trajectory(sigmas=sigmas, states=states)


def trajectory_to_csv(traj: Trajectory, path: str | Path) -> None:
    """Write one row per step: step index, sigma, then the state values."""
    dim = traj.states.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "sigma"] + [f"x{j}" for j in range(dim)])
        for i, (sigma, state) in enumerate(traj):
            writer.writerow([i, repr(float(sigma))] + [repr(float(v)) for v in state])


def trajectory_to_raw(traj: Trajectory, directory: str | Path, prefix: str = "step") -> list[Path]:
    """Write each state as a 1 x d raw-f64 container; returns the paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, (_, state) in enumerate(traj):
        p = directory / f"{prefix}_{i:04d}.f64"
        write_raw_f64(p, state[None, :])
        paths.append(p)
    return paths
