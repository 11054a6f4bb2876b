"""Continuous-time systems and the fixed-step integrator that samples them.

Systems are plain right-hand-side callables f(t, x) that broadcast over
leading axes of x, so a batch of trajectories integrates in one loop.  The
integrator is classical fixed-step RK4 with cubic Hermite dense output; the
deterministic step grid is what makes strobe sampling and golden-file tests
exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

DIVERGENCE_BOUND = 1.0e6


class DivergenceError(RuntimeError):
    """Raised when a state leaves the finite / bounded regime.

    `time` carries the last time stamp with a finite, in-bound state.
    """

    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


@dataclass(frozen=True)
class OdeSystem:
    """A vector field x' = f(t, x) with named parameters.

    forcing_period is set only for non-autonomous, T-periodic systems.
    """

    name: str
    dimension: int
    parameters: Mapping[str, float]
    field_eval: Callable[[float, np.ndarray], np.ndarray]
    forcing_period: float | None = None


@dataclass(frozen=True)
class Trajectory:
    """Fixed-step solve output: times (n+1,), states (n+1, d), step dt."""

    times: np.ndarray
    states: np.ndarray
    step: float

    @property
    def dimension(self) -> int:
        return self.states.shape[1]


def _rc_field(t, x):
    return np.sin(2.0 * np.pi * t) - x


def _make_hopf(omega):
    def fieldfn(t, x):
        xx = x[..., 0]
        yy = x[..., 1]
        r2 = xx * xx + yy * yy
        return np.stack((xx - omega * yy - xx * r2,
                         omega * xx + yy - yy * r2), axis=-1)
    return fieldfn


def _make_logistic(eps):
    def fieldfn(t, x):
        return eps * x * (1.0 + np.sin(2.0 * np.pi * t) - x)
    return fieldfn


def _make_brusselator(a, b, alpha):
    def fieldfn(t, x):
        xx = x[..., 0]
        yy = x[..., 1]
        x2y = xx * xx * yy
        return np.stack((a + alpha * np.sin(2.0 * np.pi * t) - (b + 1.0) * xx + x2y,
                         b * xx - x2y), axis=-1)
    return fieldfn


def _make_rossler(a, b, c):
    def fieldfn(t, x):
        xx = x[..., 0]
        yy = x[..., 1]
        zz = x[..., 2]
        return np.stack((-yy - zz, xx + a * yy, b + zz * (xx - c)), axis=-1)
    return fieldfn


_BUILTIN_DEFAULTS = {
    "rc": {},
    "hopf": {"omega": 2.0 * np.pi},
    "logistic": {"eps": 0.1},
    "brusselator": {"a": 0.4, "b": 1.2, "alpha": 0.1},
    "rossler": {"a": 0.1, "b": 0.1, "c": 9.0},
}


def builtin_system(name: str, overrides: Mapping[str, float] | None = None) -> OdeSystem:
    """One of the five built-in systems, with optional parameter overrides.

    rc:          x' = sin(2 pi t) - x                       (1-periodic)
    hopf:        supercritical Hopf normal form, frequency omega
    logistic:    x' = eps x (1 + sin(2 pi t) - x)           (1-periodic)
    brusselator: periodically driven Brusselator (a, b, alpha)
    rossler:     Rossler system (a, b, c)
    """
    if name not in _BUILTIN_DEFAULTS:
        known = ", ".join(sorted(_BUILTIN_DEFAULTS))
        raise ValueError(f"unknown system '{name}' (known: {known})")
    params = dict(_BUILTIN_DEFAULTS[name])
    for key, value in (overrides or {}).items():
        if key not in params:
            raise ValueError(f"unknown parameter '{key}' for system '{name}'")
        params[key] = float(value)
    if name == "rc":
        return OdeSystem("rc", 1, params, _rc_field, forcing_period=1.0)
    if name == "hopf":
        return OdeSystem("hopf", 2, params, _make_hopf(params["omega"]))
    if name == "logistic":
        return OdeSystem("logistic", 1, params, _make_logistic(params["eps"]),
                         forcing_period=1.0)
    if name == "brusselator":
        return OdeSystem("brusselator", 2, params,
                         _make_brusselator(params["a"], params["b"], params["alpha"]),
                         forcing_period=1.0)
    return OdeSystem("rossler", 3, params,
                     _make_rossler(params["a"], params["b"], params["c"]))


def _step_count(t0: float, t1: float, dt: float) -> int:
    n = int(math.ceil((t1 - t0) / dt - 1e-9))
    while t0 + n * dt < t1 - 1e-9 * max(1.0, abs(t1)):
        n += 1
    return max(n, 1)


def integrate_batch(system: OdeSystem, x0s, t0: float, t1: float, dt: float,
                    bound: float = DIVERGENCE_BOUND) -> list[Trajectory]:
    """RK4-integrate several initial conditions on one shared time grid."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not t1 > t0:
        raise ValueError("t1 must exceed t0")
    x = np.atleast_2d(np.asarray(x0s, dtype=float)).copy()
    if x.shape[1] != system.dimension:
        raise ValueError(
            f"initial state length {x.shape[1]} does not match dimension {system.dimension}"
        )
    n = _step_count(t0, t1, dt)
    nbatch = x.shape[0]
    states = np.empty((n + 1, nbatch, system.dimension))
    states[0] = x
    f = system.field_eval
    h = dt
    half = 0.5 * h
    sixth = h / 6.0
    for i in range(n):
        t = t0 + i * h
        k1 = f(t, x)
        k2 = f(t + half, x + half * k1)
        k3 = f(t + half, x + half * k2)
        k4 = f(t + h, x + h * k3)
        x = x + sixth * (k1 + 2.0 * (k2 + k3) + k4)
        peak = np.max(np.abs(x))
        if not peak <= bound:  # also catches NaN
            raise DivergenceError(
                f"state diverged at t={t0 + (i + 1) * h:.6g} (|x| > {bound:g} or non-finite)",
                time=t0 + i * h,
            )
        states[i + 1] = x
    times = t0 + h * np.arange(n + 1)
    return [Trajectory(times, states[:, i, :].copy(), h) for i in range(nbatch)]


def integrate(system: OdeSystem, x0, t0: float, t1: float, dt: float,
              bound: float = DIVERGENCE_BOUND) -> Trajectory:
    """RK4-integrate a single initial condition; final time >= t1."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    return integrate_batch(system, x0[None, :], t0, t1, dt, bound=bound)[0]


def dense_eval(traj: Trajectory, system: OdeSystem, t: float) -> np.ndarray:
    """Cubic Hermite interpolation on the bracketing step; error O(dt^4)."""
    times = traj.times
    tol = 1e-9 * max(1.0, abs(t))
    if t < times[0] - tol or t > times[-1] + tol:
        raise ValueError(f"t={t:.6g} outside trajectory span "
                         f"[{times[0]:.6g}, {times[-1]:.6g}]")
    k = int(np.searchsorted(times, t, side="right")) - 1
    k = min(max(k, 0), len(times) - 2)
    h = times[k + 1] - times[k]
    s = (t - times[k]) / h
    if s == 0.0:
        return traj.states[k].copy()
    if s == 1.0:
        return traj.states[k + 1].copy()
    x0 = traj.states[k]
    x1 = traj.states[k + 1]
    f0 = system.field_eval(times[k], x0)
    f1 = system.field_eval(times[k + 1], x1)
    s2 = s * s
    s3 = s2 * s
    h00 = 2.0 * s3 - 3.0 * s2 + 1.0
    h10 = s3 - 2.0 * s2 + s
    h01 = -2.0 * s3 + 3.0 * s2
    h11 = s3 - s2
    return h00 * x0 + h10 * h * f0 + h01 * x1 + h11 * h * f1


def write_trajectory_csv(traj: Trajectory, path, var_names=None) -> None:
    """CSV export with header t,x1,...,xd at 17 significant digits."""
    d = traj.dimension
    names = list(var_names) if var_names else [f"x{i + 1}" for i in range(d)]
    if len(names) != d:
        raise ValueError("var_names length does not match trajectory dimension")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t," + ",".join(names) + "\n")
        for t, row in zip(traj.times, traj.states):
            fh.write("%.17g," % t + ",".join("%.17g" % v for v in row) + "\n")


def read_trajectory_csv(path) -> Trajectory:
    """Inverse of write_trajectory_csv (values round-trip exactly)."""
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    if data.ndim == 1:
        data = data[None, :]
    times = data[:, 0]
    states = data[:, 1:]
    if len(times) < 2:
        raise ValueError("trajectory CSV needs at least two rows")
    return Trajectory(times, states, float(times[1] - times[0]))
