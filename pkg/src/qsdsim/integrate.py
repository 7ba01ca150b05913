"""Fixed-step integrators.

Everything in this package integrates smooth, low-dimensional systems on
uniform grids, so classical fixed-step schemes are used throughout (adaptive
stepping would break grid alignment between the coefficient tracks, the noise
paths, and the trajectory stepper).
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError


def grid_steps(dt: float, T: float) -> int:
    """Number of dt-steps covering [0, T]; T must sit on the grid."""
    if dt <= 0:
        raise ConfigError(f"dt must be > 0, got {dt}")
    if T < dt:
        raise ConfigError(f"T must be >= dt, got T={T}, dt={dt}")
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * max(1.0, abs(T)):
        raise ConfigError(f"T={T} is not an integer multiple of dt={dt}")
    return n


def rk4_step(f, t, y, dt):
    """One classical 4th-order step of y' = f(t, y); y is any ndarray."""
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def midpoint_step(f, t, y, dt):
    """One explicit-midpoint (2nd order) step of y' = f(t, y)."""
    y_half = y + 0.5 * dt * f(t, y)
    return y + dt * f(t + 0.5 * dt, y_half)
