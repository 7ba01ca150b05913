"""Colored complex Gaussian driving noise and the mean-field shift.

The stored process is w(t) = z*(t), the conjugated noise that multiplies the
collective lowering channel in the evolution equation.  It is an exact
stationary complex Ornstein-Uhlenbeck chain sampled on the half-step grid
t = 0, dt/2, dt, ..., T (a midpoint stepper needs correctly correlated
mid-interval values).  Statistics:

    E[z(t) z*(s)] = (gamma/2) exp(-gamma|t-s| - i Omega (t-s))
    E[z(t) z(s)]  = 0

The one-step recursion w(t+h) = w(t) exp(-(gamma - i Omega) h) + xi is exact
for this process: the only discretization error anywhere is in the
deterministic stepper, never in the noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .integrate import grid_steps
from .model import ModelParams

__all__ = [
    "NoisePath",
    "ShiftAccumulator",
    "sample_ou_path",
    "sample_ou_block",
    "shift_update",
    "shifted_noise",
    "dump_path_csv",
]


@dataclass(frozen=True)
class NoisePath:
    """One realization of z* on the half-step grid (length 2*(T/dt)+1)."""

    dt: float
    values: np.ndarray
    seed: int
    traj_index: int

    @property
    def half_step(self) -> float:
        return 0.5 * self.dt

    def time_grid(self) -> np.ndarray:
        return self.half_step * np.arange(self.values.size)

    def index_of(self, t: float) -> int:
        h = self.half_step
        k = int(round(t / h))
        if k < 0 or k >= self.values.size or abs(k * h - t) > 1e-9 * max(1.0, abs(t)):
            raise ConfigError(f"t={t} is not on the half-step grid of this path")
        return k


def _rng_for(seed: int, traj_index: int) -> np.random.Generator:
    # one splittable stream per trajectory: reproducible and order-independent
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(traj_index,)))


def _ou_values(params: ModelParams, h: float, n: int, rng) -> np.ndarray:
    """Exact OU chain of length n at spacing h, stationary start."""
    gamma, Omega = params.gamma, params.Omega
    draws = rng.standard_normal((n, 2))
    w = np.empty(n, dtype=complex)
    # stationary law: total variance gamma/2, split evenly over re/im
    w[0] = np.sqrt(0.25 * gamma) * (draws[0, 0] + 1j * draws[0, 1])
    if n == 1:
        return w
    innov_std = np.sqrt(0.25 * gamma * (1.0 - np.exp(-2.0 * gamma * h)))
    xi = innov_std * (draws[1:, 0] + 1j * draws[1:, 1])
    a = (gamma - 1j * Omega) * h  # one-step decay exponent
    # Vectorized linear recursion w_k = d^k w_0 + sum_j d^(k-j) xi_j via
    # cumulative sums of xi_j d^(-j).  d^(-j) grows like e^(gamma j h), so
    # work in blocks short enough that the growth factor stays ~e^200.
    block = max(1, min(n - 1, int(200.0 / max(gamma * h, 1e-12))))
    w0 = w[0]
    for start in range(0, n - 1, block):
        stop = min(start + block, n - 1)
        k = np.arange(1, stop - start + 1)
        acc = np.cumsum(xi[start:stop] * np.exp(a * k))
        w[start + 1 : stop + 1] = np.exp(-a * k) * (w0 + acc)
        w0 = w[stop]
    return w


def sample_ou_path(params: ModelParams, dt: float, T: float, seed: int, traj_index: int = 0) -> NoisePath:
    """Generate one noise realization; identical (seed, traj_index) -> identical path."""
    n_steps = grid_steps(dt, T)
    rng = _rng_for(seed, traj_index)
    values = _ou_values(params, 0.5 * dt, 2 * n_steps + 1, rng)
    return NoisePath(dt=float(dt), values=values, seed=int(seed), traj_index=int(traj_index))


def sample_ou_block(params: ModelParams, dt: float, T: float, seed: int, traj_indices) -> np.ndarray:
    """Stack of noise paths, shape (len(traj_indices), 2*(T/dt)+1).

    Row i is bit-identical to sample_ou_path(..., traj_indices[i]).values.
    """
    n_steps = grid_steps(dt, T)
    n = 2 * n_steps + 1
    out = np.empty((len(traj_indices), n), dtype=complex)
    for row, idx in enumerate(traj_indices):
        out[row] = _ou_values(params, 0.5 * dt, n, _rng_for(seed, idx))
    return out


@dataclass(frozen=True)
class ShiftAccumulator:
    """Running memory integral M(t) = int_0^t a(t,s) <Ldag>_s ds, M(0) = 0.

    For the exponential bath kernel this integral obeys the local ODE
    dM/dt = -(gamma + i Omega) M + (gamma/2) <Ldag>_t, which is how it is
    advanced.  The shifted noise driving the norm-preserving equation is
    z*(t) + M(t).
    """

    m: complex = 0.0 + 0.0j
    t: float = 0.0


def shift_update(acc: ShiftAccumulator, l_dag_expect: complex, dt: float, params: ModelParams) -> ShiftAccumulator:
    """Advance the shift by one explicit-midpoint step with <Ldag> held at the
    supplied stage value."""
    if dt <= 0:
        raise ConfigError(f"dt must be > 0, got {dt}")
    rate = params.gamma + 1j * params.Omega
    src = 0.5 * params.gamma * l_dag_expect
    m_half = acc.m + 0.5 * dt * (-rate * acc.m + src)
    m_new = acc.m + dt * (-rate * m_half + src)
    return ShiftAccumulator(m=m_new, t=acc.t + dt)


def shifted_noise(path: NoisePath, acc: ShiftAccumulator, t: float) -> complex:
    """z*(t) + M(t); t must sit on the half-step grid with acc synchronized."""
    idx = path.index_of(t)
    if abs(acc.t - t) > 1e-9 * max(1.0, abs(t)):
        raise ConfigError(f"shift accumulator is at t={acc.t}, requested t={t}")
    return complex(path.values[idx] + acc.m)


def dump_path_csv(path: NoisePath, fileobj) -> None:
    """Debug dump: columns t, re_zstar, im_zstar."""
    fileobj.write("t,re_zstar,im_zstar\n")
    for t, w in zip(path.time_grid(), path.values):
        fileobj.write(f"{t!r},{w.real!r},{w.imag!r}\n")
