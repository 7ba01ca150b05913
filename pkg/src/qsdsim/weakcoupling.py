"""Coupling-strength expansion of the memory operator.

For equal qubit frequencies every two-time coefficient family of the
expansion reduces exactly to scalar convolution ODEs (the bath correlation is
a single exponential), which is what production uses: O(N) memory, one RK4
pass.  The two-time lattice form is kept as an opt-in verification mode
(`lattice_tables`) that integrates the printed row equations and rebuilds the
convolutions by trapezoidal quadrature -- quadratic memory, so meant for
coarse grids in tests, not production runs.

Expansion structure (enforced and tested): the second-order term vanishes
identically, odd orders are noise-free, and the single noise-carrying channel
is the pair operator at fourth order in the coupling with an exponential
kernel -- trajectories integrate it as one scalar accumulator ODE.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DivergenceError
from .integrate import grid_steps, rk4_step
from .model import ModelParams, bath_correlation

DIVERGENCE_CAP = 1e6
ORDERS = (1, 3, 5)
NOISE_CHANNEL_ORDER = 4  # the only noise-carrying order of the expansion


@dataclass(frozen=True)
class WeakTrack:
    """Scalar convolution tracks of the expansion on a uniform grid.

    conv1      : first-order collective convolution
    conv3      : third-order collective convolution
    conv3_stag : third-order staggered convolution (equals -conv3 at equal
                 frequencies; integrated from its own printed equation)
    conv4_pair : bath-weighted fourth-order pair kernel (feeds order 5)
    conv5      : fifth-order collective convolution
    conv5_stag : fifth-order staggered convolution
    """

    grid: np.ndarray
    conv1: np.ndarray
    conv3: np.ndarray
    conv3_stag: np.ndarray
    conv4_pair: np.ndarray
    conv5: np.ndarray
    conv5_stag: np.ndarray
    order: int
    params: ModelParams

    @property
    def dt(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def index(self, t: float) -> int:
        dt = self.dt
        k = int(round(t / dt))
        if k < 0 or k >= self.grid.size or abs(k * dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ConfigError(f"t={t} is not on the weak-coupling grid")
        return k


def first_order_convolution(t, params: ModelParams):
    """Closed form of the first-order convolution:
    (gamma/2) (1 - exp(-(gamma - i delta) t)) / (gamma - i delta)."""
    g = params.gamma - 1j * params.delta
    tt = np.asarray(t, dtype=float)
    out = 0.5 * params.gamma * (1.0 - np.exp(-g * tt.astype(complex))) / g
    if np.ndim(t) == 0:
        return complex(out)
    return out


def integrate_weak_coupling(params: ModelParams, order: int, dt: float, T: float) -> WeakTrack:
    """Integrate the scalar convolution system up to the given order (1|3|5).

    The first-order convolution is evaluated from its closed form (exact at
    RK4 stage times); everything above is RK4 with zero initial conditions.
    """
    if order not in ORDERS:
        raise ConfigError(f"order must be one of {ORDERS}, got {order}")
    n = grid_steps(dt, T)
    grid = dt * np.arange(n + 1)
    lam_free = _scalar_rhs(params)
    y = np.zeros(5, dtype=complex)  # [conv3, conv3_stag, conv4_pair, conv5, conv5_stag]
    out = np.zeros((n + 1, 5), dtype=complex)
    for k in range(n):
        y = rk4_step(lam_free, grid[k], y, dt)
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > DIVERGENCE_CAP:
            t_bad = grid[k + 1]
            raise DivergenceError(
                f"weak-coupling convolution diverged at t={t_bad:.6g}", t=t_bad)
        out[k + 1] = y
    return WeakTrack(
        grid=grid,
        conv1=first_order_convolution(grid, params),
        conv3=out[:, 0].copy(),
        conv3_stag=out[:, 1].copy(),
        conv4_pair=out[:, 2].copy(),
        conv5=out[:, 3].copy(),
        conv5_stag=out[:, 4].copy(),
        order=order,
        params=params,
    )


def _scalar_rhs(params: ModelParams):
    gamma = params.gamma
    idg = 1j * params.delta - gamma

    def rhs(t, y):
        w3, g3c, v4, w5, g5c = y
        u1 = first_order_convolution(t, params)
        d_w3 = idg * w3 + u1 * u1
        d_g3c = idg * g3c - u1 * u1
        d_v4 = 2.0 * idg * v4 + 2.0 * gamma * g3c
        d_w5 = idg * w5 - u1 * (g3c - w3) + u1 * (w3 + g3c) - 0.5 * v4
        d_g5c = idg * g5c - u1 * (w3 - g3c) - u1 * (w3 - 3.0 * g3c) - 0.5 * v4
        return np.array([d_w3, d_g3c, d_v4, d_w5, d_g5c])

    return rhs


# --- two-time lattice verification mode --------------------------------------

@dataclass(frozen=True)
class LatticeTables:
    """Two-time rows (NaN above the diagonal) plus trapezoid convolutions."""

    grid: np.ndarray
    f3: np.ndarray
    g3: np.ndarray
    f5: np.ndarray
    g5: np.ndarray
    h4p: np.ndarray
    conv3: np.ndarray
    conv3_stag: np.ndarray
    conv4_pair: np.ndarray
    conv5: np.ndarray
    conv5_stag: np.ndarray


def lattice_tables(params: ModelParams, dt: float, T: float) -> LatticeTables:
    """Integrate the printed two-time row equations on the (t, s) lattice.

    Quadratic in memory and time; refuse silly grids.
    """
    n = grid_steps(dt, T)
    if n > 4000:
        raise ConfigError("lattice verification mode is quadratic; use a coarser grid")
    grid = dt * np.arange(n + 1)
    omega = params.omega_s

    # scalar sources at RK4 stage resolution (dt/2 grid, index 2k + {0,1,2})
    fine = integrate_weak_coupling(params, 5, 0.5 * dt, T)
    w3_f, g3c_f = fine.conv3, fine.conv3_stag

    shape = (n + 1, n + 1)
    f3 = np.full(shape, np.nan, dtype=complex)
    g3 = np.full(shape, np.nan, dtype=complex)
    f5 = np.full(shape, np.nan, dtype=complex)
    g5 = np.full(shape, np.nan, dtype=complex)
    h4p = np.full(shape, np.nan, dtype=complex)
    for a in (f3, g3, f5, g5):
        np.fill_diagonal(a, 0.0)  # boundary value at t = s
    h4p[0, 0] = 4.0 * g3c_f[0]

    pair_rate = -(params.gamma + 1j * params.Omega) + 2j * omega

    for k in range(n):
        s = grid[: k + 1]
        t0 = grid[k]
        y = np.concatenate([f3[k, : k + 1], g3[k, : k + 1], f5[k, : k + 1], g5[k, : k + 1]])
        m = k + 1
        h_row = h4p[k, : k + 1]

        def rhs(t, yv, s=s, m=m, h_row=h_row, t0=t0):
            b3, c3, b5, c5 = yv[:m], yv[m : 2 * m], yv[2 * m : 3 * m], yv[3 * m :]
            k_half = int(round(2.0 * t / dt))
            u = first_order_convolution(t, params)
            w3_t, g3c_t = w3_f[k_half], g3c_f[k_half]
            f1_row = np.exp(1j * omega * (t - s))
            h_stage = h_row * np.exp(pair_rate * (t - t0))
            d_b3 = 1j * omega * b3 + u * f1_row
            d_c3 = 1j * omega * c3 - u * f1_row
            d_b5 = (1j * omega * b5 - u * (c3 - b3) + f1_row * (w3_t + g3c_t)
                    - 0.5 * h_stage)
            d_c5 = (1j * omega * c5 - u * (b3 - c3) - 0.5 * h_stage
                    - (w3_t - 3.0 * g3c_t) * f1_row)
            return np.concatenate([d_b3, d_c3, d_b5, d_c5])

        y = rk4_step(rhs, t0, y, dt)
        f3[k + 1, : k + 1] = y[:m]
        g3[k + 1, : k + 1] = y[m : 2 * m]
        f5[k + 1, : k + 1] = y[2 * m : 3 * m]
        g5[k + 1, : k + 1] = y[3 * m :]
        h4p[k + 1, : k + 1] = h_row * np.exp(pair_rate * dt)
        h4p[k + 1, k + 1] = 4.0 * g3c_f[2 * (k + 1)]

    conv = {}
    for name, table in (("conv3", f3), ("conv3_stag", g3), ("conv5", f5),
                        ("conv5_stag", g5), ("conv4_pair", h4p)):
        vals = np.zeros(n + 1, dtype=complex)
        for k in range(1, n + 1):
            alpha = bath_correlation(grid[k], grid[: k + 1], params)
            vals[k] = np.trapezoid(alpha * table[k, : k + 1], dx=dt)
        conv[name] = vals

    return LatticeTables(grid=grid, f3=f3, g3=g3, f5=f5, g5=g5, h4p=h4p, **conv)


def dump_weak_csv(track: WeakTrack, fileobj) -> None:
    names = ("conv1", "conv3", "conv3_stag", "conv4_pair", "conv5", "conv5_stag")
    header = ["t"]
    for nm in names:
        header += [f"re_{nm}", f"im_{nm}"]
    fileobj.write(",".join(header) + "\n")
    for k in range(track.grid.size):
        row = [float(track.grid[k])]
        for nm in names:
            z = getattr(track, nm)[k]
            row += [float(z.real), float(z.imag)]
        fileobj.write(",".join(repr(x) for x in row) + "\n")
