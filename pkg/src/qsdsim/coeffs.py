"""Time-dependent coefficients of the memory operator.

The memory operator of the two-qubit model lives on three operator channels,

    O(t, noise) = c_col(t) * L  +  c_stag(t) * K  +  j(t, noise) * E3

with L the collective lowering channel, K the staggered channel and
E3 = |00><11| the double-decay channel.  c_col and c_stag obey a closed ODE
system coupled to the noise-averaged pair coefficient c_pair_mean; the pair
channel itself is driven by the past noise through a separable memory kernel,
so trajectories can carry it as one extra scalar ODE (see `pair_decay_values`
/ `kernel_diagonal`).

Two kernel prefactor conventions are implemented:

* "selfconsistent" (default): prefactor 4*lam*c_stag(v).  Re-deriving the
  operator consistency condition in the (L, K, E3) basis yields this form;
  it also matches the weak-coupling expansion, where the only noise channel
  enters at fourth order in the coupling.
* "legacy": prefactor -4i*c_stag(v), kept for comparison.  At lam = 1 the two
  differ only by a constant phase on the pair channel.

The zeroth-order truncation drops the noise channel *and* the feedback of
c_pair_mean on c_col/c_stag; the difference X = c_col - c_stag then obeys a
Riccati equation with the closed-form solution `closed_form_rate`, and the
associated decay envelope A(t) = exp(-2*lam*int X) has the cosine closed form
`closed_form_envelope`.  Closed forms are fast paths, not ground truth: the
ODE integration wins on disagreement.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import weakcoupling
from .errors import ConfigError, DivergenceError
from .integrate import grid_steps, rk4_step
from .model import (
    ModelParams,
    bath_correlation,
    coupling_operator,
    pair_lowering,
    staggered_coupling,
)

DIVERGENCE_CAP = 1e6
KERNEL_CONVENTIONS = ("selfconsistent", "legacy")

MODELS = ("exact", "zeroth", "weak1", "weak3", "weak5")


@dataclass(frozen=True)
class CoeffTrack:
    """Coefficients on a uniform grid; mode is "exact" or "zeroth"."""

    grid: np.ndarray
    c_col: np.ndarray
    c_stag: np.ndarray
    c_pair_mean: np.ndarray
    mode: str
    params: ModelParams

    @property
    def dt(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def index(self, t: float) -> int:
        dt = self.dt
        k = int(round(t / dt))
        if k < 0 or k >= self.grid.size or abs(k * dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ConfigError(f"t={t} is not on the coefficient grid")
        return k

    def at(self, t: float):
        k = self.index(t)
        return complex(self.c_col[k]), complex(self.c_stag[k]), complex(self.c_pair_mean[k])


def _coeff_rhs(params: ModelParams, with_pair_feedback: bool):
    lam, gamma = params.lam, params.gamma
    idg = 1j * params.delta - gamma

    def rhs(t, y):
        c1, c2, c3 = y
        d1 = 0.5 * lam * gamma + idg * c1 + lam * (c1 * c1 + 3.0 * c2 * c2)
        d2 = idg * c2 + lam * (-c1 * c1 + 4.0 * c1 * c2 + c2 * c2)
        if with_pair_feedback:
            d1 = d1 - 0.5j * lam * c3
            d2 = d2 - 0.5j * lam * c3
            d3 = 2.0 * idg * c3 + 4.0 * lam * c1 * c3 - 2j * gamma * lam * c2
        else:
            d3 = 0.0j
        return np.array([d1, d2, d3])

    return rhs


def _integrate_coeffs(params, dt, T, mode):
    n = grid_steps(dt, T)
    grid = dt * np.arange(n + 1)
    rhs = _coeff_rhs(params, with_pair_feedback=(mode == "exact"))
    out = np.zeros((n + 1, 3), dtype=complex)
    y = np.zeros(3, dtype=complex)
    for k in range(n):
        y = rk4_step(rhs, grid[k], y, dt)
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > DIVERGENCE_CAP:
            t_bad = grid[k + 1]
            raise DivergenceError(
                f"coefficient integration diverged at t={t_bad:.6g} "
                f"(|coefficient| exceeded {DIVERGENCE_CAP:g}); the closed "
                f"coefficient system has a finite-time pole for these parameters",
                t=t_bad,
            )
        out[k + 1] = y
    return CoeffTrack(grid=grid, c_col=out[:, 0].copy(), c_stag=out[:, 1].copy(),
                      c_pair_mean=out[:, 2].copy(), mode=mode, params=params)


def integrate_exact_coeffs(params: ModelParams, dt: float, T: float) -> CoeffTrack:
    """Integrate the coupled coefficient system (RK4, zero initial values)."""
    return _integrate_coeffs(params, dt, T, "exact")


def integrate_zeroth_coeffs(params: ModelParams, dt: float, T: float) -> CoeffTrack:
    """Coefficient system with the noise-average feedback removed."""
    return _integrate_coeffs(params, dt, T, "zeroth")


def truncate_zeroth(track: CoeffTrack) -> CoeffTrack:
    """Zeroth-order companion of an exact track (a re-integration on the same
    grid -- the pair average feeds back on c_col/c_stag, so post-hoc zeroing
    would be wrong)."""
    return integrate_zeroth_coeffs(track.params, track.dt, float(track.grid[-1]))


# --- closed forms -----------------------------------------------------------

@dataclass(frozen=True)
class ClosedFormParams:
    beta: complex
    c: complex


def closed_form_params(params: ModelParams) -> ClosedFormParams:
    """Branch data for the rate/envelope closed forms: Im(beta) >= 0,
    principal arctan."""
    lam, gamma, delta = params.lam, params.gamma, params.delta
    beta = cmath.sqrt(4.0 * lam**2 * gamma - gamma**2 + 2j * gamma * delta + delta**2)
    if beta.imag < 0:
        beta = -beta
    if beta == 0:
        raise ConfigError("degenerate closed form (beta = 0); use the ODE track")
    c = cmath.atan((1j * delta - gamma) / beta)
    return ClosedFormParams(beta=beta, c=c)


def _safe_tan(z: np.ndarray) -> np.ndarray:
    # tan(z) -> +/- i as Im(z) -> +/- inf; evaluating directly would overflow
    out = np.empty_like(z)
    hi = z.imag > 50.0
    lo = z.imag < -50.0
    mid = ~(hi | lo)
    out[hi] = 1j
    out[lo] = -1j
    out[mid] = np.tan(z[mid])
    return out


def closed_form_rate(t, params: ModelParams):
    """Zeroth-order decay-rate function X(t) = c_col - c_stag, closed form.

    For parameter sets where beta is (nearly) real the tangent has genuine
    finite-time poles; values there are honestly huge/inf and callers that
    need finiteness must mask (see `riccati_rate_ode`).
    """
    if params.lam <= 0:
        raise ConfigError("closed-form rate needs lam > 0 (lam=0 gives X=0 trivially)")
    cf = closed_form_params(params)
    tt = np.asarray(t, dtype=float)
    z = 0.5 * cf.beta * tt.astype(complex) + cf.c
    x = (params.gamma - 1j * params.delta + cf.beta * _safe_tan(z)) / (4.0 * params.lam)
    if np.ndim(t) == 0:
        return complex(x)
    return x


def closed_form_envelope(t, params: ModelParams):
    """Decay envelope A(t) = exp(-2 lam int_0^t X), cosine closed form.

    Evaluated as a sum of two exponentials (entire in t, no intermediate
    overflow); A(0) = 1 exactly for every valid parameter set.
    """
    if params.lam <= 0:
        raise ConfigError("closed-form envelope needs lam > 0")
    cf = closed_form_params(params)
    pref = params.lam * cmath.sqrt(params.gamma) / cf.beta
    tt = np.asarray(t, dtype=float).astype(complex)
    expo = 0.5 * (1j * params.delta - params.gamma)
    a = pref * (cmath.exp(1j * cf.c) * np.exp((expo + 0.5j * cf.beta) * tt)
                + cmath.exp(-1j * cf.c) * np.exp((expo - 0.5j * cf.beta) * tt))
    if np.ndim(t) == 0:
        return complex(a)
    return a


def steady_rate(params: ModelParams) -> complex:
    """t -> inf limit of the rate function: (gamma - i delta + i beta)/(4 lam)."""
    if params.lam <= 0:
        raise ConfigError("steady rate needs lam > 0")
    cf = closed_form_params(params)
    return (params.gamma - 1j * params.delta + 1j * cf.beta) / (4.0 * params.lam)


def riccati_rate_ode(params: ModelParams, dt: float, T: float, cap: float = 1e3,
                     reseed: bool = True):
    """Independent oracle for the rate function: RK4 on the Riccati equation
    dX/dt = (i delta - gamma) X + 2 lam X^2 + lam gamma / 2.

    Returns (grid, X, valid) where valid marks points the ODE reached
    accurately.  With reseed=True the integration restarts from the closed
    form after a pole window (restarted points are marked invalid, the
    points propagated from them are valid again), so the comparison covers
    every finite window of [0, T] even when genuine poles are present.
    Each step is taken twice (full step vs two half steps); disagreement
    flags the pole neighborhood, where fixed-step RK4 silently hops across
    the singularity onto a phase-shifted branch.
    """
    lam, gamma = params.lam, params.gamma
    idg = 1j * params.delta - gamma

    def rhs(t, x):
        return idg * x + 2.0 * lam * x * x + 0.5 * lam * gamma

    n = grid_steps(dt, T)
    grid = dt * np.arange(n + 1)
    xs = np.zeros(n + 1, dtype=complex)
    valid = np.ones(n + 1, dtype=bool)
    x = 0.0 + 0.0j
    need_seed = False
    for k in range(n):
        if not need_seed:
            t = grid[k]
            x_full = rk4_step(rhs, t, x, dt)
            x_new = rk4_step(rhs, t + 0.5 * dt,
                             rk4_step(rhs, t, x, 0.5 * dt), 0.5 * dt)
            ok = (np.isfinite(x_full) and np.isfinite(x_new)
                  and abs(x_new) <= cap
                  and abs(x_new - x_full) < 1e-6 * (1.0 + abs(x_new)))
            if ok:
                xs[k + 1] = x = x_new
                continue
            if not reseed:
                valid[k + 1 :] = False
                xs[k + 1 :] = np.inf
                break
            need_seed = True
        # inside/approaching a pole window: restart from the closed form as
        # soon as it is representable again; everything here is invalid
        cand = closed_form_rate(float(grid[k + 1]), params)
        valid[k + 1] = False
        if np.isfinite(cand) and abs(cand) <= cap:
            xs[k + 1] = x = cand
            need_seed = False
        else:
            xs[k + 1] = np.inf
    return grid, xs, valid


# --- pair-channel memory kernel ---------------------------------------------

def _check_convention(convention: str) -> None:
    if convention not in KERNEL_CONVENTIONS:
        raise ConfigError(
            f"unknown kernel convention {convention!r}; choose from {KERNEL_CONVENTIONS}")


def _kernel_prefactor(track: CoeffTrack, params: ModelParams, convention: str) -> np.ndarray:
    _check_convention(convention)
    if convention == "selfconsistent":
        return 4.0 * params.lam * track.c_stag
    return -4j * track.c_stag


def pair_decay_values(track: CoeffTrack, params: ModelParams) -> np.ndarray:
    """Exponent integrand of the pair kernel on the track grid:
    -gamma + 2i omega_s - i Omega + 4 lam c_col(s)."""
    return (-params.gamma + 2j * params.omega_s - 1j * params.Omega
            + 4.0 * params.lam * track.c_col)


def kernel_diagonal(track: CoeffTrack, params: ModelParams,
                    convention: str = "selfconsistent") -> np.ndarray:
    """Equal-time kernel values K(t, t) on the track grid (the source strength
    of the pair-channel accumulator ODE)."""
    return _kernel_prefactor(track, params, convention)


def memory_kernel(t, v, track: CoeffTrack, params: ModelParams,
                  convention: str = "selfconsistent"):
    """Pair-channel kernel K(t, v) = prefactor(v) * exp(int_v^t decay(s) ds).

    v may be an array; both t and v must sit on the track grid, v <= t.  The
    inner integral uses the trapezoidal rule on the grid.
    """
    it = track.index(float(t))
    vv = np.atleast_1d(np.asarray(v, dtype=float))
    iv = np.array([track.index(float(x)) for x in vv])
    if np.any(iv > it):
        raise ConfigError("memory kernel needs v <= t")
    expo = cumulative_trapezoid(pair_decay_values(track, params), dx=track.dt, initial=0.0)
    pref = _kernel_prefactor(track, params, convention)
    out = pref[iv] * np.exp(expo[it] - expo[iv])
    if np.ndim(v) == 0:
        return complex(out[0])
    return out


def feedback_residual(track: CoeffTrack, params: ModelParams, n_checks: int = 16):
    """Diagnostic: residual of the integral identity tying the noise-averaged
    pair coefficient to the bath-correlation-weighted kernel,

        c_pair_mean(t) =? -i * int_0^t alpha(t,v) K_selfconsistent(t,v) dv

    (identically equal to lam * int alpha K_legacy).  Returns (times,
    residuals); the residual is quadrature-limited, O(dt^2), not an assertion.
    """
    if track.mode != "exact":
        raise ConfigError("feedback residual is defined for exact-mode tracks")
    expo = cumulative_trapezoid(pair_decay_values(track, params), dx=track.dt, initial=0.0)
    pref = _kernel_prefactor(track, params, "selfconsistent")
    n = track.grid.size
    picks = np.unique(np.linspace(1, n - 1, n_checks).astype(int))
    times = track.grid[picks]
    res = np.empty(picks.size, dtype=complex)
    for j, it in enumerate(picks):
        v = track.grid[: it + 1]
        kern = pref[: it + 1] * np.exp(expo[it] - expo[: it + 1])
        alpha = bath_correlation(track.grid[it], v, params)
        integral = np.trapezoid(alpha * kern, dx=track.dt)
        res[j] = track.c_pair_mean[it] - (-1j) * integral
    return times, res


# --- channel assembly --------------------------------------------------------

def channel_tracks(model: str, track, params: ModelParams,
                   convention: str = "selfconsistent"):
    """Assembled per-channel coefficient arrays on the track grid.

    Returns (a_col, a_stag, pair_src, pair_decay): the collective and
    staggered channel coefficients, and -- for models carrying a noise
    channel -- the source prefactor and decay rate of the pair accumulator
    ODE dj/dt = pair_decay(t) j + pair_src(t) ztilde*(t).  pair_src and
    pair_decay are None for noise-free models.
    """
    if model not in MODELS:
        raise ConfigError(f"unknown model {model!r}; choose from {MODELS}")
    lam = params.lam
    if model in ("exact", "zeroth"):
        if not isinstance(track, CoeffTrack):
            raise ConfigError(f"model {model!r} needs a coefficient track")
        if track.mode != model:
            raise ConfigError(f"model {model!r} got a {track.mode!r}-mode track")
        a_col = track.c_col
        a_stag = track.c_stag
        if model == "exact":
            return a_col, a_stag, kernel_diagonal(track, params, convention), \
                pair_decay_values(track, params)
        return a_col, a_stag, None, None
    # weak-coupling family
    if not isinstance(track, weakcoupling.WeakTrack):
        raise ConfigError(f"model {model!r} needs a weak-coupling track")
    order = int(model[4:])
    if track.order < order:
        raise ConfigError(f"track carries order {track.order}, model {model!r} needs {order}")
    zeros = np.zeros_like(track.conv1)
    a_col = lam * track.conv1
    a_stag = zeros
    if order >= 3:
        a_col = a_col + lam**3 * track.conv3
        a_stag = a_stag + lam**3 * track.conv3_stag
    if order >= 5:
        a_col = a_col + lam**5 * track.conv5
        a_stag = a_stag + lam**5 * track.conv5_stag
        # the single noise channel of the expansion: fourth order in the
        # coupling, pair operator, exponential kernel
        pair_src = lam**4 * 4.0 * track.conv3_stag
        rate = (-params.gamma - 1j * params.Omega + 2j * params.omega_s)
        pair_decay = np.full_like(track.conv1, rate)
        return a_col, a_stag, pair_src, pair_decay
    return a_col, a_stag, None, None


def assemble_memory_operator(model: str, track, pair_noise: complex, t: float,
                             params: ModelParams = None,
                             convention: str = "selfconsistent") -> np.ndarray:
    """4x4 memory operator at grid time t.

    pair_noise is the current pair-channel accumulator (supplied by the
    trajectory for models with a noise channel; ignored otherwise).
    """
    if params is None:
        params = track.params
    a_col, a_stag, pair_src, _ = channel_tracks(model, track, params, convention)
    k = track.index(t)
    op = a_col[k] * coupling_operator() + a_stag[k] * staggered_coupling()
    if pair_src is not None:
        op = op + pair_noise * pair_lowering()
    return op


def dump_track_csv(track: CoeffTrack, fileobj) -> None:
    """Regression dump: t plus re/im of each coefficient."""
    fileobj.write("t,re_c_col,im_c_col,re_c_stag,im_c_stag,re_c_pair_mean,im_c_pair_mean\n")
    for k in range(track.grid.size):
        row = (track.grid[k], track.c_col[k].real, track.c_col[k].imag,
               track.c_stag[k].real, track.c_stag[k].imag,
               track.c_pair_mean[k].real, track.c_pair_mean[k].imag)
        fileobj.write(",".join(repr(float(x)) for x in row) + "\n")
