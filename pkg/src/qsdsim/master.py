"""Noise-free solvers and predictors.

Four layers, each usable as an oracle for the one above:

* `integrate_master` -- RK4 on the full-matrix evolution
      drho/dt = -i[H, rho] + lam [L, rho Obar^dag] + lam [Obar rho, L^dag]
  with the memory operator's noise-free channels (zeroth-order coefficients
  by default, or a weak-coupling order).  For initial states without
  double-excitation support the zeroth-order equation is exact, which is
  what makes it oracle-grade for ensemble validation.
* `integrate_elements` -- the same zeroth-order dynamics written as nine
  coupled element ODEs in X = c_col - c_stag, Y = c_col + c_stag.  Runs as
  an internal cross-check of `integrate_master` whenever the initial state
  has an empty double-excitation row.  One printed form of the coherence
  cross-coupling circulates with the conjugation dropped; expanding the
  master equation gives -lam X* rho13 in the rho12 equation (and
  symmetrically), which is what we integrate -- the matrix-form cross-check
  pins this down at 1e-8.
* `analytic_rdm` / `analytic_concurrence` -- closed-form solution for the
  zero-double-excitation family, built on the decay envelope A(t).
* `steady_state` -- the late-time predictor: singlet weight r (a conserved
  quantity, r = (rho22 + rho33 - 2 Re rho23)/4), decaying coherence
  amplitude x, assembled limit matrix, concurrence 2r, and a relaxation-time
  estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import coeffs as coeffs_mod
from . import weakcoupling
from .errors import ConfigError, PhysicalityError
from .integrate import grid_steps, rk4_step
from .model import ModelParams, build_hamiltonian, coupling_operator, staggered_coupling
from .trajectory import output_steps

_L = coupling_operator()
_K = staggered_coupling()
_LD = _L.conj().T

MASTER_MODELS = ("zeroth", "weak1", "weak3", "weak5")


@dataclass(frozen=True)
class MasterResult:
    grid: np.ndarray
    rhos: np.ndarray
    model: str
    params: ModelParams
    element_dev: float | None  # max matrix-vs-element deviation, when checked


def _validate_rho0(rho0) -> np.ndarray:
    r = np.asarray(rho0, dtype=complex)
    if r.shape != (4, 4):
        raise ConfigError("initial density matrix must be 4x4")
    if not np.all(np.isfinite(r)):
        raise ConfigError("initial density matrix has non-finite entries")
    if np.max(np.abs(r - r.conj().T)) > 1e-10:
        raise ConfigError("initial density matrix is not Hermitian")
    if abs(np.trace(r) - 1.0) > 1e-8:
        raise ConfigError("initial density matrix must have unit trace")
    return r


def _channel_arrays(params: ModelParams, model: str, dt_half: float, T: float):
    if model == "zeroth":
        track = coeffs_mod.integrate_zeroth_coeffs(params, dt_half, T)
    elif model in ("weak1", "weak3", "weak5"):
        track = weakcoupling.integrate_weak_coupling(params, int(model[4:]), dt_half, T)
    else:
        raise ConfigError(f"unknown master model {model!r}; choose from {MASTER_MODELS}")
    a_col, a_stag, _, _ = coeffs_mod.channel_tracks(model, track, params)
    return np.asarray(a_col), np.asarray(a_stag), track


def integrate_master(rho0, params: ModelParams, dt: float, T: float, *,
                     model: str = "zeroth", output_stride: int = 1,
                     element_check: bool | None = None) -> MasterResult:
    """Integrate the noise-free matrix evolution.

    Aborts with PhysicalityError if the trace drifts by more than 1e-6 or an
    eigenvalue falls below -1e-6.  element_check=None (auto) runs the
    element-form cross-check when model is "zeroth" and the initial state
    has an empty double-excitation row; the two representations must then
    agree to 1e-8.
    """
    rho = _validate_rho0(rho0)
    n = grid_steps(dt, T)
    a_col, a_stag, _ = _channel_arrays(params, model, 0.5 * dt, T)
    h = build_hamiltonian(params)
    lam = params.lam

    def rhs(t, r):
        ih = int(round(2.0 * t / dt))
        o = a_col[ih] * _L + a_stag[ih] * _K
        od = o.conj().T
        ro = r @ od
        orr = o @ r
        return (-1j) * (h @ r - r @ h) + lam * (_L @ ro - ro @ _L) \
            + lam * (orr @ _LD - _LD @ orr)

    ks = output_steps(n, output_stride)
    rhos = np.zeros((ks.size, 4, 4), dtype=complex)
    pos = 0
    if ks[pos] == 0:
        rhos[0] = rho
        pos += 1
    for k in range(n):
        rho = rk4_step(rhs, k * dt, rho, dt)
        tr_dev = abs(np.trace(rho) - 1.0)
        if tr_dev > 1e-6:
            raise PhysicalityError(
                f"trace drifted by {tr_dev:.3g} at t={(k + 1) * dt:.6g}")
        min_eig = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())
        if min_eig < -1e-6:
            raise PhysicalityError(
                f"eigenvalue {min_eig:.3g} below -1e-6 at t={(k + 1) * dt:.6g}")
        if pos < ks.size and ks[pos] == k + 1:
            rhos[pos] = rho
            pos += 1

    dev = None
    if element_check is None:
        element_check = (model == "zeroth"
                         and float(np.max(np.abs(np.asarray(rho0)[0, :]))) <= 1e-12)
    if element_check:
        if model != "zeroth":
            raise ConfigError("element-form cross-check exists only for the zeroth model")
        elem = integrate_elements(rho0, params, dt, T, output_stride=output_stride)
        dev = float(np.max(np.abs(elem.rhos - rhos)))
        if dev > 1e-8:
            raise PhysicalityError(
                f"matrix-form and element-form solutions diverged by {dev:.3g}")
    return MasterResult(grid=ks * dt, rhos=rhos, model=model, params=params,
                        element_dev=dev)


def integrate_elements(rho0, params: ModelParams, dt: float, T: float, *,
                       output_stride: int = 1, track=None) -> MasterResult:
    """Element-form zeroth-order dynamics (states with an empty
    double-excitation row; the row stays empty, so nine elements close).

    Kept public as the redundant representation used to cross-check the
    matrix form; X and Y are read off the zeroth coefficient track.
    """
    rho = _validate_rho0(rho0)
    if float(np.max(np.abs(rho[0, :]))) > 1e-12:
        raise ConfigError("element form needs an empty double-excitation row")
    n = grid_steps(dt, T)
    if track is None:
        track = coeffs_mod.integrate_zeroth_coeffs(params, 0.5 * dt, T)
    if track.mode != "zeroth":
        raise ConfigError("element form uses the zeroth-order track")
    xs = track.c_col - track.c_stag
    ys = track.c_col + track.c_stag
    lam = params.lam
    omega = params.omega_s

    # y = [r11, r12, r13, r14, r22, r23, r24, r33, r34]
    def rhs(t, y):
        ih = int(round(2.0 * t / dt))
        x, yy = xs[ih], ys[ih]
        xc = np.conj(x)
        rex, rey = x.real, yy.real
        r11, r12, r13, r14, r22, r23, r24, r33, r34 = y
        return np.array([
            -4.0 * lam * rey * r11,
            -1j * omega * r12 - lam * (2.0 * yy + xc) * r12 - lam * xc * r13,
            -1j * omega * r13 - lam * (2.0 * yy + xc) * r13 - lam * xc * r12,
            -2j * omega * r14 - 2.0 * lam * yy * r14,
            2.0 * lam * rey * r11 - 2.0 * lam * rex * r22
            - lam * xc * r23 - lam * x * np.conj(r23),
            2.0 * lam * rey * r11 - 2.0 * lam * rex * r23
            - lam * x * r33 - lam * xc * r22,
            -1j * omega * r24 + lam * (yy + xc) * (r12 + r13)
            - lam * x * (r24 + r34),
            2.0 * lam * rey * r11 - 2.0 * lam * rex * r33
            - lam * x * r23 - lam * xc * np.conj(r23),
            -1j * omega * r34 + lam * (yy + xc) * (r12 + r13)
            - lam * x * (r34 + r24),
        ])

    y = np.array([rho[0, 0], rho[0, 1], rho[0, 2], rho[0, 3], rho[1, 1],
                  rho[1, 2], rho[1, 3], rho[2, 2], rho[2, 3]], dtype=complex)
    ks = output_steps(n, output_stride)
    rhos = np.zeros((ks.size, 4, 4), dtype=complex)
    pos = 0
    if ks[pos] == 0:
        rhos[0] = rho
        pos += 1
    for k in range(n):
        y = rk4_step(rhs, k * dt, y, dt)
        if pos < ks.size and ks[pos] == k + 1:
            rhos[pos] = _assemble_from_elements(y)
            pos += 1
    return MasterResult(grid=ks * dt, rhos=rhos, model="zeroth", params=params,
                        element_dev=None)


def _assemble_from_elements(y) -> np.ndarray:
    r11, r12, r13, r14, r22, r23, r24, r33, r34 = y
    r = np.zeros((4, 4), dtype=complex)
    r[0, 0] = r11
    r[0, 1], r[1, 0] = r12, np.conj(r12)
    r[0, 2], r[2, 0] = r13, np.conj(r13)
    r[0, 3], r[3, 0] = r14, np.conj(r14)
    r[1, 1] = r22
    r[1, 2], r[2, 1] = r23, np.conj(r23)
    r[1, 3], r[3, 1] = r24, np.conj(r24)
    r[2, 2] = r33
    r[2, 3], r[3, 2] = r34, np.conj(r34)
    r[3, 3] = 1.0 - r11 - r22 - r33
    return r


# --- closed-form solution -----------------------------------------------------

def _require_family(rho: np.ndarray) -> None:
    if float(np.max(np.abs(rho[0, :]))) > 1e-12:
        raise ConfigError(
            "closed-form solution requires zero double-excitation support")


def analytic_rdm(rho0, t, params: ModelParams) -> np.ndarray:
    """Closed-form RDM at time t for zero-double-excitation initial states."""
    rho = _validate_rho0(rho0)
    _require_family(rho)
    a = coeffs_mod.closed_form_envelope(float(t), params)
    return _analytic_one(rho, float(t), a, params.omega_s)


def analytic_series(rho0, times, params: ModelParams) -> np.ndarray:
    """Vectorized analytic_rdm: (n, 4, 4) over an array of times."""
    rho = _validate_rho0(rho0)
    _require_family(rho)
    ts = np.asarray(times, dtype=float)
    envs = coeffs_mod.closed_form_envelope(ts, params)
    out = np.zeros((ts.size,) + (4, 4), dtype=complex)
    for i in range(ts.size):
        out[i] = _analytic_one(rho, float(ts[i]), complex(envs[i]), params.omega_s)
    return out


def _analytic_one(rho, t, a, omega) -> np.ndarray:
    a2 = abs(a) ** 2
    re_a, im_a = a.real, a.imag
    p22, p33 = rho[1, 1].real, rho[2, 2].real
    r23_0, i23_0 = rho[1, 2].real, rho[1, 2].imag
    p24, p34 = rho[1, 3], rho[2, 3]

    r22 = (0.25 * (1 + a2 + 2 * re_a) * p22 + 0.25 * (1 + a2 - 2 * re_a) * p33
           + 0.5 * (a2 - 1) * r23_0 + im_a * i23_0)
    r33 = (0.25 * (1 + a2 + 2 * re_a) * p33 + 0.25 * (1 + a2 - 2 * re_a) * p22
           + 0.5 * (a2 - 1) * r23_0 - im_a * i23_0)
    r23 = (0.25 * (a2 - 1) * (p22 + p33) + 0.5 * (a2 + 1) * r23_0) \
        + 1j * (0.5 * im_a * (p33 - p22) + re_a * i23_0)
    ph = np.exp(-1j * omega * t)
    r24 = 0.5 * ph * (a * (p24 + p34) + p24 - p34)
    r34 = 0.5 * ph * (a * (p34 + p24) - p24 + p34)

    out = np.zeros((4, 4), dtype=complex)
    out[1, 1] = r22
    out[2, 2] = r33
    out[1, 2], out[2, 1] = r23, np.conj(r23)
    out[1, 3], out[3, 1] = r24, np.conj(r24)
    out[2, 3], out[3, 2] = r34, np.conj(r34)
    out[3, 3] = 1.0 - r22 - r33
    return out


def analytic_concurrence(rho0, t, params: ModelParams) -> float:
    """2*sqrt(Re^2 + Im^2) of the closed-form single-excitation coherence;
    coincides with the Wootters concurrence on this family."""
    r = analytic_rdm(rho0, t, params)
    return 2.0 * abs(r[1, 2])


# --- steady state --------------------------------------------------------------

@dataclass(frozen=True)
class SteadyStateReport:
    """Late-time predictor.  r is the conserved singlet weight (concurrence
    settles at 2r); x is the surviving single-photon coherence amplitude,
    reported at the phase reference time t_ref (it never stops rotating at
    the qubit frequency); rho_inf carries the same convention."""

    r: float
    x: complex
    rho_inf: np.ndarray
    concurrence_inf: float
    tau_s_estimate: float
    t_ref: float
    method: str


def _assemble_steady(r: float, x: complex) -> np.ndarray:
    out = np.zeros((4, 4), dtype=complex)
    out[1, 1] = out[2, 2] = r
    out[1, 2] = out[2, 1] = -r
    out[1, 3], out[3, 1] = x, np.conj(x)
    out[2, 3], out[3, 2] = -x, -np.conj(x)
    out[3, 3] = 1.0 - 2.0 * r
    return out


def _corotated(rhos: np.ndarray, grid: np.ndarray, omega: float) -> np.ndarray:
    """Remove the free phases e^{-i(E_i - E_j)t} so settling is detectable."""
    e = np.array([omega, 0.0, 0.0, -omega])
    gaps = np.subtract.outer(e, e)
    out = np.empty_like(rhos)
    for i, t in enumerate(grid):
        out[i] = rhos[i] * np.exp(1j * gaps * t)
    return out


def _settle_time(rhos: np.ndarray, grid: np.ndarray, omega: float,
                 rate_tol: float = 1e-4):
    """First grid time after which all co-rotated element rates stay below
    rate_tol; None if that never happens inside the window."""
    sig = _corotated(rhos, grid, omega)
    dts = np.diff(grid)
    rates = np.max(np.abs(np.diff(sig, axis=0)), axis=(1, 2)) / dts
    ok = rates < rate_tol
    # last False, then settled ever after
    bad = np.nonzero(~ok)[0]
    if bad.size == 0:
        return float(grid[0])
    if bad[-1] + 1 >= ok.size:
        return None
    return float(grid[bad[-1] + 1])


def steady_state(rho0, params: ModelParams, t_ref: float = 0.0) -> SteadyStateReport:
    """Late-time report.  Zero-double-excitation states use the closed-form
    branch; anything else runs a long-time master integration and reads the
    limit off the settled co-rotated matrix."""
    rho = _validate_rho0(rho0)
    family = float(np.max(np.abs(rho[0, :]))) <= 1e-12
    omega = params.omega_s
    if family:
        r = 0.25 * float((rho[1, 1] + rho[2, 2] - 2.0 * rho[1, 2].real).real)
        x_now = 0.5 * (rho[1, 3] - rho[2, 3])
        x = x_now * np.exp(-1j * omega * t_ref)
        T = max(20.0, 8.0 / params.gamma)
        tau = None
        for _ in range(6):
            ts = np.linspace(0.0, T, max(int(T / 0.05), 200) + 1)
            series = analytic_series(rho, ts, params)
            tau = _settle_time(series, ts, omega)
            if tau is not None and tau < 0.75 * T:
                break
            T *= 2.0
        method = "closed-form"
    else:
        T = max(30.0, 10.0 / params.gamma)
        tau = None
        res = None
        for _ in range(5):
            res = integrate_master(rho, params, dt=0.01, T=T, output_stride=20)
            tau = _settle_time(res.rhos, res.grid, omega)
            if tau is not None and tau < 0.75 * T:
                break
            T *= 2.0
        final = res.rhos[-1]
        r = float(final[1, 1].real)
        x_inf = complex(0.5 * (final[1, 3] - final[2, 3]) * np.exp(1j * omega * res.grid[-1]))
        x = x_inf * np.exp(-1j * omega * t_ref)
        method = "long-time"
    return SteadyStateReport(
        r=r, x=x, rho_inf=_assemble_steady(r, x),
        concurrence_inf=2.0 * r,
        tau_s_estimate=float(tau) if tau is not None else float("inf"),
        t_ref=t_ref, method=method)


def dump_master_csv(result: MasterResult, fileobj, concurrences=None) -> None:
    """CSV: t, 16 re/im element pairs, concurrence."""
    from .metrics import wootters_concurrence

    labels = [f"{i}{j}" for i in range(1, 5) for j in range(1, 5)]
    header = ["t"]
    for lb in labels:
        header += [f"re_r{lb}", f"im_r{lb}"]
    header.append("concurrence")
    fileobj.write(",".join(header) + "\n")
    for it, t in enumerate(result.grid):
        row = [float(t)]
        for i in range(4):
            for j in range(4):
                row += [float(result.rhos[it, i, j].real),
                        float(result.rhos[it, i, j].imag)]
        if concurrences is None:
            row.append(float(wootters_concurrence(result.rhos[it]).value))
        else:
            row.append(float(concurrences[it]))
        fileobj.write(",".join(repr(x) for x in row) + "\n")
