"""Pathwise propagation of single stochastic realizations.

Two unravelings are implemented on the fixed four-level basis (|11>, |10>,
|01>, |00>):

* nonlinear (default): norm-preserving equation driven by the shifted noise,
      d psi = [-iH + lam (L - <L>) ztilde* - lam ((Ldag - <Ldag>) Obar
               - <(Ldag - <Ldag>) Obar>)] psi dt,
  renormalized after every step.
* linear: raw-noise equation d psi = [-iH + lam L z* - lam Ldag Obar] psi dt,
  free norm (its squared norm is a martingale, which the ensemble module
  exploits for a consistency estimator).

Averaged over noise, the linear unraveling recovers the reduced density
matrix exactly; the nonlinear one does too wherever Obar is noise-independent,
but from double-excitation initial states (where the pair channel makes Obar
a functional of the noise) it picks up a small systematic offset -- see the
ensemble module docstring.

The memory operator Obar is assembled per model from precomputed coefficient
tracks (collective + staggered channels, and -- for the exact and fifth-order
models -- a pair channel driven by the past noise through one auxiliary
scalar ODE, dj/dt = decay(t) j + src(t) ztilde*_t, instead of storing and
reconvolving the noise history).

The colored noise is smooth between grid points, so the equation is stepped
as a pathwise ODE with an explicit-midpoint (second-order) scheme; noise
values are consumed at half-step resolution, and coefficient tracks must be
integrated at dt/2 so stage times land exactly on their grid.  The state,
the shift accumulator and the pair accumulator all ride the same midpoint
stages.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import coeffs as coeffs_mod
from . import weakcoupling
from .errors import ConfigError, DivergenceError
from .integrate import grid_steps
from .model import (
    ModelParams,
    build_hamiltonian,
    coupling_operator,
    pair_lowering,
    staggered_coupling,
)
from .noise import NoisePath, sample_ou_path

MODES = ("nonlinear", "linear")

_L = coupling_operator()
_K = staggered_coupling()
_E3 = pair_lowering()
# row-vector application tables: (A psi)_row = psi_row @ A.T, and
# (Adag psi)_row = psi_row @ conj(A)
_L_T = np.ascontiguousarray(_L.T)
_K_T = np.ascontiguousarray(_K.T)
_E3_T = np.ascontiguousarray(_E3.T)
_L_C = np.ascontiguousarray(np.conj(_L))


@dataclass(frozen=True)
class TrajectoryState:
    """Single-trajectory state at a grid time.

    psi is normalized in nonlinear mode and free-norm in linear mode;
    j_noise stays 0 for models without a pair noise channel; l_expect /
    l_dag_expect cache the collective-lowering expectations of the
    (normalized) state.
    """

    psi: np.ndarray
    m_shift: complex
    j_noise: complex
    t: float
    l_expect: complex
    l_dag_expect: complex


def initial_state(psi0: np.ndarray) -> TrajectoryState:
    psi = np.asarray(psi0, dtype=complex).reshape(4)
    lx = _l_expect_single(psi)
    return TrajectoryState(psi=psi.copy(), m_shift=0.0j, j_noise=0.0j, t=0.0,
                           l_expect=lx, l_dag_expect=np.conj(lx))


def _l_expect_single(psi: np.ndarray) -> complex:
    n2 = float(np.vdot(psi, psi).real)
    if n2 == 0.0:
        return 0.0j
    return complex(np.vdot(psi, psi @ _L_T) / n2)


@dataclass(frozen=True)
class StepPlan:
    """Precomputed per-run stepping data shared read-only by trajectories.

    Channel coefficient arrays live on the half-step grid (index k holds the
    value at t = k*dt/2); pair_src/pair_decay are None for models without a
    noise channel.
    """

    params: ModelParams
    model: str
    convention: str
    dt: float
    n_steps: int
    a_col: np.ndarray
    a_stag: np.ndarray
    pair_src: np.ndarray | None
    pair_decay: np.ndarray | None
    h_diag: np.ndarray

    @property
    def has_pair(self) -> bool:
        return self.pair_src is not None


def _default_track(params: ModelParams, model: str, dt_half: float, T: float):
    if model in ("exact",):
        return coeffs_mod.integrate_exact_coeffs(params, dt_half, T)
    if model == "zeroth":
        return coeffs_mod.integrate_zeroth_coeffs(params, dt_half, T)
    if model in ("weak1", "weak3", "weak5"):
        return weakcoupling.integrate_weak_coupling(params, int(model[4:]), dt_half, T)
    raise ConfigError(f"unknown model {model!r}; choose from {coeffs_mod.MODELS}")


def make_plan(params: ModelParams, model: str, dt: float, T: float,
              convention: str = "selfconsistent", track=None) -> StepPlan:
    """Build the stepping plan; integrates the coefficient track at dt/2 if
    none is supplied.  A supplied track must use step dt/2 and cover [0, T]."""
    n = grid_steps(dt, T)
    if track is None:
        track = _default_track(params, model, 0.5 * dt, T)
    if abs(track.dt - 0.5 * dt) > 1e-12 * dt:
        raise ConfigError(
            f"coefficient track step {track.dt:g} != dt/2 = {0.5 * dt:g}; "
            "stage times must land on the track grid")
    if track.grid.size < 2 * n + 1:
        raise ConfigError("coefficient track does not cover the requested horizon")
    a_col, a_stag, pair_src, pair_decay = coeffs_mod.channel_tracks(
        model, track, params, convention)
    return StepPlan(
        params=params, model=model, convention=convention, dt=dt, n_steps=n,
        a_col=np.asarray(a_col), a_stag=np.asarray(a_stag),
        pair_src=None if pair_src is None else np.asarray(pair_src),
        pair_decay=None if pair_decay is None else np.asarray(pair_decay),
        h_diag=np.diag(build_hamiltonian(params)).astype(complex),
    )


# --- batched stepping kernel --------------------------------------------------

def _stage(plan: StepPlan, ih: int, psi, m, j, w, nonlinear: bool):
    """Stage derivatives at half-grid index ih.

    psi: (B, 4); m, j, w: (B,).  Returns (dpsi, dm, dj); dm/dj are 0-arrays
    when the mode/model does not carry them.
    """
    p = plan.params
    lam = p.lam
    zt = w + m if nonlinear else w
    Lp = psi @ _L_T
    Op = plan.a_col[ih] * Lp + plan.a_stag[ih] * (psi @ _K_T)
    if plan.has_pair:
        Op = Op + j[:, None] * (psi @ _E3_T)
    if nonlinear:
        n2 = np.maximum(np.einsum("ij,ij->i", psi.conj(), psi).real, 1e-300)
        l_ex = np.einsum("ij,ij->i", psi.conj(), Lp) / n2
        ld_ex = np.conj(l_ex)
        o_ex = np.einsum("ij,ij->i", psi.conj(), Op) / n2
        LdO = Op @ _L_C
        lo_ex = np.einsum("ij,ij->i", psi.conj(), LdO) / n2
        dpsi = (-1j) * (plan.h_diag * psi) \
            + lam * zt[:, None] * (Lp - l_ex[:, None] * psi) \
            - lam * (LdO - ld_ex[:, None] * Op
                     - (lo_ex - ld_ex * o_ex)[:, None] * psi)
        dm = -(p.gamma + 1j * p.Omega) * m + 0.5 * p.gamma * ld_ex
    else:
        dpsi = (-1j) * (plan.h_diag * psi) + lam * zt[:, None] * Lp \
            - lam * (Op @ _L_C)
        dm = np.zeros_like(m)
    if plan.has_pair:
        dj = plan.pair_decay[ih] * j + plan.pair_src[ih] * zt
    else:
        dj = np.zeros_like(j)
    return dpsi, dm, dj


def propagate_batch(psi0, noise_values, plan: StepPlan, out_steps,
                    mode: str = "nonlinear"):
    """Propagate a batch of trajectories over the full horizon.

    psi0: (B, 4) initial states; noise_values: (B, 2*n_steps + 1) complex
    z*_t samples on the half-step grid; out_steps: increasing step indices
    (0..n_steps) at which states are recorded.

    Returns (states, death): states is (B, n_out, 4) -- normalized in
    nonlinear mode, free-norm in linear mode -- and death[b] is the step
    index at which trajectory b went non-finite (-1 if it survived; its
    recorded states from that point on are zero).
    """
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; choose from {MODES}")
    nonlinear = mode == "nonlinear"
    psi = np.array(psi0, dtype=complex)
    if psi.ndim != 2 or psi.shape[1] != 4:
        raise ConfigError("psi0 must have shape (B, 4)")
    B = psi.shape[0]
    n = plan.n_steps
    w = np.asarray(noise_values)
    if w.shape != (B, 2 * n + 1):
        raise ConfigError(f"noise block shape {w.shape} != ({B}, {2 * n + 1})")
    out_steps = np.asarray(out_steps, dtype=int)
    if out_steps.size and (np.any(np.diff(out_steps) <= 0) or out_steps[0] < 0
                           or out_steps[-1] > n):
        raise ConfigError("out_steps must be strictly increasing within [0, n_steps]")

    h = 0.5 * plan.dt
    m = np.zeros(B, dtype=complex)
    j = np.zeros(B, dtype=complex)
    death = np.full(B, -1, dtype=int)
    states = np.zeros((B, out_steps.size, 4), dtype=complex)
    pos = 0
    if pos < out_steps.size and out_steps[pos] == 0:
        states[:, pos] = psi
        pos += 1

    for k in range(n):
        d_psi1, d_m1, d_j1 = _stage(plan, 2 * k, psi, m, j, w[:, 2 * k], nonlinear)
        psi_h = psi + h * d_psi1
        m_h = m + h * d_m1
        j_h = j + h * d_j1
        d_psi2, d_m2, d_j2 = _stage(plan, 2 * k + 1, psi_h, m_h, j_h,
                                    w[:, 2 * k + 1], nonlinear)
        psi = psi + plan.dt * d_psi2
        m = m + plan.dt * d_m2
        j = j + plan.dt * d_j2

        bad = ~np.isfinite(psi).all(axis=1)
        if np.any(bad):
            fresh = bad & (death < 0)
            death[fresh] = k + 1
            psi[bad] = 0.0
            m[bad] = 0.0
            j[bad] = 0.0
        if nonlinear:
            norms = np.sqrt(np.einsum("ij,ij->i", psi.conj(), psi).real)
            # entries can stay representable while the squared norm overflows;
            # dividing by inf would zero the row silently, so count it as dead
            blown = ~np.isfinite(norms)
            if np.any(blown):
                fresh = blown & (death < 0)
                death[fresh] = k + 1
                psi[blown] = 0.0
                m[blown] = 0.0
                j[blown] = 0.0
                norms[blown] = 0.0
            np.divide(psi, norms[:, None], where=norms[:, None] > 0, out=psi)
        if pos < out_steps.size and out_steps[pos] == k + 1:
            states[:, pos] = psi
            pos += 1
    return states, death


# --- single-trajectory API ----------------------------------------------------

def _plan_for_step(params, model, coeffs, dt, convention) -> StepPlan:
    if isinstance(coeffs, StepPlan):
        return coeffs
    T = float(coeffs.grid[-1])
    return make_plan(params, model, dt, T, convention=convention, track=coeffs)


def _one_step(state: TrajectoryState, plan: StepPlan, noise: NoisePath,
              mode: str) -> TrajectoryState:
    if abs(noise.dt - plan.dt) > 1e-12 * plan.dt:
        raise ConfigError("noise path step does not match the plan step")
    k2 = noise.index_of(state.t)
    if k2 % 2:
        raise ConfigError(f"t={state.t} is not a full-step grid time")
    w = noise.values
    if k2 + 1 >= w.size:
        raise ConfigError("noise path does not cover the step")
    psi = state.psi[None, :]
    m = np.array([state.m_shift])
    j = np.array([state.j_noise])
    nonlinear = mode == "nonlinear"
    h = 0.5 * plan.dt
    d_psi1, d_m1, d_j1 = _stage(plan, k2, psi, m, j, w[k2 : k2 + 1], nonlinear)
    d_psi2, d_m2, d_j2 = _stage(plan, k2 + 1, psi + h * d_psi1, m + h * d_m1,
                                j + h * d_j1, w[k2 + 1 : k2 + 2], nonlinear)
    psi = psi + plan.dt * d_psi2
    if not np.all(np.isfinite(psi)):
        step = k2 // 2 + 1
        raise DivergenceError(
            f"trajectory amplitudes went non-finite at step {step} "
            f"(t={state.t + plan.dt:.6g})", t=state.t + plan.dt)
    new_psi = psi[0]
    if nonlinear:
        nrm = np.linalg.norm(new_psi)
        if not np.isfinite(nrm) or nrm == 0.0:
            raise DivergenceError(
                f"trajectory norm left the representable range at "
                f"t={state.t + plan.dt:.6g}", t=state.t + plan.dt)
        new_psi = new_psi / nrm
    lx = _l_expect_single(new_psi)
    return TrajectoryState(
        psi=new_psi,
        m_shift=complex(m[0] + plan.dt * d_m2[0]) if nonlinear else 0.0j,
        j_noise=complex(j[0] + plan.dt * d_j2[0]),
        t=state.t + plan.dt,
        l_expect=lx,
        l_dag_expect=np.conj(lx),
    )


def step_nonlinear(state: TrajectoryState, params: ModelParams, model: str,
                   noise: NoisePath, coeffs, dt: float,
                   convention: str = "selfconsistent") -> TrajectoryState:
    """One midpoint step of the norm-preserving equation (shifted noise).

    `coeffs` is a coefficient track at dt/2 resolution, or a prebuilt
    StepPlan (the fast path -- building channel arrays from a track costs
    O(track length) per call).
    """
    plan = _plan_for_step(params, model, coeffs, dt, convention)
    return _one_step(state, plan, noise, "nonlinear")


def step_linear(state: TrajectoryState, params: ModelParams, model: str,
                noise: NoisePath, coeffs, dt: float,
                convention: str = "selfconsistent") -> TrajectoryState:
    """One midpoint step of the free-norm equation (raw noise, no shift)."""
    plan = _plan_for_step(params, model, coeffs, dt, convention)
    return _one_step(state, plan, noise, "linear")


def output_steps(n_steps: int, stride: int) -> np.ndarray:
    """Recorded step indices: every `stride`-th step plus the final one."""
    if stride < 1:
        raise ConfigError("output stride must be >= 1")
    ks = np.arange(0, n_steps + 1, stride)
    if ks[-1] != n_steps:
        ks = np.append(ks, n_steps)
    return ks


def propagate_trajectory(psi0, params: ModelParams, model: str, dt: float,
                         T: float, seed: int = 0, traj_index: int = 0,
                         mode: str = "nonlinear",
                         convention: str = "selfconsistent",
                         output_stride: int = 1, plan: StepPlan | None = None):
    """Convenience wrapper: noise generation + full-horizon propagation.

    Returns (times, states) with states of shape (n_out, 4).  Raises
    DivergenceError if the trajectory goes non-finite.
    """
    if plan is None:
        plan = make_plan(params, model, dt, T, convention=convention)
    path = sample_ou_path(params, dt, T, seed, traj_index)
    ks = output_steps(plan.n_steps, output_stride)
    states, death = propagate_batch(np.asarray(psi0, dtype=complex)[None, :],
                                    path.values[None, :], plan, ks, mode)
    if death[0] >= 0:
        t_bad = death[0] * dt
        raise DivergenceError(
            f"trajectory aborted at step {int(death[0])} (t={t_bad:.6g})", t=t_bad)
    return ks * dt, states[0]


def dump_trajectory_csv(times, states, fileobj, norms=None) -> None:
    """Per-trajectory dump: t, re/im amplitudes in basis order |11>, |10>,
    |01>, |00>, and the state norm (informative in linear mode)."""
    labels = ("a11", "a10", "a01", "a00")
    header = ["t"]
    for lb in labels:
        header += [f"re_{lb}", f"im_{lb}"]
    header.append("norm")
    fileobj.write(",".join(header) + "\n")
    arr = np.asarray(states)
    if norms is None:
        norms = np.linalg.norm(arr, axis=1)
    for i, t in enumerate(np.asarray(times)):
        row = [float(t)]
        for c in range(4):
            row += [float(arr[i, c].real), float(arr[i, c].imag)]
        row.append(float(norms[i]))
        fileobj.write(",".join(repr(x) for x in row) + "\n")
