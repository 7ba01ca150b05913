"""Monte Carlo estimation of the reduced density matrix.

rho(t) = M[|psi_t><psi_t|] over trajectories indexed 0..n_traj-1.  The
default estimator averages normalized projectors from the norm-preserving
unraveling; the free-norm unraveling (mode="linear", unnormalized projectors,
martingale trace) is the rigorously unbiased one and is kept both for
consistency checks and for production runs where bias matters more than
variance.  The two agree wherever the memory operator is noise-independent
(every model except exact/weak5, and those two whenever the initial state has
no double-excitation amplitude).  From double-excitation initial states the
norm-preserving estimator acquires a small systematic offset (~1e-2 in RDM
entries at lam=1, gamma=0.5; flat under dt refinement), inherited from its
causal-shift construction; prefer mode="linear" there when accuracy below
that level is needed.

Reduction is a fixed pairwise tree keyed by trajectory index -- leaves of at
most 512 trajectories, split point at the largest power of two below the
range length -- so the result is bit-identical for any worker count:
scheduling decides only *when* a leaf is computed, never what is added to
what.  Each leaf carries packed accumulators [sum Re, sum Im, sum Re^2,
sum Im^2] per matrix element per output time, from which the mean and the
per-element standard error are assembled at the root.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EnsembleError
from .model import ModelParams
from .noise import sample_ou_block
from .trajectory import StepPlan, make_plan, output_steps, propagate_batch

LEAF_SIZE = 512


@dataclass(frozen=True)
class EnsembleEstimate:
    """Ensemble average with per-element statistical errors.

    rho: (n_out, 4, 4); stderr: (n_out, 4, 4) real standard errors of the
    complex element estimates, sqrt((var_re + var_im)/n); n_aborted counts
    trajectories dropped for going non-finite (excluded from the average).
    """

    grid: np.ndarray
    rho: np.ndarray
    stderr: np.ndarray
    n_traj: int
    n_aborted: int
    seed: int
    model: str
    mode: str
    params: ModelParams

    @property
    def n_effective(self) -> int:
        return self.n_traj - self.n_aborted


def reduction_leaves(n: int, leaf_size: int = LEAF_SIZE):
    """Leaf index ranges [(a, b), ...] of the fixed reduction tree."""
    out = []

    def walk(a, b):
        if b - a <= leaf_size:
            out.append((a, b))
            return
        m = 1 << ((b - a - 1).bit_length() - 1)
        walk(a, a + m)
        walk(a + m, b)

    walk(0, n)
    return out


def _merge_tree(leaf_vals, a, b, leaf_map, leaf_size):
    if b - a <= leaf_size:
        return leaf_vals[leaf_map[(a, b)]]
    m = 1 << ((b - a - 1).bit_length() - 1)
    left = _merge_tree(leaf_vals, a, a + m, leaf_map, leaf_size)
    right = _merge_tree(leaf_vals, a + m, b, leaf_map, leaf_size)
    return left + right


def _leaf_task(a, b, psi0, params, plan, seed, dt, T, ks, mode):
    w = sample_ou_block(params, dt, T, seed, np.arange(a, b))
    psis = np.tile(psi0, (b - a, 1))
    states, death = propagate_batch(psis, w, plan, ks, mode)
    alive = states[death < 0]
    n_dead = int(np.count_nonzero(death >= 0))
    n_out = ks.size
    # packed accumulators: axis 0 = [sum re, sum im, sum re^2, sum im^2]
    acc = np.zeros((4, n_out, 4, 4))
    for it in range(n_out):
        v = alive[:, it, :]
        pr = v[:, :, None] * v[:, None, :].conj()
        re, im = pr.real, pr.imag
        acc[0, it] = re.sum(axis=0)
        acc[1, it] = im.sum(axis=0)
        acc[2, it] = (re * re).sum(axis=0)
        acc[3, it] = (im * im).sum(axis=0)
    return acc, n_dead


def run_ensemble(psi0, params: ModelParams, model: str, n_traj: int, seed: int,
                 dt: float, T: float, output_stride: int = 10, *,
                 mode: str = "nonlinear", convention: str = "selfconsistent",
                 threads: int = 0, plan: StepPlan | None = None) -> EnsembleEstimate:
    """Average trajectory projectors over traj_index = 0..n_traj-1.

    threads=0 picks the CPU count; any thread count yields bit-identical
    results (fixed reduction tree).  Fails with EnsembleError if more than
    0.1% of trajectories abort; aborted trajectories are excluded from the
    average and counted in n_aborted.
    """
    psi0 = np.asarray(psi0, dtype=complex).reshape(4)
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-8:
        raise ConfigError("initial state must be normalized")
    if n_traj < 1:
        raise ConfigError("n_traj must be >= 1")
    if plan is None:
        plan = make_plan(params, model, dt, T, convention=convention)
    ks = output_steps(plan.n_steps, output_stride)
    leaves = reduction_leaves(n_traj)
    leaf_map = {rng: i for i, rng in enumerate(leaves)}

    def task(rng):
        return _leaf_task(rng[0], rng[1], psi0, params, plan, seed, dt, T, ks, mode)

    if threads == 0:
        threads = os.cpu_count() or 1
    if threads == 1 or len(leaves) == 1:
        results = [task(rng) for rng in leaves]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(task, leaves))

    n_aborted = sum(r[1] for r in results)
    if n_aborted > 1e-3 * n_traj:
        raise EnsembleError(
            f"{n_aborted}/{n_traj} trajectories aborted (limit is 0.1%)")
    leaf_vals = [r[0] for r in results]
    acc = _merge_tree(leaf_vals, 0, n_traj, leaf_map, LEAF_SIZE)

    n_eff = n_traj - n_aborted
    if n_eff < 1:
        raise EnsembleError("no surviving trajectories")
    mean_re = acc[0] / n_eff
    mean_im = acc[1] / n_eff
    rho = mean_re + 1j * mean_im
    if n_eff > 1:
        var_re = np.maximum(acc[2] - n_eff * mean_re**2, 0.0) / (n_eff - 1)
        var_im = np.maximum(acc[3] - n_eff * mean_im**2, 0.0) / (n_eff - 1)
        stderr = np.sqrt((var_re + var_im) / n_eff)
    else:
        stderr = np.zeros_like(mean_re)
    return EnsembleEstimate(
        grid=ks * dt, rho=rho, stderr=stderr, n_traj=n_traj,
        n_aborted=n_aborted, seed=seed, model=model, mode=mode, params=params)


@dataclass(frozen=True)
class PhysicalityReport:
    trace_dev: float
    herm_dev: float
    min_eig: float
    trace_tol: float
    herm_tol: float
    eig_floor: float

    @property
    def passed(self) -> bool:
        return (self.trace_dev <= self.trace_tol
                and self.herm_dev <= self.herm_tol
                and self.min_eig >= self.eig_floor)


def rdm_physicality(rho, stderr_max: float = 0.0) -> PhysicalityReport:
    """Trace / Hermiticity / positivity report for one density matrix.

    Deterministic thresholds by default (trace 1e-8, Hermiticity 1e-12,
    eigenvalue floor -1e-8); pass the largest per-element standard error to
    widen them 3-sigma-style for Monte Carlo estimates.
    """
    r = np.asarray(rho, dtype=complex)
    if r.shape != (4, 4):
        raise ConfigError("expected a 4x4 density matrix")
    trace_dev = abs(float(np.trace(r).real) - 1.0) + abs(float(np.trace(r).imag))
    herm_dev = float(np.max(np.abs(r - r.conj().T)))
    herm = 0.5 * (r + r.conj().T)
    min_eig = float(np.linalg.eigvalsh(herm).min())
    return PhysicalityReport(
        trace_dev=trace_dev,
        herm_dev=herm_dev,
        min_eig=min_eig,
        trace_tol=1e-8 + 12.0 * stderr_max,
        herm_tol=1e-12 + 2.0 * stderr_max,
        eig_floor=-(1e-8 + 3.0 * stderr_max),
    )


def dump_ensemble_csv(est: EnsembleEstimate, fileobj) -> None:
    """Module-level dump: t, 16 re/im element pairs, 16 standard errors."""
    labels = [f"{i}{j}" for i in range(1, 5) for j in range(1, 5)]
    header = ["t"]
    for lb in labels:
        header += [f"re_r{lb}", f"im_r{lb}"]
    header += [f"stderr_r{lb}" for lb in labels]
    fileobj.write(",".join(header) + "\n")
    for it, t in enumerate(est.grid):
        row = [float(t)]
        for i in range(4):
            for j in range(4):
                row += [float(est.rho[it, i, j].real), float(est.rho[it, i, j].imag)]
        for i in range(4):
            for j in range(4):
                row.append(float(est.stderr[it, i, j]))
        fileobj.write(",".join(repr(x) for x in row) + "\n")
