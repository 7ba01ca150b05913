"""Monte Carlo averaging: determinism, statistics, and failure reporting."""

import dataclasses
import io

import numpy as np
import pytest

from qsdsim.ensemble import (
    EnsembleEstimate,
    dump_ensemble_csv,
    rdm_physicality,
    reduction_leaves,
    run_ensemble,
)
from qsdsim.errors import ConfigError, EnsembleError
from qsdsim.model import ModelParams, preset_state
from qsdsim.trajectory import make_plan

P = ModelParams(omega_s=1.0, lam=1.0, gamma=0.5, Omega=0.0)


def test_reduction_leaves_structure():
    # split point is the largest power of two below the range length, so the
    # tree shape depends only on n -- never on scheduling
    assert reduction_leaves(1200) == [(0, 512), (512, 1024), (1024, 1200)]
    assert reduction_leaves(512) == [(0, 512)]
    assert reduction_leaves(513) == [(0, 512), (512, 513)]
    assert reduction_leaves(5, leaf_size=2) == [(0, 2), (2, 4), (4, 5)]
    # leaves tile [0, n) exactly
    leaves = reduction_leaves(3001)
    assert leaves[0][0] == 0 and leaves[-1][1] == 3001
    assert all(a2 == b1 for (_, b1), (a2, _) in zip(leaves, leaves[1:]))


def test_thread_count_invariance():
    # the fixed reduction tree makes the estimate bit-identical across worker
    # counts, not merely statistically equal
    kw = dict(n_traj=1200, seed=42, dt=0.01, T=2.0)
    e1 = run_ensemble(preset_state("11"), P, "exact", threads=1, **kw)
    e4 = run_ensemble(preset_state("11"), P, "exact", threads=4, **kw)
    assert np.array_equal(e1.rho, e4.rho)
    assert np.array_equal(e1.stderr, e4.stderr)
    assert e1.n_aborted == e4.n_aborted == 0
    assert e1.n_effective == 1200


def test_estimate_layout_and_grid():
    est = run_ensemble(preset_state("10"), P, "zeroth", 32, 0, 0.01, 0.5,
                       output_stride=20)
    assert isinstance(est, EnsembleEstimate)
    assert np.allclose(est.grid, [0.0, 0.2, 0.4, 0.5])
    assert est.rho.shape == (4, 4, 4) and est.stderr.shape == (4, 4, 4)
    # t=0: every trajectory starts at the same projector, zero spread
    assert np.max(np.abs(est.rho[0] - np.outer(preset_state("10"),
                                               preset_state("10").conj()))) < 1e-15
    assert np.max(est.stderr[0]) < 1e-15
    assert np.max(est.stderr[-1]) > 0.0


def test_stderr_scales_like_sqrt_n():
    s1 = run_ensemble(preset_state("11"), P, "zeroth", 600, 7, 0.01, 2.0)
    s2 = run_ensemble(preset_state("11"), P, "zeroth", 2400, 7, 0.01, 2.0)
    ratio = np.mean(s1.stderr[-1]) / np.mean(s2.stderr[-1])
    assert 1.6 < ratio < 2.5  # ideal 2 for quadrupled sample size


def test_linear_and_nonlinear_estimators_agree():
    # the free-norm unraveling averages unnormalized projectors; its mean must
    # match the norm-preserving estimator within combined statistical error
    ln = run_ensemble(preset_state("10"), P, "exact", 3000, 11, 0.01, 3.0,
                      mode="linear")
    nl = run_ensemble(preset_state("10"), P, "exact", 3000, 12, 0.01, 3.0,
                      mode="nonlinear")
    sig = np.sqrt(ln.stderr[-1] ** 2 + nl.stderr[-1] ** 2) + 1e-12
    assert np.max(np.abs(ln.rho[-1] - nl.rho[-1]) / sig) < 4.0
    # martingale trace for the linear estimator
    assert abs(np.trace(ln.rho[-1]).real - 1.0) < 0.05
    # the nonlinear estimator has exactly unit trace by construction
    assert abs(np.trace(nl.rho[-1]) - 1.0) < 1e-12


def test_input_validation():
    with pytest.raises(ConfigError):
        run_ensemble(2.0 * preset_state("10"), P, "zeroth", 8, 0, 0.01, 0.1)
    with pytest.raises(ConfigError):
        run_ensemble(preset_state("10"), P, "zeroth", 0, 0, 0.01, 0.1)


def test_abort_fraction_guard():
    # corrupting the channel coefficients makes every trajectory overflow;
    # the failure must surface as a counted abort, not silent zeros
    plan = make_plan(P, "zeroth", 0.01, 1.0)
    bad = dataclasses.replace(plan, a_col=plan.a_col + 1e305)
    with np.errstate(all="ignore"), pytest.raises(EnsembleError) as err:
        run_ensemble(preset_state("10"), P, "zeroth", 64, 0, 0.01, 1.0,
                     plan=bad)
    assert "64/64" in str(err.value)


def test_rdm_physicality_reports():
    rho = np.diag([0.25, 0.25, 0.25, 0.25]).astype(complex)
    rep = rdm_physicality(rho)
    assert rep.passed and rep.trace_dev < 1e-15 and rep.min_eig == 0.25
    broken = rho.copy()
    broken[0, 1] = 0.5   # non-Hermitian
    assert not rdm_physicality(broken).passed
    neg = np.diag([0.6, 0.5, -0.1, 0.0]).astype(complex)
    assert not rdm_physicality(neg).passed
    # Monte Carlo widening rescues small statistical wobble
    wob = np.diag([0.5 + 2e-4, 0.5 - 1e-4, -1e-4, 0.0]).astype(complex)
    assert not rdm_physicality(wob).passed
    assert rdm_physicality(wob, stderr_max=1e-3).passed
    with pytest.raises(ConfigError):
        rdm_physicality(np.eye(3))


def test_seed_changes_estimate():
    a = run_ensemble(preset_state("11"), P, "zeroth", 256, 0, 0.01, 1.0)
    b = run_ensemble(preset_state("11"), P, "zeroth", 256, 1, 0.01, 1.0)
    assert not np.array_equal(a.rho, b.rho)
    # same seed reproduces exactly
    c = run_ensemble(preset_state("11"), P, "zeroth", 256, 0, 0.01, 1.0)
    assert np.array_equal(a.rho, c.rho)


def test_dump_ensemble_csv():
    est = run_ensemble(preset_state("10"), P, "zeroth", 16, 0, 0.01, 0.2,
                       output_stride=10)
    buf = io.StringIO()
    dump_ensemble_csv(est, buf)
    lines = buf.getvalue().strip().split("\n")
    header = lines[0].split(",")
    assert header[0] == "t" and "re_r11" in header and "stderr_r44" in header
    assert len(header) == 1 + 32 + 16
    assert len(lines) == 1 + est.grid.size


def test_pair_sector_estimators_against_lossy_mode_reference():
    """From |11> the memory operator becomes noise-dependent and only the
    free-norm average is rigorously unbiased.  The linear estimate must sit
    inside its Monte Carlo band around the lossy-mode reference; the
    norm-preserving one is allowed its known small systematic offset (which
    is flat under dt refinement) but no more."""
    from _oracles import lossy_mode_rdms

    psi0 = preset_state("11")
    est = run_ensemble(psi0, P, "exact", 4000, 0, 0.01, 8.0,
                       output_stride=40, mode="linear")
    ref = lossy_mode_rdms(psi0, P, est.grid)
    dev = np.abs(est.rho - ref)
    assert np.all(dev <= 0.01 + 5.0 * est.stderr)

    est2 = run_ensemble(psi0, P, "exact", 4000, 0, 0.01, 8.0,
                        output_stride=40, mode="nonlinear")
    dev2 = np.abs(est2.rho - ref)
    assert float(dev2.max()) < 0.05

    # the same check at a detuned bath frequency pins the phase conventions
    # (kernel rotation, shift decay, pair-channel rotation) in one shot
    p_rot = ModelParams(omega_s=1.0, lam=1.0, gamma=0.5, Omega=0.6)
    est3 = run_ensemble(psi0, p_rot, "exact", 2000, 0, 0.01, 6.0,
                        output_stride=30, mode="linear")
    ref3 = lossy_mode_rdms(psi0, p_rot, est3.grid)
    assert np.all(np.abs(est3.rho - ref3) <= 0.015 + 5.0 * est3.stderr)
