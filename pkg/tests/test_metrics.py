"""Entanglement and distance measures: known values, identities, guards."""

import numpy as np
import pytest

from qsdsim.errors import PhysicalityError
from qsdsim.metrics import (
    MetricValue,
    fidelity,
    project_psd,
    wootters_concurrence,
)
from qsdsim.model import preset_state, projector


def _random_state(rng):
    v = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    return v / np.linalg.norm(v)


def _random_density(rng, dim=4):
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    m = a @ a.conj().T
    return m / np.trace(m).real


def test_concurrence_known_values():
    assert wootters_concurrence(projector(preset_state("triplet"))).value \
        == pytest.approx(1.0, abs=1e-12)
    assert wootters_concurrence(projector(preset_state("singlet"))).value \
        == pytest.approx(1.0, abs=1e-12)
    assert wootters_concurrence(projector(preset_state("bell+"))).value \
        == pytest.approx(1.0, abs=1e-10)
    # product states are separable
    for name in ("11", "10", "01", "00"):
        assert wootters_concurrence(projector(preset_state(name))).value \
            == pytest.approx(0.0, abs=1e-12)
    # maximally mixed
    assert wootters_concurrence(np.eye(4) / 4.0).value == 0.0


def test_concurrence_werner_family():
    # p * singlet + (1-p) * I/4 has C = max(0, (3p-1)/2)
    sing = projector(preset_state("singlet"))
    for p in (0.0, 0.2, 1.0 / 3.0, 0.5, 0.8, 1.0):
        rho = p * sing + (1.0 - p) * np.eye(4) / 4.0
        expect = max(0.0, (3.0 * p - 1.0) / 2.0)
        assert wootters_concurrence(rho).value == pytest.approx(expect, abs=1e-10)


def test_concurrence_local_unitary_invariance():
    rng = np.random.default_rng(2024)
    for _ in range(20):
        rho = _random_density(rng)
        c0 = wootters_concurrence(rho).value
        # random local unitaries U (x) V
        qa, _ = np.linalg.qr(rng.standard_normal((2, 2))
                             + 1j * rng.standard_normal((2, 2)))
        qb, _ = np.linalg.qr(rng.standard_normal((2, 2))
                             + 1j * rng.standard_normal((2, 2)))
        u = np.kron(qa, qb)
        c1 = wootters_concurrence(u @ rho @ u.conj().T).value
        assert c1 == pytest.approx(c0, abs=1e-10)


def test_concurrence_coherence_formula_without_double_excitation():
    # On states with no |11> support the Wootters formula collapses to twice
    # the symmetric-coherence magnitude -- for arbitrary mixed states of the
    # family, not only the analytic-solution family
    rng = np.random.default_rng(7)
    for _ in range(50):
        block = _random_density(rng, dim=3)
        rho = np.zeros((4, 4), dtype=complex)
        rho[1:, 1:] = block
        c = wootters_concurrence(rho).value
        assert c == pytest.approx(2.0 * abs(rho[1, 2]), abs=1e-10)


def test_concurrence_diagnostics_and_guards():
    mv = wootters_concurrence(projector(preset_state("singlet")))
    assert isinstance(mv, MetricValue)
    assert mv.diagnostics.shape == (4,)
    assert np.all(np.diff(mv.diagnostics) <= 1e-12)  # sorted descending
    assert np.all(mv.diagnostics >= 0.0)
    bad = np.eye(4, dtype=complex) / 4.0
    bad[0, 1] = 1e-3
    with pytest.raises(PhysicalityError):
        wootters_concurrence(bad)
    with pytest.raises(PhysicalityError):
        wootters_concurrence(np.eye(3) / 3.0)


def test_fidelity_pure_states():
    rng = np.random.default_rng(11)
    for _ in range(20):
        a, b = _random_state(rng), _random_state(rng)
        f = fidelity(projector(a), projector(b)).value
        # sqrt of a near-rank-1 spectrum carries ~1e-9 conditioning noise
        assert f == pytest.approx(abs(np.vdot(a, b)), abs=1e-7)
    s = projector(preset_state("10"))
    assert fidelity(s, s).value == pytest.approx(1.0, abs=1e-12)


def test_fidelity_symmetry_and_classical_case():
    rng = np.random.default_rng(13)
    for _ in range(10):
        a, b = _random_density(rng), _random_density(rng)
        assert fidelity(a, b).value == pytest.approx(fidelity(b, a).value,
                                                     abs=1e-10)
    # commuting case reduces to the Bhattacharyya overlap of the spectra
    pa = np.array([0.4, 0.3, 0.2, 0.1])
    pb = np.array([0.1, 0.2, 0.3, 0.4])
    f = fidelity(np.diag(pa).astype(complex), np.diag(pb).astype(complex)).value
    assert f == pytest.approx(float(np.sum(np.sqrt(pa * pb))), abs=1e-12)


def test_fidelity_mixing_monotone():
    rho = projector(preset_state("triplet"))
    eye4 = np.eye(4) / 4.0
    vals = []
    for eps in (0.0, 0.1, 0.3, 0.6, 1.0):
        mixed = (1.0 - eps) * rho + eps * eye4
        f = fidelity(rho, mixed).value
        assert f == pytest.approx(np.sqrt(1.0 - 0.75 * eps), abs=1e-10)
        vals.append(f)
    assert np.all(np.diff(vals) < 0)


def test_fidelity_rejects_unphysical():
    neg = np.diag([0.6, 0.5, -0.1, 0.0]).astype(complex)
    with pytest.raises(PhysicalityError):
        fidelity(neg, np.eye(4) / 4.0)
    with pytest.raises(PhysicalityError):
        fidelity(np.eye(4) / 4.0, neg)
    # tiny statistical negatives are tolerated and clipped
    wob = np.diag([0.6, 0.4 + 1e-7, -1e-7, 0.0]).astype(complex)
    assert fidelity(wob, np.eye(4) / 4.0).value > 0.0


def test_project_psd():
    neg = np.diag([0.6, 0.5, -0.1, 0.0]).astype(complex)
    fixed = project_psd(neg)
    w = np.linalg.eigvalsh(fixed)
    assert w.min() >= -1e-15
    assert np.trace(fixed).real == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(fixed, np.diag([0.6, 0.5, 0.0, 0.0]) / 1.1, atol=1e-12)
    # idempotent
    assert np.allclose(project_psd(fixed), fixed, atol=1e-12)
    # raw clip without trace rescale
    raw = project_psd(neg, renormalize=False)
    assert np.trace(raw).real == pytest.approx(1.1, abs=1e-12)
    # physical matrices pass through unchanged
    rho = projector(preset_state("triplet"))
    assert np.allclose(project_psd(rho), rho, atol=1e-12)
