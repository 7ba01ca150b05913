"""Entanglement and distance measures on 4x4 density matrices.

Basis order is the global one (|11>, |10>, |01>, |00>); the spin-flip matrix
below is sigma_y (x) sigma_y written in that basis, and it must stay in sync
with the operator definitions in the model module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PhysicalityError

# sigma_y (x) sigma_y in the fixed basis
SPIN_FLIP = np.array([
    [0, 0, 0, -1],
    [0, 0, 1, 0],
    [0, 1, 0, 0],
    [-1, 0, 0, 0],
], dtype=complex)

HERM_TOL = 1e-6
EIG_REJECT = -1e-6


@dataclass(frozen=True)
class MetricValue:
    """A metric result plus the eigenvalues it was computed from."""

    value: float
    diagnostics: np.ndarray


def _check_hermitian(rho, what: str) -> np.ndarray:
    r = np.asarray(rho, dtype=complex)
    if r.shape != (4, 4):
        raise PhysicalityError(f"{what}: expected a 4x4 matrix, got {r.shape}")
    dev = float(np.max(np.abs(r - r.conj().T)))
    if dev > HERM_TOL:
        raise PhysicalityError(f"{what}: non-Hermitian input (deviation {dev:.3g})")
    return r


def wootters_concurrence(rho) -> MetricValue:
    """C = max(0, sqrt(mu1) - sqrt(mu2) - sqrt(mu3) - sqrt(mu4)) with mu_i
    the decreasing eigenvalues of rho (S rho* S), S the spin flip.

    Tiny negative eigenvalues (statistical noise in Monte Carlo estimates)
    are clipped to zero before the square roots.
    """
    r = _check_hermitian(rho, "concurrence")
    m = r @ SPIN_FLIP @ r.conj() @ SPIN_FLIP
    mu = np.sort(np.linalg.eigvals(m).real)[::-1]
    mu = np.clip(mu, 0.0, None)
    roots = np.sqrt(mu)
    c = roots[0] - roots[1] - roots[2] - roots[3]
    return MetricValue(value=float(min(max(c, 0.0), 1.0)), diagnostics=mu)


def project_psd(rho, renormalize: bool = True) -> np.ndarray:
    """Clip negative eigenvalues to zero and (optionally) rescale the trace
    to one -- the standard fix-up for statistically non-PSD Monte Carlo
    matrices before fidelity evaluation."""
    r = _check_hermitian(rho, "psd projection")
    w, v = np.linalg.eigh(0.5 * (r + r.conj().T))
    w = np.clip(w, 0.0, None)
    out = (v * w) @ v.conj().T
    if renormalize:
        tr = float(np.trace(out).real)
        if tr > 0.0:
            out = out / tr
    return out


def fidelity(rho_a, rho_b) -> MetricValue:
    """Uhlmann fidelity F = Tr sqrt(sqrt(rho_a) rho_b sqrt(rho_a)).

    Symmetric in its arguments to ~1e-10.  Inputs must be Hermitian with
    eigenvalues above -1e-6; small negatives are clipped to zero before the
    matrix square roots.
    """
    a = _check_hermitian(rho_a, "fidelity")
    b = _check_hermitian(rho_b, "fidelity")
    for name, m in (("first", a), ("second", b)):
        w = np.linalg.eigvalsh(m)
        if w.min() < EIG_REJECT:
            raise PhysicalityError(
                f"fidelity: {name} argument has eigenvalue {w.min():.3g} < {EIG_REJECT:g}")
    wa, va = np.linalg.eigh(a)
    wa = np.clip(wa, 0.0, None)
    sqrt_a = (va * np.sqrt(wa)) @ va.conj().T
    inner = sqrt_a @ b @ sqrt_a
    w = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    w = np.clip(w, 0.0, None)
    f = float(np.sum(np.sqrt(w)))
    return MetricValue(value=min(max(f, 0.0), 1.0), diagnostics=w)
