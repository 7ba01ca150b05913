"""Static model data: parameters, operators, and bath functions for two
qubits decaying collectively into a shared Lorentzian reservoir.

Basis ordering is fixed globally and never reordered:

    index 0 <-> |11>,  1 <-> |10>,  2 <-> |01>,  3 <-> |00>

with qubit A as the left (first) tensor factor and the single-qubit basis
ordered (|1>, |0>).  hbar = 1 throughout; omega_s = 1 sets the time unit in
all defaults.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

_SIGMA_MINUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)
_SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
_EYE2 = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the model.

    omega_s : transition frequency, equal for both qubits
    lam     : dimensionless system-bath coupling strength, >= 0
    gamma   : inverse memory time of the bath, > 0 (gamma -> inf is Markov)
    Omega   : central frequency of the Lorentzian spectrum

    The detuning ``delta = omega_s - Omega`` is always derived, never stored.
    The overall spectral weight is hard-fixed to 1 and deliberately not a
    field: exposing it would silently rescale lam**2.
    """

    omega_s: float = 1.0
    lam: float = 1.0
    gamma: float = 0.5
    Omega: float = 0.0

    def __post_init__(self):
        if not (self.gamma > 0):
            raise ConfigError(f"gamma must be > 0, got {self.gamma}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        for name in ("omega_s", "lam", "gamma", "Omega"):
            if not np.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")

    @property
    def delta(self) -> float:
        return self.omega_s - self.Omega


# JSON field names -> constructor arguments.  "delta" is recomputed and never
# read; the spectral weight "Gamma" is accepted only at its fixed value 1.
_JSON_KEYS = {"omega_s": "omega_s", "lambda": "lam", "gamma": "gamma", "Omega": "Omega"}


def params_from_dict(data: dict) -> ModelParams:
    """Build ModelParams from a flat JSON-style dict (strict keys)."""
    kwargs = {}
    for key, value in data.items():
        if key == "delta":
            continue  # derived; recomputed from omega_s - Omega
        if key == "Gamma":
            if value != 1:
                raise ConfigError("the overall spectral weight is fixed to 1")
            continue
        if key not in _JSON_KEYS:
            raise ConfigError(f"unknown parameter key {key!r}")
        try:
            kwargs[_JSON_KEYS[key]] = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"parameter {key!r} must be a number, got {value!r}")
    return ModelParams(**kwargs)


def params_to_dict(params: ModelParams) -> dict:
    out = {
        "omega_s": params.omega_s,
        "lambda": params.lam,
        "gamma": params.gamma,
        "Omega": params.Omega,
        "delta": params.delta,
        "Gamma": 1,
    }
    return out


def qubit_lowering(which: str) -> np.ndarray:
    """Single-qubit lowering operator embedded in the two-qubit space."""
    if which == "A":
        return np.kron(_SIGMA_MINUS, _EYE2)
    if which == "B":
        return np.kron(_EYE2, _SIGMA_MINUS)
    raise ConfigError(f"qubit label must be 'A' or 'B', got {which!r}")


def qubit_z(which: str) -> np.ndarray:
    if which == "A":
        return np.kron(_SIGMA_Z, _EYE2)
    if which == "B":
        return np.kron(_EYE2, _SIGMA_Z)
    raise ConfigError(f"qubit label must be 'A' or 'B', got {which!r}")


def build_hamiltonian(params: ModelParams) -> np.ndarray:
    """System Hamiltonian (omega_s/2)(sigma_z^A + sigma_z^B) = diag(w,0,0,-w)."""
    return 0.5 * params.omega_s * (qubit_z("A") + qubit_z("B"))


def coupling_operator() -> np.ndarray:
    """Collective lowering channel sigma_-^A + sigma_-^B (couples to the bath)."""
    return qubit_lowering("A") + qubit_lowering("B")


def staggered_coupling() -> np.ndarray:
    """Staggered lowering channel sigma_z^A sigma_-^B + sigma_-^A sigma_z^B.

    Annihilates the singlet; appears alongside the collective channel in the
    memory operator of this model.
    """
    return qubit_z("A") @ qubit_lowering("B") + qubit_lowering("A") @ qubit_z("B")


def pair_lowering() -> np.ndarray:
    """Double-decay channel sigma_-^A sigma_-^B = |00><11|."""
    return qubit_lowering("A") @ qubit_lowering("B")


def bath_correlation(t, s, params: ModelParams):
    """Two-time bath correlation (gamma/2) exp(-gamma|t-s| - i Omega (t-s)).

    Accepts scalars or arrays; Hermitian in (t, s).
    """
    tau = np.asarray(t, dtype=float) - np.asarray(s, dtype=float)
    out = 0.5 * params.gamma * np.exp(-params.gamma * np.abs(tau) - 1j * params.Omega * tau)
    if np.ndim(out) == 0:
        return complex(out)
    return out


def spectral_density(omega, params: ModelParams):
    """Lorentzian spectral density (1/pi) gamma^2 / ((omega-Omega)^2 + gamma^2)."""
    x = np.asarray(omega, dtype=float) - params.Omega
    out = params.gamma**2 / (np.pi * (x**2 + params.gamma**2))
    if np.ndim(out) == 0:
        return float(out)
    return out


_SQ2 = 1.0 / np.sqrt(2.0)

# Every initial state the reference curves use, by name.  "bell-" is also
# accepted with a unicode minus sign.
PRESETS = {
    "11": np.array([1, 0, 0, 0], dtype=complex),
    "10": np.array([0, 1, 0, 0], dtype=complex),
    "01": np.array([0, 0, 1, 0], dtype=complex),
    "00": np.array([0, 0, 0, 1], dtype=complex),
    "singlet": np.array([0, _SQ2, -_SQ2, 0], dtype=complex),
    "triplet": np.array([0, _SQ2, _SQ2, 0], dtype=complex),
    "10+00": np.array([0, _SQ2, 0, _SQ2], dtype=complex),
    "bell+": np.array([_SQ2, 0, 0, _SQ2], dtype=complex),
    "bell-": np.array([_SQ2, 0, 0, -_SQ2], dtype=complex),
}


def preset_state(name: str) -> np.ndarray:
    """Return a unit-norm copy of a named initial state."""
    key = name.replace("−", "-")  # unicode minus
    if key not in PRESETS:
        known = ", ".join(sorted(PRESETS))
        raise ConfigError(f"unknown state preset {name!r}; known presets: {known}")
    vec = PRESETS[key].copy()
    return vec / np.linalg.norm(vec)


def state_from_amplitudes(values) -> np.ndarray:
    """Build a normalized state from 8 numbers (re, im interleaved, basis order)."""
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size != 8:
        raise ConfigError(f"amplitude list must hold 8 numbers (re/im x 4), got {arr.size}")
    vec = arr[0::2] + 1j * arr[1::2]
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        raise ConfigError("amplitude list must not be the zero vector")
    return vec / norm


def projector(psi: np.ndarray) -> np.ndarray:
    """|psi><psi| for a 4-component state vector."""
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())
