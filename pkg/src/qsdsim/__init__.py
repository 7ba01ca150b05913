"""Stochastic state diffusion for two qubits sharing a structured bath.

Library layout:

- ``model``: parameters, operators, basis conventions, initial-state presets
- ``noise``: exponentially correlated complex noise paths and the mean-field shift
- ``coeffs``: memory-integral coefficient tracks (exact and truncated)
- ``weakcoupling``: perturbative channel tracks and their lattice cross-check
- ``trajectory``: single stochastic trajectories (linear and normalized flavors)
- ``ensemble``: deterministic-reduction Monte Carlo averaging
- ``master``: noise-free reduced-density-matrix solvers and closed forms
- ``metrics``: concurrence and fidelity
- ``cli``: JSON-config command line (``qsdsim``)
"""

__version__ = "0.1.0"

from .coeffs import (
    CoeffTrack,
    closed_form_envelope,
    closed_form_rate,
    integrate_exact_coeffs,
    integrate_zeroth_coeffs,
    memory_kernel,
    steady_rate,
)
from .ensemble import EnsembleEstimate, rdm_physicality, run_ensemble
from .errors import ConfigError, DivergenceError, EnsembleError, PhysicalityError
from .master import (
    MasterResult,
    SteadyStateReport,
    analytic_rdm,
    analytic_series,
    integrate_elements,
    integrate_master,
    steady_state,
)
from .metrics import fidelity, project_psd, wootters_concurrence
from .model import (
    ModelParams,
    bath_correlation,
    build_hamiltonian,
    coupling_operator,
    pair_lowering,
    preset_state,
    projector,
    staggered_coupling,
    state_from_amplitudes,
)
from .noise import NoisePath, sample_ou_path, shifted_noise
from .trajectory import TrajectoryState, propagate_trajectory, step_linear, step_nonlinear
from .weakcoupling import WeakTrack, integrate_weak_coupling, lattice_tables

__all__ = [
    "__version__",
    "ModelParams", "bath_correlation", "build_hamiltonian", "coupling_operator",
    "staggered_coupling", "pair_lowering", "preset_state", "state_from_amplitudes",
    "projector",
    "NoisePath", "sample_ou_path", "shifted_noise",
    "CoeffTrack", "integrate_exact_coeffs", "integrate_zeroth_coeffs",
    "closed_form_rate", "closed_form_envelope", "steady_rate", "memory_kernel",
    "WeakTrack", "integrate_weak_coupling", "lattice_tables",
    "TrajectoryState", "step_nonlinear", "step_linear", "propagate_trajectory",
    "EnsembleEstimate", "run_ensemble", "rdm_physicality",
    "MasterResult", "integrate_master", "integrate_elements", "analytic_rdm",
    "analytic_series", "steady_state", "SteadyStateReport",
    "wootters_concurrence", "fidelity", "project_psd",
    "ConfigError", "DivergenceError", "PhysicalityError", "EnsembleError",
]
