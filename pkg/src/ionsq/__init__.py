"""Spin-boson simulator and metrology toolkit for trapped-ion chains."""

from .chain import ChainModel, build_chain, coupling_vector, normal_modes, solve_equilibrium
from .dynamics import (
    T_PI,
    RotationParams,
    SqueezeParams,
    apply_beam_splitter,
    apply_displacement,
    apply_rotation,
    apply_squeeze,
    evolve_tc,
)
from .errors import (
    BudgetExceededError,
    ConvergenceError,
    CutoffLeakageError,
    InsensitiveObservableError,
    IonsqError,
)
from .fockspace import (
    ObservableSpec,
    SpaceSpec,
    SpinBosonState,
    build_space,
    initial_state,
    spin_operator,
    tc_hamiltonian,
)
from .metrology import (
    GainReport,
    cfi_spin,
    gain_from_observable,
    qfi_full,
    qfi_spin,
    renyi_entropy,
    to_db,
)
from .noise import (
    NoiseSpec,
    analytic_nr_phase,
    analytic_nr_phase_optimum,
    analytic_sa_phase,
    analytic_thermal,
    phase_average,
    thermal_ensemble,
)
from .protocols import ProtocolConfig, ProtocolResult, probe_state, run_nr, run_protocol, run_sa
from .twa import TrajectoryEnsemble, estimate_moments, evolve_trajectories, sample_initial

__version__ = "0.1.0"
