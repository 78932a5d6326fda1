"""Krylov-subspace lower bounds on quantum Fisher information, exact and
shadow-estimated, with the experiment harness reproducing the desk-scale
studies."""

__version__ = "0.1.0"

from .errors import (
    DegenerateCommutatorError,
    IllConditionedError,
    InsufficientDataError,
    KrylovQfiError,
    ResourceLimitError,
    SubspaceTerminatedError,
)
from .states import (
    DensityMatrix,
    Observable,
    PureState,
    Spectrum,
    bound_entangled,
    bound_entangled_spectrum,
    collective_spin_z,
    fidelity,
    ghz_state,
    pauli_string,
    pseudo_pure,
    pseudo_pure_spectrum,
    random_density_matrix,
    random_pauli_string,
    random_pure_state,
    spectrum,
    state_from_description,
)
from .qfi import (
    HankelSystem,
    KrylovData,
    MomentSequence,
    apply_R,
    apply_R_inverse,
    commutator_C,
    hankel_system_exact,
    krylov_approximation,
    krylov_bound_exact,
    krylov_bound_projection,
    krylov_generators,
    krylov_hierarchy,
    krylov_terminal_order,
    moments_exact,
    n_star,
    proportionality_check,
    proportionality_coefficient,
    qfi_exact,
    sld_L,
    weighted_inner,
)
from .bounds import BoundValue, legendre_bound, relative_error, sub_qfi_bound, taylor_bound
from .multicopy import (
    MuTable,
    MultiCopyOperator,
    build_O,
    mu_coefficients,
    multicopy_trace,
    plan_repetitions,
    plan_subsample_size,
    reduced_O_l,
    symmetrize_O,
    t_k_polynomial,
    t_polynomial_sequence,
    variance_bound,
)
from .shadows import (
    ShadowBatch,
    Snapshot,
    generate_batch,
    outcome_distribution,
    sample_snapshot,
    snapshot_to_matrix,
)
from .estimator import (
    EstimateReport,
    EstimatorConfig,
    estimate_kry_bound,
    hankel_solve_estimated,
    median_of_means,
    u_statistic_exact_factorized,
    u_statistic_from_matrices,
    u_statistic_tk,
)
from .harness import ExperimentConfig, RunRecord, run_experiment
