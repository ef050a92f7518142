"""Memory compression for recurrent quantum models.

Train a decoupling circuit and a reduced update circuit against a combined
decoupling/dynamical-fidelity cost, score the compression with the quantum
fidelity divergence rate, and compare against variational MPS truncation.
"""

from .ansatz import AnsatzSpec, build_unitary, circuit_gates, gradient, param_count, random_params
from .baseline import CanonicalForms, TruncationResult, canonicalize, mixed_transfer, truncate
from .cyclicwalk import (
    PointMass,
    Table,
    UniformInterval,
    WrappedGaussian,
    build_model,
    default_sigma,
    discretize_shift,
    gram_matrix,
    memory_states,
    transition_matrix,
)
from .qcore import (
    SubsystemLayout,
    apply_on_subsystems,
    complete_isometry,
    cosine_similarity,
    kron,
    leading_eigenpair,
    partial_trace,
    von_neumann_entropy,
)
from .qfdr import QfdrResult, UniformMps, brute_force_rate, mps_from_model, mps_from_reduced
from .rqm import (
    KrausFamily,
    MemoryEnsemble,
    Rqm,
    cq,
    exact_stationary,
    kraus_from_unitary,
    sample_memory_ensemble,
    step,
)
from .training import (
    CostEvaluator,
    ReductionProblem,
    TrainResult,
    combined_cost,
    combined_cost_gradient,
    decoupling_fidelity,
    dynamical_fidelity,
    planted_target,
    reduced_state,
    reference_state,
    train,
)

__version__ = "0.1.0"
