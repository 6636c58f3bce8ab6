"""Exact and empirical asymptotic-variance comparison for kernel scan orders
on finite state spaces."""

from scanvar.embedding import (
    BlockVector,
    CycleEmbedding,
    apply_embedding,
    apply_embedding_adjoint,
    block_inner,
    block_norm,
    diag_apply,
    embedding_power,
    resolvent_solve,
    shift,
    skew_part,
    symmetric_part,
)
from scanvar.kernels import (
    DegenerateConditionalError,
    Dist,
    FamilyDiagnostics,
    Kernel,
    KernelFamily,
    Observable,
    ReducibilityError,
    StateSpace,
    SummabilityError,
    ValidationError,
    center,
    compose_cycle,
    family_diagnostics,
    gibbs_kernel,
    inner,
    is_irreducible,
    lazy,
    make_family,
    metropolis_kernel,
    random_reversible,
    random_scan,
    sigma,
    validate_family,
)
from scanvar.ordering import (
    BetaPath,
    OrderingReport,
    PeskunComparison,
    PeskunOrderingReport,
    beta_derivative,
    bellman_value,
    check_peskun_ordering,
    check_scan_ordering,
    gap_lower_bound,
    palindrome_check,
    peskun_dominates,
    variational_identity_check,
)
from scanvar.simulate import (
    SamplePath,
    SimulationConfig,
    VarianceEstimate,
    estimate_variance,
    extract_embedded_component,
    simulate,
)
from scanvar.variance import (
    SummabilityReport,
    VarianceReport,
    finite_m_variance_exact,
    joint_law_exact,
    summability_check,
    var_lambda_rand,
    var_lambda_strat,
    var_lambda_strat_series,
    var_limit,
)

__version__ = "0.1.0"
