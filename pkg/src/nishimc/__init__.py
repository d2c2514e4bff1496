"""Replica-symmetric theory and MCMC verification of overlap fluctuations
for rank-one spiked Wigner / SK models on the Nishimori line."""

__version__ = "0.1.0"

from .prior import Prior, bernoulli, is_symmetric, make_prior, moment, prior_by_name, rademacher
from .scalar import (
    F,
    F_prime,
    QuadratureSpec,
    ScalarBracketParams,
    ScalarTheory,
    bracket_moment,
    estimate_lambda_c,
    rs_potential,
    solve_fixed_point,
)
from .covariance import (
    CavitySystem,
    CovarianceResult,
    build_cavity_system,
    build_M,
    cavity_index_set,
    constant_overlap_trajectory,
    covariance_closed_form,
    solve_covariance_general_n,
    theory_at,
)
from .model import (
    Instance,
    effective_fields,
    energy,
    energy_batch,
    instance_from_snapshot,
    instance_snapshot,
    local_field,
    overlap,
    overlap_minus,
    sample_instance,
)
from .sampler import (
    Chain,
    ChainSpec,
    ExactGibbs,
    GibbsSample,
    enumerate_exact,
    enumerate_gibbs,
    heat_bath_sweep,
    run_chain,
)
from .observables import (
    CavityCheckResult,
    CovarianceEstimates,
    NishimoriCheck,
    NormalityReport,
    OverlapSample,
    cavity_derivative_check,
    concentration_fit,
    empirical_covariance,
    lag1_autocorr,
    nishimori_check,
    normality_test,
    overlaps_of,
    pair_cov,
    replica_pairs,
    rescale,
)
from .config import ExperimentConfig, load_config
