"""mixlab: a numerical laboratory for finite mixtures of product distributions."""

__version__ = "0.1.0"

from .errors import (
    AllProposalsRejected,
    BudgetExceeded,
    ConvergenceError,
    InvalidMeasure,
    InvalidParameter,
    InvalidPath,
    MixLabError,
    SchemaError,
)
from .identifiability import (
    LinearSystemReport,
    NonIdentWitness,
    bernoulli_first_order_system,
    bernoulli_nonidentifiable_witness,
    degenerate_direction_check,
    first_order_gram,
    gen_vandermonde_det,
)
from .kernels import (
    BernoulliKernel,
    BetaPushforwardKernel,
    GammaKernel,
    GaussianLocationKernel,
    GaussianLocationMixtureKernel,
    LocScaleExponentialKernel,
    MomentMapReport,
    UniformKernel,
    divergence_numeric,
    hellinger_expfam,
    kernel_from_spec,
    moment_map,
)
from .lab import ExperimentConfig, parse_config, run, run_with_overrides
from .measures import (
    MatchingResult,
    MixingMeasure,
    atom_and_weight_distances,
    canonicalize,
    distance_DN,
    distance_Dr1r2,
    optimal_matching,
    wasserstein,
)
from .posterior import (
    Chain,
    ContractionReport,
    MCMCConfig,
    PriorSpec,
    contraction_experiment,
    log_posterior_unnorm,
    mcmc_run,
    posterior_error_summary,
    prior_sample,
)
from .probes import (
    ProbeReport,
    ProbeRow,
    curvature_probe_locscale,
    impact_probe_Dr,
    inverse_ratio_probe,
    lecam_two_point_bound,
    sqrtN_sharpness_probe,
    weight_only_direction,
)
from .products import (
    DivergenceEstimate,
    ExchangeableDataset,
    ProductMixtureModel,
    d_mh,
    estimate_divergence,
    hellinger_upper_bound,
    sample_dataset,
    tv_upper_bound,
)

__all__ = [
    "AllProposalsRejected",
    "BernoulliKernel",
    "BetaPushforwardKernel",
    "BudgetExceeded",
    "Chain",
    "ContractionReport",
    "ConvergenceError",
    "DivergenceEstimate",
    "ExchangeableDataset",
    "ExperimentConfig",
    "GammaKernel",
    "GaussianLocationKernel",
    "GaussianLocationMixtureKernel",
    "InvalidMeasure",
    "InvalidParameter",
    "InvalidPath",
    "LinearSystemReport",
    "LocScaleExponentialKernel",
    "MCMCConfig",
    "MatchingResult",
    "MixLabError",
    "MixingMeasure",
    "MomentMapReport",
    "NonIdentWitness",
    "PriorSpec",
    "ProbeReport",
    "ProbeRow",
    "ProductMixtureModel",
    "SchemaError",
    "UniformKernel",
    "atom_and_weight_distances",
    "bernoulli_first_order_system",
    "bernoulli_nonidentifiable_witness",
    "canonicalize",
    "contraction_experiment",
    "curvature_probe_locscale",
    "d_mh",
    "degenerate_direction_check",
    "distance_DN",
    "distance_Dr1r2",
    "divergence_numeric",
    "estimate_divergence",
    "first_order_gram",
    "gen_vandermonde_det",
    "hellinger_expfam",
    "hellinger_upper_bound",
    "impact_probe_Dr",
    "inverse_ratio_probe",
    "kernel_from_spec",
    "lecam_two_point_bound",
    "log_posterior_unnorm",
    "mcmc_run",
    "moment_map",
    "optimal_matching",
    "parse_config",
    "posterior_error_summary",
    "prior_sample",
    "run",
    "run_with_overrides",
    "sample_dataset",
    "sqrtN_sharpness_probe",
    "tv_upper_bound",
    "wasserstein",
    "weight_only_direction",
]
