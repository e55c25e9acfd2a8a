"""Randomized experiments under heterogeneous additive network effects.

Designs, individually weighted linear estimators, closed-form bias and
variance, an exact enumeration oracle and a reproducible Monte Carlo engine.
"""

__version__ = "0.1.0"

from .analysis import (
    InfluenceProfile,
    LHDecomposition,
    analytical_moments,
    bias_tte_adjusted,
    bias_tte_ht,
    cluster_influence,
    expected_estimate,
    influence,
    lh_decompose,
    var_general_bernoulli,
    var_general_cluster,
    var_general_crd,
    var_general_stratified,
    var_tte_adjusted_cluster,
    var_tte_adjusted_crd,
    var_tte_adjusted_saturation,
)
from .designs import (
    CRD,
    Bernoulli,
    ClusterRD,
    Design,
    ExactLaw,
    SaturationRD,
    SupportTooLarge,
    SymmetryReport,
    check_symmetry,
    crd_moment3,
    crd_moment4,
    design_from_spec,
)
from .estimators import (
    BaselineInfo,
    EstimatorConstructionError,
    WeightedLinearEstimator,
    aie_adjusted,
    ate_adjusted,
    ate_ht,
    difference_in_means,
    estimate,
    estimate_batch,
    estimator_from_spec,
    find_unbiased_weights,
    ht_sutva,
    tte_adjusted,
    tte_adjusted_simple,
    tte_ht,
)
from .montecarlo import McConfig, McResult, run_mc
from .network import InterferenceGraph, Partition, degree_stats, generate_clustered, generate_erdos_renyi
from .oracle import ExactMoments, exact_design_moment, exact_estimator_moments
from .outcomes import (
    ContagionModel,
    HaneModel,
    evaluate,
    evaluate_batch,
    from_contagion,
    random_model,
    true_aie,
    true_ate,
    true_tte,
)

__all__ = [
    "__version__",
    "BaselineInfo",
    "Bernoulli",
    "CRD",
    "ClusterRD",
    "ContagionModel",
    "Design",
    "EstimatorConstructionError",
    "ExactLaw",
    "ExactMoments",
    "HaneModel",
    "InfluenceProfile",
    "InterferenceGraph",
    "LHDecomposition",
    "McConfig",
    "McResult",
    "Partition",
    "SaturationRD",
    "SupportTooLarge",
    "SymmetryReport",
    "WeightedLinearEstimator",
    "aie_adjusted",
    "analytical_moments",
    "ate_adjusted",
    "ate_ht",
    "bias_tte_adjusted",
    "bias_tte_ht",
    "check_symmetry",
    "cluster_influence",
    "crd_moment3",
    "crd_moment4",
    "degree_stats",
    "design_from_spec",
    "difference_in_means",
    "estimate",
    "estimate_batch",
    "estimator_from_spec",
    "evaluate",
    "evaluate_batch",
    "exact_design_moment",
    "exact_estimator_moments",
    "expected_estimate",
    "find_unbiased_weights",
    "from_contagion",
    "generate_clustered",
    "generate_erdos_renyi",
    "ht_sutva",
    "influence",
    "lh_decompose",
    "random_model",
    "run_mc",
    "true_aie",
    "true_ate",
    "true_tte",
    "tte_adjusted",
    "tte_adjusted_simple",
    "tte_ht",
    "var_general_bernoulli",
    "var_general_cluster",
    "var_general_crd",
    "var_general_stratified",
    "var_tte_adjusted_cluster",
    "var_tte_adjusted_crd",
    "var_tte_adjusted_saturation",
]
