"""Sparse principal component estimation under spiked covariance models.

Estimators (ordinary, thresholded, and two-stage adaptive PCA), closed-form
risk and rate formulas, packing constructions behind the minimax lower
bounds, and a deterministic Monte Carlo harness.  The command-line tool
lives in ``spikedpca.cli``; figure rendering in ``spikedpca.figures`` (kept
out of this namespace so importing the library never touches matplotlib).
"""

from .estimators import (EstimationResult, EstimatorConfig, aspca,
                         estimate_noise_variance, estimate_rank,
                         hard_threshold, influence_operator, opca,
                         PerturbationExpansion, perturbation_expand,
                         sample_covariance, spca, sym_eigen)
from .metrics import alignment_loss, kl_gaussian, kl_spiked, sine_squared_loss
from .model import (Dataset, InfeasibleSpecError, LqSpaceSpec,
                    MembershipReport, RetryExhaustedError, SpikedCovariance,
                    build_covariance, load_model, make_sparse_basis,
                    membership_report, model_document, model_from_document,
                    sample_dataset, save_model)
from .packing import (InfeasibleRegimeError, PackingFamily, SignPacking,
                      SupportPacking, fano_bound, polar_sphere_family,
                      sign_vector_packing, single_coordinate_family,
                      support_packing, two_point_family)
from .rates import (C1_PACKING, RateBreakdown, RegimeClassification,
                    TailBound, aspca_rate, aspca_upper_bound,
                    condition_diagnostics, cross_component_floor,
                    minimax_rate, opca_risk, pair_separation, polar_radius,
                    shrinkage_factor, signal_strength, sphere_dim,
                    tail_bound, weighted_sparsity, wishart_norm_offset)
from .serialize import canonical_json, config_sha256, csv_text, dump_json
from .simulate import (RISK_COLUMNS, BracketReport, ConcentrationCheck,
                       EstimatorSpec, FirstOrderReport, ModelRecipe,
                       RiskReport, RiskRow,
                       SlopeFit, concentration_mc, first_order_validation,
                       rate_regression, replication_rng, run_risk_mc,
                       selection_bracketing)

__version__ = "0.1.0"

__all__ = [
    "EstimationResult", "EstimatorConfig", "aspca", "estimate_noise_variance",
    "estimate_rank", "hard_threshold", "influence_operator", "opca",
    "PerturbationExpansion", "perturbation_expand", "sample_covariance",
    "spca", "sym_eigen",
    "alignment_loss", "kl_gaussian", "kl_spiked", "sine_squared_loss",
    "Dataset", "InfeasibleSpecError", "LqSpaceSpec", "MembershipReport",
    "RetryExhaustedError", "SpikedCovariance", "build_covariance",
    "load_model", "make_sparse_basis", "membership_report", "model_document",
    "model_from_document", "sample_dataset", "save_model",
    "InfeasibleRegimeError", "PackingFamily", "SignPacking", "SupportPacking",
    "fano_bound", "polar_sphere_family", "sign_vector_packing",
    "single_coordinate_family", "support_packing", "two_point_family",
    "C1_PACKING", "RateBreakdown", "RegimeClassification", "TailBound",
    "aspca_rate", "aspca_upper_bound", "condition_diagnostics",
    "cross_component_floor", "minimax_rate", "opca_risk", "pair_separation",
    "polar_radius", "shrinkage_factor", "signal_strength", "sphere_dim",
    "tail_bound", "weighted_sparsity", "wishart_norm_offset",
    "canonical_json", "config_sha256", "csv_text", "dump_json",
    "BracketReport", "ConcentrationCheck", "EstimatorSpec",
    "FirstOrderReport", "ModelRecipe", "RISK_COLUMNS", "RiskReport",
    "RiskRow", "SlopeFit",
    "concentration_mc", "first_order_validation", "rate_regression",
    "replication_rng", "run_risk_mc", "selection_bracketing",
]
