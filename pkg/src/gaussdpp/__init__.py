"""Gaussian determinantal point processes.

Simulation on box windows, scattering-matrix estimation from a single
realization, spiked-model detection and spike-direction recovery, and
DPP-based dimension reduction with a PCA baseline and ROC evaluation.
"""

from .kernel import (ScatteringMatrix, isotropic_scattering, kernel_value,
                     normalize_scattering, rho_k, spectral_density,
                     spiked_scattering, truncated_pair_correlation)
from .patterns import (BallWindow, BoxWindow, PointPattern, extract_ball,
                       load_pattern, save_pattern)
from .sampling import (SpectralBasis, build_spectral_basis,
                       count_dispersion_test, empirical_pair_correlation,
                       sample_gdp, sample_gdp_ensemble, sample_poisson)
from .estimator import (EstimateResult, EstimatorConfig, NeighborIndex,
                        bernstein_tail, bias_bound, build_neighborhoods,
                        count_expectation, default_cutoff, estimate_scattering,
                        risk_rate, unit_ball_volume, variance_bound)
from .spiked import (DetectionResult, NullCalibration, SpikeEstimate,
                     calibrate_null_threshold, davis_kahan_reference,
                     detection_test, detection_test_calibrated, estimate_spike,
                     operator_norm, sin_angle)
from .dimred import (Dataset, ProjectionResult, RocCurve, dpp_embed,
                     pca_embed, risk_scores, roc_auc, scree)
from .datasets import load_dataset

__version__ = "0.1.0"

__all__ = [
    "ScatteringMatrix", "isotropic_scattering", "kernel_value",
    "normalize_scattering", "rho_k", "spectral_density", "spiked_scattering",
    "truncated_pair_correlation",
    "BallWindow", "BoxWindow", "PointPattern", "extract_ball", "load_pattern",
    "save_pattern",
    "SpectralBasis", "build_spectral_basis", "count_dispersion_test",
    "empirical_pair_correlation", "sample_gdp", "sample_gdp_ensemble",
    "sample_poisson",
    "EstimateResult", "EstimatorConfig", "NeighborIndex", "bernstein_tail",
    "bias_bound", "build_neighborhoods", "count_expectation", "default_cutoff",
    "estimate_scattering", "risk_rate", "unit_ball_volume", "variance_bound",
    "DetectionResult", "NullCalibration", "SpikeEstimate",
    "calibrate_null_threshold", "davis_kahan_reference", "detection_test",
    "detection_test_calibrated", "estimate_spike", "operator_norm", "sin_angle",
    "Dataset", "ProjectionResult", "RocCurve", "dpp_embed", "pca_embed",
    "risk_scores", "roc_auc", "scree",
    "load_dataset",
    "__version__",
]
