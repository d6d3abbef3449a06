"""Analytic diffusion denoisers, linear distillation, and diagnostics.

Everything operates on plain numpy arrays at desk scale. See the module
docstrings for the individual subsystems: dataset statistics, closed-form
and trainable denoisers, probability-flow sampling with its Gaussian oracle,
linear distillation, diagnostic metrics, and Jacobian analysis.
"""

from .dataset import (
    DataMatrix,
    GaussianStats,
    empirical_stats,
    load_dataset,
    read_raw_f64,
    split_dataset,
    write_raw_f64,
)
from .denoisers import (
    AffineDenoiser,
    Denoiser,
    GaussianDenoiser,
    MultiDeltaDenoiser,
    PerLevelDenoiser,
    affine_denoise,
    denoiser_to_score,
    gaussian_denoise,
    multi_delta_denoise,
    score_batch,
)
from .distillation import (
    DistillConfig,
    closed_form_linear,
    distill_linear,
    load_affine,
    orthogonality_residual,
    save_affine,
    train_linear_dsm,
)
from .jacobian import (
    JacobianReport,
    jacobian_fd,
    jacobian_report,
    jacobian_svd,
    perturb_and_resample,
)
from .metrics import (
    MetricSeries,
    MetricValue,
    gl_score,
    linearity_score,
    metric_sweep,
    score_diff,
    singular_vector_correlation,
    weight_nmse,
)
from .plugin import ExternalDenoiser, external_denoise, serve_plugin
from .sampler import (
    SigmaSchedule,
    Trajectory,
    edm_schedule,
    gaussian_trajectory,
    ode_sample,
)
from .toytrainer import (
    ToyDenoiser,
    TrainResult,
    grad_check,
    init_toy,
    load_toy,
    save_toy,
    train_toy,
)

__version__ = "0.1.0"

__all__ = [
    "AffineDenoiser",
    "DataMatrix",
    "Denoiser",
    "DistillConfig",
    "ExternalDenoiser",
    "GaussianDenoiser",
    "GaussianStats",
    "JacobianReport",
    "MetricSeries",
    "MetricValue",
    "MultiDeltaDenoiser",
    "PerLevelDenoiser",
    "SigmaSchedule",
    "ToyDenoiser",
    "TrainResult",
    "Trajectory",
    "affine_denoise",
    "closed_form_linear",
    "denoiser_to_score",
    "distill_linear",
    "edm_schedule",
    "empirical_stats",
    "external_denoise",
    "gaussian_denoise",
    "gaussian_trajectory",
    "gl_score",
    "grad_check",
    "init_toy",
    "jacobian_fd",
    "jacobian_report",
    "jacobian_svd",
    "linearity_score",
    "load_affine",
    "load_dataset",
    "load_toy",
    "metric_sweep",
    "multi_delta_denoise",
    "ode_sample",
    "orthogonality_residual",
    "perturb_and_resample",
    "read_raw_f64",
    "save_affine",
    "save_toy",
    "score_batch",
    "score_diff",
    "serve_plugin",
    "singular_vector_correlation",
    "split_dataset",
    "train_linear_dsm",
    "train_toy",
    "weight_nmse",
    "write_raw_f64",
]
