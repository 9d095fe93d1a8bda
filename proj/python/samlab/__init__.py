"""samlab: sharpness-aware minimization, gradient attacks and the closed-form
robust-feature analysis of a synthetic Gaussian classification model."""

from ._core import (
    ConfigError,
    adv_accuracy,
    clean_accuracy,
    eps_at_equivalent,
    estimate_wr,
    pgd_linear,
    phi,
    robust_accuracy_checkpoint,
    run,
    sample_feature_model,
    sample_mixture2d,
    theory_report,
    wr_at,
    wr_sam_approx,
    wr_sam_numeric,
    wr_standard,
)

__all__ = [
    "ConfigError",
    "adv_accuracy",
    "clean_accuracy",
    "eps_at_equivalent",
    "estimate_wr",
    "pgd_linear",
    "phi",
    "robust_accuracy_checkpoint",
    "run",
    "sample_feature_model",
    "sample_mixture2d",
    "theory_report",
    "wr_at",
    "wr_sam_approx",
    "wr_sam_numeric",
    "wr_standard",
]
