"""Doubly robust estimators for extending cluster randomized trials."""

from ._core import (
    ClusterdrError,
    Dataset,
    NuisanceEstimates,
    PointEstimate,
    __version__,
    aipw,
    cluster_robust_trial_interval,
    contrast,
    estimate,
    fit_nuisance_estimates,
    generate_dataset,
    gformula,
    influence_curve_interval,
    ipw,
    load_csv,
    make_dataset,
    make_nuisance_estimates,
    normal_quantile,
    oracle_truth,
    simulate,
    transport,
    trial_only,
)

__all__ = [
    "ClusterdrError",
    "Dataset",
    "NuisanceEstimates",
    "PointEstimate",
    "__version__",
    "aipw",
    "cluster_robust_trial_interval",
    "contrast",
    "estimate",
    "fit_nuisance_estimates",
    "generate_dataset",
    "gformula",
    "influence_curve_interval",
    "ipw",
    "load_csv",
    "make_dataset",
    "make_nuisance_estimates",
    "normal_quantile",
    "oracle_truth",
    "simulate",
    "transport",
    "trial_only",
]
