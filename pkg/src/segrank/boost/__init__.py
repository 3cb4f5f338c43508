from .explain import (
    InteractionGrid,
    PartialDependence,
    additive_h,
    interaction_grid,
    partial_dependence,
    quantile_grid,
    spearman,
)
from .gbm import (
    GbmModel,
    GbmParams,
    Influence,
    RegressionTree,
    best_iteration_oob,
    gaussian_loss,
    gbm_fit,
    negative_gradient,
    relative_influence,
    smooth,
)

__all__ = [
    "GbmModel",
    "GbmParams",
    "Influence",
    "InteractionGrid",
    "PartialDependence",
    "RegressionTree",
    "additive_h",
    "best_iteration_oob",
    "gaussian_loss",
    "gbm_fit",
    "interaction_grid",
    "negative_gradient",
    "partial_dependence",
    "quantile_grid",
    "relative_influence",
    "smooth",
    "spearman",
]
