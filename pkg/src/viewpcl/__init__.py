"""Active learning for multi-view semantic segmentation driven by optimal-transport
discrepancies between per-class point-cloud distributions."""

from .geometry import Intrinsics, Pose, ViewRecord, back_project, cross_project, overlap_regions, project
from .probability import (
    ClassProbabilityMap,
    PointCloudDistribution,
    RegionProbabilityFamily,
    induced_class_prob,
    mc_average,
    point_cloud_distribution,
    prune_and_renormalize,
    uniform_selection,
)
from .scoring import ScoreTable, ScoringConfig, SubregionScoreInput, subregion_score
from .selection import RoundConfig, run_active_learning, select_batch
from .transport import TransportConfig, dissimilarity, escape_cost, exact_wasserstein, sliced_wasserstein

__version__ = "0.1.0"

__all__ = [
    "ClassProbabilityMap",
    "Intrinsics",
    "PointCloudDistribution",
    "Pose",
    "RegionProbabilityFamily",
    "RoundConfig",
    "ScoreTable",
    "ScoringConfig",
    "SubregionScoreInput",
    "TransportConfig",
    "ViewRecord",
    "back_project",
    "cross_project",
    "dissimilarity",
    "escape_cost",
    "exact_wasserstein",
    "induced_class_prob",
    "mc_average",
    "overlap_regions",
    "point_cloud_distribution",
    "project",
    "prune_and_renormalize",
    "run_active_learning",
    "select_batch",
    "sliced_wasserstein",
    "subregion_score",
    "uniform_selection",
]
