"""Class probability maps and the point-cloud distributions they induce on a region."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .errors import ClassAbsent, DimensionMismatch, EmptyRegion, RegionMismatch

DEFAULT_WEIGHT_THRESHOLD = 1e-3
SUM_TOLERANCE = 1e-5


@dataclass(frozen=True, eq=False)
class ClassProbabilityMap:
    """Per-pixel class probabilities of one view, ``probs`` has shape (H, W, C)."""

    view_id: int
    probs: np.ndarray

    def __post_init__(self):
        if np.asarray(self.probs).ndim != 3:
            raise DimensionMismatch(f"probs must be (H, W, C), got {np.shape(self.probs)}")

    @property
    def num_classes(self) -> int:
        return self.probs.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape[:2]

    def invalid_pixels(self, tol: float = SUM_TOLERANCE) -> np.ndarray:
        """``(row, col)`` of pixels violating the simplex constraints."""
        p = np.asarray(self.probs, dtype=np.float64)
        bad = (np.abs(p.sum(axis=2) - 1.0) > tol) | (p < 0).any(axis=2) | ~np.isfinite(p).all(axis=2)
        return np.argwhere(bad)


def mc_average(samples: Sequence[ClassProbabilityMap]) -> ClassProbabilityMap:
    """Mean over MC dropout runs, accumulated in float64."""
    if not samples:
        raise DimensionMismatch("need at least one MC sample")
    first = samples[0]
    acc = np.zeros(first.probs.shape, dtype=np.float64)
    for s in samples:
        if s.probs.shape != first.probs.shape:
            raise DimensionMismatch(
                f"MC sample shape {s.probs.shape} differs from {first.probs.shape}"
            )
        acc += s.probs
    return ClassProbabilityMap(first.view_id, acc / len(samples))


@dataclass(frozen=True, eq=False)
class RegionProbabilityFamily:
    """Family ``{P^z}`` over the ordered pixels of a region D."""

    region: np.ndarray  # (N, 2) pixels
    maps: np.ndarray  # (N, C)

    def __post_init__(self):
        region = np.asarray(self.region).reshape(-1, 2)
        maps = np.asarray(self.maps, dtype=np.float64)
        if maps.ndim != 2 or maps.shape[0] != region.shape[0]:
            raise DimensionMismatch(
                f"{region.shape[0]} region pixels but maps of shape {maps.shape}"
            )
        object.__setattr__(self, "region", region)
        object.__setattr__(self, "maps", maps)

    @classmethod
    def from_map(cls, prob_map: ClassProbabilityMap, pixels: np.ndarray) -> "RegionProbabilityFamily":
        pixels = np.asarray(pixels).reshape(-1, 2)
        return cls(pixels, prob_map.probs[pixels[:, 0], pixels[:, 1]])

    @property
    def num_classes(self) -> int:
        return self.maps.shape[1]


@dataclass(frozen=True, eq=False)
class SelectionDistribution:
    region: np.ndarray  # (N, 2)
    weights: np.ndarray  # (N,)


class SelectionRule(Protocol):
    """Builds a selection distribution q on a region; only the uniform rule ships."""

    def __call__(self, region: np.ndarray) -> SelectionDistribution: ...


@dataclass(frozen=True, eq=False)
class PointCloudDistribution:
    """Weighted atoms ``sum_z w_z delta_z`` over pixel coordinates, conditioned on ``class_id``."""

    points: np.ndarray  # (N, 2) float
    weights: np.ndarray  # (N,)
    class_id: int = -1

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if len(points) != len(weights):
            raise DimensionMismatch("points and weights differ in length")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return len(self.weights)

    @classmethod
    def from_atoms(cls, atoms, class_id: int = -1) -> "PointCloudDistribution":
        """Build from ``[(weight, (row, col)), ...]``."""
        weights = [w for w, _ in atoms]
        points = [p for _, p in atoms]
        return cls(np.array(points, dtype=np.float64), np.array(weights, dtype=np.float64), class_id)


def uniform_selection(region) -> SelectionDistribution:
    region = np.asarray(region).reshape(-1, 2)
    n = len(region)
    if n == 0:
        raise EmptyRegion("selection region is empty")
    weights = np.full(n, 1.0 / n)
    return SelectionDistribution(region, weights / weights.sum())


def _check_same_region(family: RegionProbabilityFamily, q: SelectionDistribution):
    if family.region.shape != q.region.shape or not np.array_equal(family.region, q.region):
        raise RegionMismatch("family and selection distribution are indexed by different pixels")


def induced_class_prob(family: RegionProbabilityFamily, q: SelectionDistribution) -> np.ndarray:
    """``p^q(c) = sum_z P^z(c) q(z)``."""
    _check_same_region(family, q)
    return q.weights @ family.maps


def point_cloud_distribution(
    family: RegionProbabilityFamily, q: SelectionDistribution, class_id: int
) -> PointCloudDistribution:
    """Posterior over region pixels given class ``class_id``: ``w_z = P^z(c) q(z) / p^q(c)``."""
    _check_same_region(family, q)
    joint = family.maps[:, class_id] * q.weights
    total = joint.sum()
    if not total > 0:
        raise ClassAbsent(class_id)
    return PointCloudDistribution(family.region.astype(np.float64), joint / total, class_id)


def prune_and_renormalize(
    mu: PointCloudDistribution, weight_threshold: float = DEFAULT_WEIGHT_THRESHOLD
) -> PointCloudDistribution:
    """Drop atoms lighter than ``weight_threshold`` and renormalize the rest.

    If nothing survives, the heaviest atom (first one on ties) is kept with weight 1.
    """
    if not 0 <= weight_threshold < 1:
        raise ValueError("weight_threshold must lie in [0, 1)")
    keep = mu.weights >= weight_threshold
    if keep.all():
        return mu
    if not keep.any():
        i = int(np.argmax(mu.weights))
        return PointCloudDistribution(mu.points[i : i + 1], np.ones(1), mu.class_id)
    w = mu.weights[keep]
    return PointCloudDistribution(mu.points[keep], w / w.sum(), mu.class_id)
