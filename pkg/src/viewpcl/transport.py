"""Transport discrepancies between point-cloud distributions on pixel coordinates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.spatial.distance import cdist

from .errors import BothAbsent, InfeasibleMarginals
from .probability import PointCloudDistribution

MARGINAL_TOLERANCE = 1e-6


@dataclass(frozen=True)
class TransportConfig:
    order: float = 1.0
    num_projections: int = 64
    rng_seed: int = 0
    exact_cutoff: int = 32

    def __post_init__(self):
        if not self.order >= 1:
            raise ValueError("order must be >= 1")
        if self.num_projections < 1:
            raise ValueError("num_projections must be >= 1")
        if self.exact_cutoff < 0:
            raise ValueError("exact_cutoff must be >= 0")


@dataclass(frozen=True, eq=False)
class TransportPlan:
    pi: np.ndarray  # (m, n)
    source: PointCloudDistribution
    target: PointCloudDistribution


def _balanced_weights(mu: PointCloudDistribution, nu: PointCloudDistribution):
    if len(mu) == 0 or len(nu) == 0:
        raise InfeasibleMarginals("distributions must be nonempty")
    sa, sb = mu.weights.sum(), nu.weights.sum()
    if abs(sa - sb) > MARGINAL_TOLERANCE or abs(sa - 1.0) > MARGINAL_TOLERANCE:
        raise InfeasibleMarginals(f"weight sums {sa!r} and {sb!r} do not match")
    return mu.weights / sa, nu.weights / sb


def exact_wasserstein(
    mu: PointCloudDistribution, nu: PointCloudDistribution, cfg: TransportConfig = TransportConfig()
) -> tuple[float, TransportPlan]:
    """Exact ``W_p`` via the transportation linear program (HiGHS dual simplex)."""
    a, b = _balanced_weights(mu, nu)
    m, n = len(a), len(b)
    cost = cdist(mu.points, nu.points) ** cfg.order

    # marginal constraints on the row-major flattened plan
    a_eq = np.zeros((m + n, m * n))
    for i in range(m):
        a_eq[i, i * n : (i + 1) * n] = 1.0
    for j in range(n):
        a_eq[m + j, j::n] = 1.0
    res = linprog(
        cost.ravel(),
        A_eq=a_eq,
        b_eq=np.concatenate([a, b]),
        bounds=(0, None),
        method="highs-ds",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise InfeasibleMarginals(f"transport LP failed: {res.message}")
    pi = np.maximum(res.x.reshape(m, n), 0.0)
    value = float((pi * cost).sum())
    return max(value, 0.0) ** (1.0 / cfg.order), TransportPlan(pi, mu, nu)


def projection_directions(num: int, seed: int) -> np.ndarray:
    """``num`` unit vectors at angles uniform on [0, pi), from a Philox stream."""
    rng = np.random.Generator(np.random.Philox(seed))
    alpha = rng.uniform(0.0, np.pi, size=num)
    return np.stack([np.cos(alpha), np.sin(alpha)], axis=1)


def wasserstein_1d_batch(x: np.ndarray, a: np.ndarray, y: np.ndarray, b: np.ndarray, p: float = 1.0) -> np.ndarray:
    """``W_p^p`` on the line for each column of ``x`` (m, L) against ``y`` (n, L).

    Exact quantile coupling: the merged cumulative weights of both sides cut
    [0, 1] into intervals on which both quantile functions are constant.
    """
    m, n = x.shape[0], y.shape[0]
    ix = np.argsort(x, axis=0, kind="stable")
    iy = np.argsort(y, axis=0, kind="stable")
    xs = np.take_along_axis(x, ix, axis=0)
    ys = np.take_along_axis(y, iy, axis=0)
    ca = np.cumsum(a[ix], axis=0)
    cb = np.cumsum(b[iy], axis=0)
    ca[-1] = 1.0
    cb[-1] = 1.0
    merged = np.concatenate([ca, cb], axis=0)
    order = np.argsort(merged, axis=0, kind="stable")
    levels = np.take_along_axis(merged, order, axis=0)
    from_a = order < m
    # quantile index on each side = number of that side's levels strictly before;
    # a b-level tied with an earlier a-level gets an interval of zero width
    ia = np.minimum(np.cumsum(from_a, axis=0) - from_a, m - 1)
    ib = np.minimum(np.cumsum(~from_a, axis=0) - ~from_a, n - 1)
    widths = np.diff(levels, axis=0, prepend=0.0)
    qx = np.take_along_axis(xs, ia, axis=0)
    qy = np.take_along_axis(ys, ib, axis=0)
    return np.sum(widths * np.abs(qx - qy) ** p, axis=0)


def wasserstein_1d(x: np.ndarray, a: np.ndarray, y: np.ndarray, b: np.ndarray, p: float = 1.0) -> float:
    """``W_p^p`` between weighted samples on the line."""
    x = np.asarray(x, dtype=np.float64).reshape(-1, 1)
    y = np.asarray(y, dtype=np.float64).reshape(-1, 1)
    return float(wasserstein_1d_batch(x, np.asarray(a, float), y, np.asarray(b, float), p)[0])


def sliced_wasserstein(
    mu: PointCloudDistribution,
    nu: PointCloudDistribution,
    cfg: TransportConfig = TransportConfig(),
    directions: np.ndarray | None = None,
) -> float:
    """Sliced ``SW_p``: mean of 1-D ``W_p^p`` over projection directions, then the p-th root.

    ``directions`` overrides the seeded random directions (rows are unit vectors).
    """
    a, b = _balanced_weights(mu, nu)
    if directions is None:
        directions = projection_directions(cfg.num_projections, cfg.rng_seed)
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    per_direction = wasserstein_1d_batch(mu.points @ directions.T, a, nu.points @ directions.T, b, cfg.order)
    return float(per_direction.mean()) ** (1.0 / cfg.order)


def bounding_box(region) -> tuple[np.ndarray, np.ndarray]:
    pts = np.asarray(region, dtype=np.float64).reshape(-1, 2)
    return pts.min(axis=0), pts.max(axis=0)


def escape_cost(mu: PointCloudDistribution, region, cfg: TransportConfig = TransportConfig()) -> float:
    """Cost of moving every atom of ``mu`` to the nearest point on the boundary of
    the axis-aligned bounding box of ``region``: ``(sum_z w_z d(z, b(z))^p)^(1/p)``."""
    lo, hi = bounding_box(region)
    pts = mu.points
    inside = np.all((pts >= lo) & (pts <= hi), axis=1)
    to_side = np.minimum(pts - lo, hi - pts).min(axis=1)
    outside_gap = np.linalg.norm(np.maximum(np.maximum(lo - pts, pts - hi), 0.0), axis=1)
    dist = np.where(inside, to_side, outside_gap)
    return float(np.sum(mu.weights * dist**cfg.order)) ** (1.0 / cfg.order)


def dissimilarity(
    mu1: PointCloudDistribution | None,
    mu2: PointCloudDistribution | None,
    region,
    cfg: TransportConfig = TransportConfig(),
) -> float:
    """Transport discrepancy with absent-side routing.

    Both present: exact solver when both supports have at most
    ``cfg.exact_cutoff`` atoms, sliced otherwise. One side absent: escape cost
    of the present side.
    """
    if mu1 is None and mu2 is None:
        raise BothAbsent("both point clouds are absent")
    if mu2 is None:
        return escape_cost(mu1, region, cfg)
    if mu1 is None:
        return escape_cost(mu2, region, cfg)
    if len(mu1) <= cfg.exact_cutoff and len(mu2) <= cfg.exact_cutoff:
        return exact_wasserstein(mu1, mu2, cfg)[0]
    return sliced_wasserstein(mu1, mu2, cfg)
