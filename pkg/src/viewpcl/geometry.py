"""Pinhole cameras, depth-aware cross-projection and superpixel overlap regions.

Conventions:
    * pixels are addressed as ``(row, col)``; the pixel center sits at
      ``u = col + 0.5, v = row + 0.5``.
    * poses are camera-to-world: ``X_world = R @ X_cam + t``.
    * a depth of 0 marks an invalid pixel; it never produces or receives
      correspondences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import InvalidDepth, OutOfBounds

DEFAULT_DEPTH_TOLERANCE = 0.03

_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (np.isfinite(self.cx) and np.isfinite(self.cy)):
            raise ValueError("principal point must be finite")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid camera-to-world transform."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        trans = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.allclose(rot.T @ rot, np.eye(3), rtol=0.0, atol=_ORTHO_TOL):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation must have determinant +1")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix) -> "Pose":
        m = np.asarray(matrix, dtype=np.float64).reshape(4, 4)
        return cls(m[:3, :3], m[:3, 3])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def to_world(self, points_cam: np.ndarray) -> np.ndarray:
        return points_cam @ self.rotation.T + self.translation

    def to_camera(self, points_world: np.ndarray) -> np.ndarray:
        return (points_world - self.translation) @ self.rotation


@dataclass(frozen=True, eq=False)
class ViewRecord:
    """A posed view with its depth raster (height x width, 0 = invalid)."""

    view_id: int
    intrinsics: Intrinsics
    pose: Pose
    depth: np.ndarray

    def __post_init__(self):
        depth = np.asarray(self.depth, dtype=np.float64)
        if depth.ndim != 2:
            raise ValueError(f"depth must be 2-D, got shape {depth.shape}")
        depth = np.where(np.isfinite(depth) & (depth > 0), depth, 0.0)
        depth.setflags(write=False)
        object.__setattr__(self, "depth", depth)

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape

    @property
    def valid(self) -> np.ndarray:
        return self.depth > 0


class PixelCorrespondence(NamedTuple):
    target_pixel: tuple[int, int]
    source_pixel: tuple[int, int]


@dataclass(frozen=True, eq=False)
class Correspondences:
    """Array-backed list of pixel correspondences from ``source_view`` into ``target_view``.

    Rows are ordered by target pixel (row-major); each target pixel appears at most once.
    """

    source_view: int
    target_view: int
    target: np.ndarray  # (N, 2) int, (row, col) in the target view
    source: np.ndarray  # (N, 2) int, (row, col) in the source view
    projected_depth: np.ndarray  # (N,) camera-frame depth in the target view

    def __len__(self) -> int:
        return len(self.target)

    def __iter__(self) -> Iterator[PixelCorrespondence]:
        for t, s in zip(self.target.tolist(), self.source.tolist()):
            yield PixelCorrespondence(tuple(t), tuple(s))


@dataclass(frozen=True, eq=False)
class OverlapRegion:
    """Intersection D of superpixel R (target view) with the cross-projection of a source view."""

    target_view: int
    source_view: int
    superpixel_id: int
    target_pixels: np.ndarray  # (|D|, 2)
    source_pixels: np.ndarray  # (|D|, 2)
    superpixel_size: int

    @property
    def size(self) -> int:
        return len(self.target_pixels)

    @property
    def relative_size(self) -> float:
        return self.size / self.superpixel_size

    @property
    def correspondences(self) -> list[PixelCorrespondence]:
        return [
            PixelCorrespondence(tuple(t), tuple(s))
            for t, s in zip(self.target_pixels.tolist(), self.source_pixels.tolist())
        ]


def _check_pixel(pixel, view: ViewRecord) -> tuple[int, int]:
    row, col = (int(x) for x in pixel)
    if not (0 <= row < view.height and 0 <= col < view.width):
        raise OutOfBounds(f"pixel {(row, col)} outside {view.height}x{view.width} raster")
    return row, col


def unproject(u, v, depth, intrinsics: Intrinsics, pose: Pose) -> np.ndarray:
    """World point ``pose(d * K^-1 [u, v, 1])`` for continuous image coordinates."""
    u, v, d = (np.asarray(x, dtype=np.float64) for x in (u, v, depth))
    k = intrinsics
    cam = np.stack(np.broadcast_arrays(d * (u - k.cx) / k.fx, d * (v - k.cy) / k.fy, d), axis=-1)
    return pose.to_world(cam)


def back_project_pixels(rows, cols, view: ViewRecord) -> np.ndarray:
    """World points for arrays of pixels; depth is taken as-is (callers filter invalid)."""
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    return unproject(cols + 0.5, rows + 0.5, view.depth[rows, cols], view.intrinsics, view.pose)


def project_points(points: np.ndarray, view: ViewRecord):
    """Project world points into ``view``.

    Returns:
        ``(rows, cols, depth, inside)``; rows/cols are only meaningful where
        ``inside`` is True.
    """
    cam = view.pose.to_camera(np.atleast_2d(np.asarray(points, dtype=np.float64)))
    z = cam[:, 2]
    k = view.intrinsics
    in_front = z > 0
    safe_z = np.where(in_front, z, 1.0)
    u = k.fx * cam[:, 0] / safe_z + k.cx
    v = k.fy * cam[:, 1] / safe_z + k.cy
    inside = in_front & (u >= 0) & (u < view.width) & (v >= 0) & (v < view.height)
    cols = np.floor(np.where(inside, u, 0.0)).astype(np.int64)
    rows = np.floor(np.where(inside, v, 0.0)).astype(np.int64)
    # guard against u == width after rounding in floor
    cols = np.minimum(cols, view.width - 1)
    rows = np.minimum(rows, view.height - 1)
    return rows, cols, z, inside


def back_project(pixel, view: ViewRecord) -> np.ndarray:
    """World point seen at the center of ``pixel``."""
    row, col = _check_pixel(pixel, view)
    if view.depth[row, col] <= 0:
        raise InvalidDepth(f"pixel {(row, col)} of view {view.view_id} has no depth")
    return back_project_pixels(np.array([row]), np.array([col]), view)[0]


def project(world_point, view: ViewRecord):
    """Containing pixel and camera depth of a world point, or ``None`` when outside."""
    rows, cols, z, inside = project_points(np.asarray(world_point, dtype=np.float64), view)
    if not inside[0]:
        return None
    return (int(rows[0]), int(cols[0])), float(z[0])


def cross_project(
    source: ViewRecord,
    target: ViewRecord,
    depth_tolerance: float = DEFAULT_DEPTH_TOLERANCE,
) -> Correspondences:
    """Map every valid source pixel into ``target`` and keep the depth-consistent ones.

    A correspondence survives iff the projected depth agrees with the target's
    own depth within ``depth_tolerance`` (relative to the target depth). When
    several source pixels land on one target pixel the front-most wins, ties
    broken by (source row, source col).
    """
    if not depth_tolerance > 0:
        raise ValueError("depth_tolerance must be positive")
    src_rows, src_cols = np.nonzero(source.valid)
    points = back_project_pixels(src_rows, src_cols, source)
    rows, cols, z, inside = project_points(points, target)

    target_depth = np.where(inside, target.depth[rows, cols], 0.0)
    keep = inside & (target_depth > 0)
    keep &= np.abs(z - target_depth) <= depth_tolerance * target_depth

    src_rows, src_cols = src_rows[keep], src_cols[keep]
    rows, cols, z = rows[keep], cols[keep], z[keep]
    flat = rows * target.width + cols
    order = np.lexsort((src_cols, src_rows, z, flat))
    flat_sorted = flat[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = flat_sorted[1:] != flat_sorted[:-1]
    order = order[first]

    return Correspondences(
        source_view=source.view_id,
        target_view=target.view_id,
        target=np.stack([rows[order], cols[order]], axis=1),
        source=np.stack([src_rows[order], src_cols[order]], axis=1),
        projected_depth=z[order],
    )


def pairwise_cross_projections(
    views: Sequence[ViewRecord], depth_tolerance: float = DEFAULT_DEPTH_TOLERANCE
) -> dict[tuple[int, int], Correspondences]:
    """All ``(source_id, target_id) -> Correspondences`` for distinct view pairs."""
    return {
        (src.view_id, tgt.view_id): cross_project(src, tgt, depth_tolerance)
        for tgt in views
        for src in views
        if src.view_id != tgt.view_id
    }


def pixels_from_mask(mask: np.ndarray) -> np.ndarray:
    return np.argwhere(mask)


def overlap_regions(
    superpixel,
    target: ViewRecord,
    views: Sequence[ViewRecord],
    min_relative_size: float,
    depth_tolerance: float = DEFAULT_DEPTH_TOLERANCE,
    superpixel_id: int = 0,
    projections: dict[tuple[int, int], Correspondences] | None = None,
) -> list[OverlapRegion]:
    """Overlap regions of one superpixel R of ``target`` with every other view.

    Args:
        superpixel: boolean mask over the target raster, or an ``(N, 2)`` array
            of ``(row, col)`` pixels.
        min_relative_size: a region is kept iff ``|D| / |R| >= min_relative_size``.
        projections: optional precomputed output of ``pairwise_cross_projections``.
    """
    if not 0 < min_relative_size <= 1:
        raise ValueError("min_relative_size must lie in (0, 1]")
    mask = np.asarray(superpixel)
    if mask.dtype != bool:
        pixels = mask.reshape(-1, 2).astype(np.int64)
        mask = np.zeros(target.shape, dtype=bool)
        mask[pixels[:, 0], pixels[:, 1]] = True
    size = int(mask.sum())
    if size == 0:
        raise ValueError("superpixel is empty")

    regions = []
    for src in views:
        if src.view_id == target.view_id:
            continue
        if projections is not None:
            corr = projections[(src.view_id, target.view_id)]
        else:
            corr = cross_project(src, target, depth_tolerance)
        hit = mask[corr.target[:, 0], corr.target[:, 1]]
        n = int(hit.sum())
        if n and n / size >= min_relative_size:
            regions.append(
                OverlapRegion(
                    target_view=target.view_id,
                    source_view=src.view_id,
                    superpixel_id=superpixel_id,
                    target_pixels=corr.target[hit],
                    source_pixels=corr.source[hit],
                    superpixel_size=size,
                )
            )
    return regions


def view_overlap_regions(
    target: ViewRecord,
    labels: np.ndarray,
    views: Sequence[ViewRecord],
    min_relative_size: float,
    projections: dict[tuple[int, int], Correspondences],
) -> dict[int, list[OverlapRegion]]:
    """``overlap_regions`` for every superpixel of ``labels`` at once."""
    if not 0 < min_relative_size <= 1:
        raise ValueError("min_relative_size must lie in (0, 1]")
    num = int(labels.max()) + 1
    sizes = np.bincount(labels.ravel(), minlength=num)
    out: dict[int, list[OverlapRegion]] = {k: [] for k in range(num)}
    for src in views:
        if src.view_id == target.view_id:
            continue
        corr = projections[(src.view_id, target.view_id)]
        sp = labels[corr.target[:, 0], corr.target[:, 1]]
        order = np.argsort(sp, kind="stable")
        sp_sorted = sp[order]
        bounds = np.searchsorted(sp_sorted, np.arange(num + 1))
        for k in range(num):
            lo, hi = bounds[k], bounds[k + 1]
            n = hi - lo
            if n and n / sizes[k] >= min_relative_size:
                idx = order[lo:hi]
                out[k].append(
                    OverlapRegion(
                        target_view=target.view_id,
                        source_view=src.view_id,
                        superpixel_id=k,
                        target_pixels=corr.target[idx],
                        source_pixels=corr.source[idx],
                        superpixel_size=int(sizes[k]),
                    )
                )
    return out


@dataclass
class OverlapIndex:
    """Relative overlap between superpixels of different views.

    ``fractions[(i, R)][(j, S)]`` is ``|D| / |R|`` where D is the part of
    superpixel R (view i) hit by the cross-projection of superpixel S (view j).
    ``sizes[(i, R)]`` is the pixel count of R.
    """

    fractions: dict[tuple[int, int], dict[tuple[int, int], float]] = field(default_factory=dict)
    sizes: dict[tuple[int, int], int] = field(default_factory=dict)

    def members(self, key: tuple[int, int], threshold: float) -> list[tuple[int, int]]:
        """Superpixels whose cross-projection covers more than ``threshold`` of ``key``."""
        return [k for k, f in self.fractions.get(key, {}).items() if f > threshold]


def build_overlap_index(
    views: Sequence[ViewRecord],
    labels_by_view: dict[int, np.ndarray],
    projections: dict[tuple[int, int], Correspondences],
) -> OverlapIndex:
    index = OverlapIndex()
    for tgt in views:
        t_labels = labels_by_view[tgt.view_id]
        sizes = np.bincount(t_labels.ravel())
        for k in range(len(sizes)):
            index.fractions[(tgt.view_id, k)] = {}
            index.sizes[(tgt.view_id, k)] = int(sizes[k])
        for src in views:
            if src.view_id == tgt.view_id:
                continue
            corr = projections[(src.view_id, tgt.view_id)]
            if not len(corr):
                continue
            s_labels = labels_by_view[src.view_id]
            r = t_labels[corr.target[:, 0], corr.target[:, 1]].astype(np.int64)
            s = s_labels[corr.source[:, 0], corr.source[:, 1]].astype(np.int64)
            n_src = int(s_labels.max()) + 1
            pairs, counts = np.unique(r * n_src + s, return_counts=True)
            for pair, count in zip(pairs.tolist(), counts.tolist()):
                rk, sk = divmod(pair, n_src)
                index.fractions[(tgt.view_id, rk)][(src.view_id, sk)] = count / sizes[rk]
    return index
