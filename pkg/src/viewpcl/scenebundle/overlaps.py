"""Precomputation and on-disk caching of superpixel overlap regions."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..geometry import (
    DEFAULT_DEPTH_TOLERANCE,
    Correspondences,
    OverlapIndex,
    OverlapRegion,
    build_overlap_index,
    pairwise_cross_projections,
    view_overlap_regions,
)
from .format import SceneBundle

DEFAULT_MIN_RELATIVE_SIZE = 0.05
CACHE_DIR = "cache"

Key = tuple[int, int]


@dataclass(eq=False)
class OverlapCache:
    depth_tolerance: float
    min_relative_size: float
    projections: dict[tuple[int, int], Correspondences]
    regions: dict[Key, list[OverlapRegion]]
    index: OverlapIndex

    def num_regions(self) -> int:
        return sum(len(r) for r in self.regions.values())


def geometry_digest(bundle: SceneBundle) -> str:
    """Hash of everything the overlap computation depends on."""
    h = hashlib.sha256()
    for view in bundle.views:
        h.update(np.int64(view.view_id).tobytes())
        k = view.intrinsics
        h.update(np.array([k.fx, k.fy, k.cx, k.cy], dtype=np.float64).tobytes())
        h.update(view.pose.as_matrix().tobytes())
        h.update(np.ascontiguousarray(view.depth).tobytes())
        h.update(np.ascontiguousarray(bundle.superpixels[view.view_id].labels).tobytes())
    return h.hexdigest()


def cache_key(bundle: SceneBundle, depth_tolerance: float, min_relative_size: float) -> str:
    return f"tol{depth_tolerance!r}_min{min_relative_size!r}_{geometry_digest(bundle)[:16]}"


def precompute_overlaps(
    bundle: SceneBundle,
    depth_tolerance: float = DEFAULT_DEPTH_TOLERANCE,
    min_relative_size: float = DEFAULT_MIN_RELATIVE_SIZE,
) -> OverlapCache:
    bundle.require_superpixels()
    labels = bundle.label_rasters()
    projections = pairwise_cross_projections(bundle.views, depth_tolerance)
    regions: dict[Key, list[OverlapRegion]] = {}
    for view in bundle.views:
        per_sp = view_overlap_regions(view, labels[view.view_id], bundle.views, min_relative_size, projections)
        for k, regs in per_sp.items():
            regions[(view.view_id, k)] = regs
    index = build_overlap_index(bundle.views, labels, projections)
    return OverlapCache(depth_tolerance, min_relative_size, projections, regions, index)


def save_overlap_cache(cache: OverlapCache, bundle: SceneBundle, bundle_path) -> Path:
    arrays = {
        "depth_tolerance": np.float64(cache.depth_tolerance),
        "min_relative_size": np.float64(cache.min_relative_size),
    }
    pairs = sorted(cache.projections)
    arrays["pairs"] = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    for src, tgt in pairs:
        corr = cache.projections[(src, tgt)]
        arrays[f"proj_{src}_{tgt}_target"] = corr.target
        arrays[f"proj_{src}_{tgt}_source"] = corr.source
        arrays[f"proj_{src}_{tgt}_depth"] = corr.projected_depth
    meta, tgt_px, src_px = [], [], []
    for (vid, k), regs in sorted(cache.regions.items()):
        for r in regs:
            meta.append((vid, k, r.source_view, r.superpixel_size, r.size))
            tgt_px.append(r.target_pixels)
            src_px.append(r.source_pixels)
    arrays["region_meta"] = np.array(meta, dtype=np.int64).reshape(-1, 5)
    arrays["region_target"] = np.concatenate(tgt_px) if tgt_px else np.zeros((0, 2), np.int64)
    arrays["region_source"] = np.concatenate(src_px) if src_px else np.zeros((0, 2), np.int64)

    out = Path(bundle_path) / CACHE_DIR / f"overlaps_{cache_key(bundle, cache.depth_tolerance, cache.min_relative_size)}.npz"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "wb") as fh:
        np.savez(fh, **arrays)
    return out


def load_overlap_cache(
    bundle: SceneBundle, bundle_path, depth_tolerance: float, min_relative_size: float
) -> OverlapCache | None:
    """Cached overlaps for exactly these inputs, or None when absent or stale."""
    path = Path(bundle_path) / CACHE_DIR / f"overlaps_{cache_key(bundle, depth_tolerance, min_relative_size)}.npz"
    if not path.is_file():
        return None
    data = np.load(path)
    projections = {}
    for src, tgt in data["pairs"].tolist():
        projections[(src, tgt)] = Correspondences(
            src, tgt,
            data[f"proj_{src}_{tgt}_target"],
            data[f"proj_{src}_{tgt}_source"],
            data[f"proj_{src}_{tgt}_depth"],
        )
    regions: dict[Key, list[OverlapRegion]] = {key: [] for key in bundle.superpixel_keys()}
    offset = 0
    tgt_px, src_px = data["region_target"], data["region_source"]
    for vid, k, source_view, sp_size, n in data["region_meta"].tolist():
        regions[(vid, k)].append(
            OverlapRegion(vid, source_view, k, tgt_px[offset : offset + n], src_px[offset : offset + n], sp_size)
        )
        offset += n
    index = build_overlap_index(bundle.views, bundle.label_rasters(), projections)
    return OverlapCache(depth_tolerance, min_relative_size, projections, regions, index)


def get_overlaps(
    bundle: SceneBundle,
    bundle_path=None,
    depth_tolerance: float = DEFAULT_DEPTH_TOLERANCE,
    min_relative_size: float = DEFAULT_MIN_RELATIVE_SIZE,
) -> OverlapCache:
    """Load from the bundle's cache when possible, otherwise compute (and persist if a path is given)."""
    if bundle_path is not None:
        cached = load_overlap_cache(bundle, bundle_path, depth_tolerance, min_relative_size)
        if cached is not None:
            return cached
    cache = precompute_overlaps(bundle, depth_tolerance, min_relative_size)
    if bundle_path is not None:
        save_overlap_cache(cache, bundle, bundle_path)
    return cache
