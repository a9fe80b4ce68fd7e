"""Scene bundles: on-disk format, superpixels, overlap caching and synthetic scenes."""

from .format import SceneBundle, load_bundle, read_raster, save_bundle, write_raster
from .overlaps import (
    DEFAULT_MIN_RELATIVE_SIZE,
    OverlapCache,
    get_overlaps,
    load_overlap_cache,
    precompute_overlaps,
    save_overlap_cache,
)
from .superpixels import DEFAULT_SUPERPIXELS, SuperpixelMap, grid_superpixels
from .synth import InjectSpec, PlaneSpec, SynthSpec, SyntheticProvider, synth_scene

__all__ = [
    "DEFAULT_MIN_RELATIVE_SIZE",
    "DEFAULT_SUPERPIXELS",
    "InjectSpec",
    "OverlapCache",
    "PlaneSpec",
    "SceneBundle",
    "SuperpixelMap",
    "SynthSpec",
    "SyntheticProvider",
    "get_overlaps",
    "grid_superpixels",
    "load_bundle",
    "load_overlap_cache",
    "precompute_overlaps",
    "read_raster",
    "save_bundle",
    "save_overlap_cache",
    "synth_scene",
    "write_raster",
]
