"""On-disk scene bundles.

Layout of a bundle directory::

    manifest.json
    depth/view_0000.f32            depth raster, 0 = invalid
    probs/view_0000_mc00.f32       one (H, W, C) raster per MC dropout run
    superpixels/view_0000.u16      superpixel ids (optional until generated)
    labels/view_0000.u16           ground-truth classes (optional)

Rasters are little-endian: an 8-byte magic (``VPCLF32\\0`` or ``VPCLU16\\0``),
then height, width and channels as uint32, then the row-major payload.
Poses in the manifest are 4x4 camera-to-world matrices, row-major.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DimensionMismatch, ManifestError, MissingFile, ValidationError
from ..geometry import Intrinsics, Pose, ViewRecord
from ..probability import SUM_TOLERANCE, ClassProbabilityMap, mc_average
from .superpixels import SuperpixelMap

FORMAT_NAME = "viewpcl-scene-bundle"
FORMAT_VERSION = 1
MAGIC_F32 = b"VPCLF32\x00"
MAGIC_U16 = b"VPCLU16\x00"
_HEADER = struct.Struct("<8sIII")


def write_raster(path: Path, array: np.ndarray) -> None:
    array = np.asarray(array)
    if array.dtype.kind == "f":
        magic, data = MAGIC_F32, array.astype("<f4")
    elif array.dtype.kind in "ui":
        if array.size and (array.min() < 0 or array.max() > 0xFFFF):
            raise ValueError("integer raster values must fit in uint16")
        magic, data = MAGIC_U16, array.astype("<u2")
    else:
        raise TypeError(f"unsupported raster dtype {array.dtype}")
    h, w = data.shape[:2]
    c = data.shape[2] if data.ndim == 3 else 1
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(magic, h, w, c))
        fh.write(np.ascontiguousarray(data).tobytes())


def read_raster(path: Path, view_id=None) -> np.ndarray:
    """Returns (H, W) for single-channel rasters, (H, W, C) otherwise."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(path, view_id)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ValidationError(f"{path}: truncated raster header")
    magic, h, w, c = _HEADER.unpack_from(raw)
    dtype = {MAGIC_F32: "<f4", MAGIC_U16: "<u2"}.get(magic)
    if dtype is None:
        raise ValidationError(f"{path}: bad raster magic {magic!r}")
    payload = np.frombuffer(raw, dtype=dtype, offset=_HEADER.size)
    if payload.size != h * w * c:
        raise DimensionMismatch(f"{path}: header says {h}x{w}x{c}, payload has {payload.size} values")
    arr = payload.reshape(h, w, c) if c > 1 else payload.reshape(h, w)
    return arr.copy()


@dataclass(eq=False)
class SceneBundle:
    views: list[ViewRecord]
    num_classes: int
    samples: dict[int, list[ClassProbabilityMap]]
    superpixels: dict[int, SuperpixelMap] = field(default_factory=dict)
    labels: dict[int, np.ndarray] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.views = sorted(self.views, key=lambda v: v.view_id)

    @property
    def view_ids(self) -> list[int]:
        return [v.view_id for v in self.views]

    def view(self, view_id: int) -> ViewRecord:
        for v in self.views:
            if v.view_id == view_id:
                return v
        raise KeyError(view_id)

    @property
    def num_mc_samples(self) -> int:
        return len(next(iter(self.samples.values()))) if self.samples else 0

    def averaged_maps(self) -> dict[int, ClassProbabilityMap]:
        return {v: mc_average(s) for v, s in self.samples.items()}

    def label_rasters(self) -> dict[int, np.ndarray]:
        self.require_superpixels()
        return {v: sp.labels for v, sp in self.superpixels.items()}

    def superpixel_sizes(self) -> dict[tuple[int, int], int]:
        self.require_superpixels()
        return {
            (v, k): int(n)
            for v, sp in sorted(self.superpixels.items())
            for k, n in enumerate(sp.counts)
        }

    def superpixel_keys(self) -> list[tuple[int, int]]:
        return sorted(self.superpixel_sizes())

    def image_pixels(self) -> float:
        return float(np.mean([v.width * v.height for v in self.views]))

    def require_superpixels(self) -> None:
        missing = [v for v in self.view_ids if v not in self.superpixels]
        if missing:
            raise ManifestError(f"views {missing} have no superpixel raster; run `viewpcl superpixels`")

    def validate(self) -> None:
        """Check every cross-file invariant; raises on the first violation."""
        ids = self.view_ids
        if len(set(ids)) != len(ids):
            raise ManifestError(f"duplicate view ids in {ids}")
        depth_of = {v.view_id: v for v in self.views}
        for vid, view in depth_of.items():
            shape = view.shape
            samples = self.samples.get(vid)
            if not samples:
                raise ManifestError(f"view {vid} has no probability samples")
            if len({len(s) for s in self.samples.values()}) != 1:
                raise ManifestError("views declare different numbers of MC samples")
            for d, s in enumerate(samples):
                if s.shape != shape or s.num_classes != self.num_classes:
                    raise DimensionMismatch(
                        f"view {vid} MC sample {d}: probs {s.probs.shape} vs depth {shape} "
                        f"and {self.num_classes} classes"
                    )
                bad = s.invalid_pixels(SUM_TOLERANCE)
                if len(bad):
                    r, c = (int(x) for x in bad[0])
                    total = float(np.asarray(s.probs[r, c], dtype=np.float64).sum())
                    err = ValidationError(
                        f"view {vid} MC sample {d}: pixel (row={r}, col={c}) is not a "
                        f"probability vector (sum {total:.6g}); {len(bad)} bad pixel(s)"
                    )
                    err.view_id, err.pixel = vid, (r, c)
                    raise err
            if vid in self.superpixels:
                sp = self.superpixels[vid]
                if sp.labels.shape != shape:
                    raise DimensionMismatch(f"view {vid}: superpixels {sp.labels.shape} vs depth {shape}")
                sp.check_partition()
            if vid in self.labels and self.labels[vid].shape != shape:
                raise DimensionMismatch(f"view {vid}: labels {self.labels[vid].shape} vs depth {shape}")


def _view_files(vid: int, mc: int) -> dict:
    stem = f"view_{vid:04d}"
    return {
        "depth": f"depth/{stem}.f32",
        "probs": [f"probs/{stem}_mc{d:02d}.f32" for d in range(mc)],
        "superpixels": f"superpixels/{stem}.u16",
        "labels": f"labels/{stem}.u16",
    }


def save_bundle(bundle: SceneBundle, path) -> Path:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for view in bundle.views:
        vid = view.view_id
        files = _view_files(vid, len(bundle.samples[vid]))
        write_raster(root / files["depth"], view.depth)
        for rel, s in zip(files["probs"], bundle.samples[vid]):
            write_raster(root / rel, s.probs)
        entry = {
            "id": vid,
            "width": view.width,
            "height": view.height,
            "intrinsics": {
                "fx": view.intrinsics.fx,
                "fy": view.intrinsics.fy,
                "cx": view.intrinsics.cx,
                "cy": view.intrinsics.cy,
            },
            "pose": view.pose.as_matrix().ravel().tolist(),
            "depth": files["depth"],
            "probs": files["probs"],
        }
        if vid in bundle.superpixels:
            write_raster(root / files["superpixels"], bundle.superpixels[vid].labels)
            entry["superpixels"] = files["superpixels"]
        if vid in bundle.labels:
            write_raster(root / files["labels"], bundle.labels[vid])
            entry["labels"] = files["labels"]
        entries.append(entry)
    manifest = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "pose_convention": "camera_to_world, 4x4 row-major",
        "pixel_convention": "(row, col); center at (col + 0.5, row + 0.5)",
        "num_classes": bundle.num_classes,
        "num_mc_samples": bundle.num_mc_samples,
        "views": entries,
        "metadata": bundle.metadata,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return root


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ManifestError(f"{where}: missing field '{key}'")
    return mapping[key]


def load_bundle(path, validate: bool = True) -> SceneBundle:
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise MissingFile(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{manifest_path}: invalid JSON ({exc})") from exc
    if manifest.get("format") != FORMAT_NAME:
        raise ManifestError(f"{manifest_path}: not a {FORMAT_NAME} manifest")
    num_classes = int(_require(manifest, "num_classes", "manifest"))
    declared_mc = manifest.get("num_mc_samples")

    views, samples, superpixels, labels = [], {}, {}, {}
    for i, entry in enumerate(_require(manifest, "views", "manifest")):
        where = f"manifest view #{i}"
        vid = int(_require(entry, "id", where))
        where = f"view {vid}"
        width, height = int(_require(entry, "width", where)), int(_require(entry, "height", where))
        try:
            intr = Intrinsics(**{k: float(v) for k, v in _require(entry, "intrinsics", where).items()})
            pose = Pose.from_matrix(_require(entry, "pose", where))
        except (TypeError, ValueError) as exc:
            raise ManifestError(f"{where}: {exc}") from exc

        def raster(rel):
            arr = read_raster(root / rel, vid)
            if arr.shape[:2] != (height, width):
                raise DimensionMismatch(
                    f"view {vid} file {rel}: raster {arr.shape[:2]} but manifest says {(height, width)}"
                )
            return arr

        views.append(ViewRecord(vid, intr, pose, raster(_require(entry, "depth", where))))
        prob_files = _require(entry, "probs", where)
        if declared_mc is not None and len(prob_files) != int(declared_mc):
            raise ManifestError(f"{where}: {len(prob_files)} MC rasters, manifest declares {declared_mc}")
        maps = []
        for rel in prob_files:
            arr = raster(rel)
            if arr.ndim == 2:
                arr = arr[..., None]
            if arr.shape[2] != num_classes:
                raise DimensionMismatch(f"view {vid} file {rel}: {arr.shape[2]} classes, expected {num_classes}")
            maps.append(ClassProbabilityMap(vid, arr))
        samples[vid] = maps
        if "superpixels" in entry:
            superpixels[vid] = SuperpixelMap(raster(entry["superpixels"]))
        if "labels" in entry:
            labels[vid] = raster(entry["labels"]).astype(np.int64)

    bundle = SceneBundle(views, num_classes, samples, superpixels, labels, manifest.get("metadata", {}))
    if validate:
        bundle.validate()
    return bundle


def write_superpixels(bundle: SceneBundle, path) -> None:
    """Persist the bundle's superpixel rasters and register them in the manifest."""
    root = Path(path)
    manifest = json.loads((root / "manifest.json").read_text())
    for entry in manifest["views"]:
        vid = int(entry["id"])
        rel = _view_files(vid, 0)["superpixels"]
        write_raster(root / rel, bundle.superpixels[vid].labels)
        entry["superpixels"] = rel
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2))
