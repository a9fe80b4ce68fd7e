"""Analytic synthetic scenes: fronto-parallel rectangles in front of a wall, seen
by a ring of slightly rotated cameras."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np
from scipy.spatial.transform import Rotation

from ..errors import InvalidSpec
from ..geometry import Intrinsics, Pose, ViewRecord
from ..probability import ClassProbabilityMap
from .format import SceneBundle
from .superpixels import DEFAULT_SUPERPIXELS, grid_superpixels

Key = tuple[int, int]


@dataclass
class PlaneSpec:
    """Axis-aligned rectangle at world depth ``depth`` spanning ``x`` and ``y``."""

    depth: float
    x: tuple[float, float]
    y: tuple[float, float]
    class_id: int


@dataclass
class InjectSpec:
    """Replace one superpixel's prediction in a single view by a shifted class."""

    view: int
    superpixel: int
    class_shift: int = 1


def _default_planes() -> list[PlaneSpec]:
    return [
        PlaneSpec(6.0, (-3.0, -0.2), (-2.5, 0.5), 1),
        PlaneSpec(7.5, (0.6, 3.2), (-0.8, 3.0), 2),
        PlaneSpec(4.5, (-1.6, 0.4), (1.4, 2.6), 3),
    ]


@dataclass
class SynthSpec:
    width: int = 64
    height: int = 64
    num_classes: int = 4
    num_views: int = 4
    num_superpixels: int = DEFAULT_SUPERPIXELS
    mc_samples: int = 2
    focal: float | None = None
    background_depth: float = 10.0
    background_class: int = 0
    planes: list[PlaneSpec] = field(default_factory=_default_planes)
    baseline: float = 0.4
    rotation_jitter_deg: float = 1.0
    noise: float = 0.0
    inject: InjectSpec | None = None
    rng_seed: int = 0

    def __post_init__(self):
        self.planes = [p if isinstance(p, PlaneSpec) else PlaneSpec(**p) for p in self.planes]
        if isinstance(self.inject, Mapping):
            self.inject = InjectSpec(**self.inject)
        self.check()

    def check(self) -> None:
        if self.width < 1 or self.height < 1:
            raise InvalidSpec("image dimensions must be positive")
        if self.num_views < 1 or self.mc_samples < 1:
            raise InvalidSpec("need at least one view and one MC sample")
        if self.num_classes < 2:
            raise InvalidSpec("need at least two classes")
        if not 0 <= self.noise <= 1:
            raise InvalidSpec("noise must lie in [0, 1]")
        if not self.background_depth > 0:
            raise InvalidSpec("background depth must be positive")
        classes = [self.background_class] + [p.class_id for p in self.planes]
        if any(not 0 <= c < self.num_classes for c in classes):
            raise InvalidSpec(f"class ids {classes} outside [0, {self.num_classes})")
        for p in self.planes:
            if not (0 < p.depth < self.background_depth) or p.x[0] >= p.x[1] or p.y[0] >= p.y[1]:
                raise InvalidSpec(f"degenerate or misplaced plane {p}")
        if self.inject is not None:
            if not 0 <= self.inject.view < self.num_views:
                raise InvalidSpec(f"inject view {self.inject.view} out of range")
            if not 0 <= self.inject.superpixel < self.num_superpixels:
                raise InvalidSpec(f"inject superpixel {self.inject.superpixel} out of range")
            if self.inject.class_shift % self.num_classes == 0:
                raise InvalidSpec("inject class_shift must change the class")

    @classmethod
    def from_dict(cls, data: Mapping) -> "SynthSpec":
        try:
            return cls(**data)
        except TypeError as exc:
            raise InvalidSpec(str(exc)) from exc

    def to_dict(self) -> dict:
        return asdict(self)


def camera_poses(spec: SynthSpec, rng: np.random.Generator) -> list[Pose]:
    poses = []
    for k in range(spec.num_views):
        angle = 2 * np.pi * k / spec.num_views
        t = spec.baseline * np.array([np.cos(angle), np.sin(angle), 0.0])
        euler = rng.uniform(-spec.rotation_jitter_deg, spec.rotation_jitter_deg, size=3)
        rot = Rotation.from_euler("xyz", euler, degrees=True).as_matrix()
        poses.append(Pose(rot, t))
    return poses


def render(spec: SynthSpec, intr: Intrinsics, pose: Pose) -> tuple[np.ndarray, np.ndarray]:
    """Ray-cast depth (camera z) and ground-truth class for every pixel center."""
    rows, cols = np.mgrid[0 : spec.height, 0 : spec.width]
    ray_cam = np.stack(
        [(cols + 0.5 - intr.cx) / intr.fx, (rows + 0.5 - intr.cy) / intr.fy, np.ones(rows.shape)],
        axis=-1,
    )
    ray_world = ray_cam @ pose.rotation.T
    origin = pose.translation
    dz = ray_world[..., 2]

    label = np.full(rows.shape, spec.background_class, dtype=np.int64)
    s_bg = (spec.background_depth - origin[2]) / dz
    depth = np.where(dz > 0, s_bg, np.inf)
    for plane in spec.planes:
        s = (plane.depth - origin[2]) / dz
        hit = origin + s[..., None] * ray_world
        inside = (
            (dz > 0)
            & (hit[..., 0] >= plane.x[0]) & (hit[..., 0] <= plane.x[1])
            & (hit[..., 1] >= plane.y[0]) & (hit[..., 1] <= plane.y[1])
            & (s < depth)
        )
        depth = np.where(inside, s, depth)
        label = np.where(inside, plane.class_id, label)
    depth = np.where(np.isfinite(depth), depth, 0.0)
    # store at raster precision so a save/load round trip is exact
    return depth.astype(np.float32).astype(np.float64), label


def noisy_probs(label: np.ndarray, num_classes: int, noise, rng: np.random.Generator) -> np.ndarray:
    """One-hot ground truth blended with Dirichlet noise; ``noise`` may be a per-pixel array."""
    onehot = np.eye(num_classes)[label]
    noise = np.broadcast_to(np.asarray(noise, dtype=np.float64), label.shape)[..., None]
    if np.any(noise > 0):
        dirichlet = rng.dirichlet(np.ones(num_classes), size=label.shape)
        probs = (1.0 - noise) * onehot + noise * dirichlet
    else:
        probs = onehot
    probs = probs.astype(np.float32)
    return probs / probs.sum(axis=2, keepdims=True, dtype=np.float32)


def synth_scene(spec: SynthSpec) -> SceneBundle:
    rng = np.random.default_rng(spec.rng_seed)
    focal = float(spec.focal) if spec.focal else float(spec.width)
    intr = Intrinsics(focal, focal, spec.width / 2.0, spec.height / 2.0)
    grid = grid_superpixels(spec.width, spec.height, spec.num_superpixels)

    views, samples, superpixels, labels = [], {}, {}, {}
    for vid, pose in enumerate(camera_poses(spec, rng)):
        depth, gt = render(spec, intr, pose)
        views.append(ViewRecord(vid, intr, pose, depth))
        pred = gt.copy()
        if spec.inject is not None and spec.inject.view == vid:
            mask = grid.mask(spec.inject.superpixel)
            pred[mask] = (gt[mask] + spec.inject.class_shift) % spec.num_classes
        samples[vid] = [
            ClassProbabilityMap(vid, noisy_probs(pred, spec.num_classes, spec.noise, rng))
            for _ in range(spec.mc_samples)
        ]
        superpixels[vid] = grid
        labels[vid] = gt

    # JSON-native so the metadata survives a save/load round trip unchanged
    metadata = {"synth_spec": json.loads(json.dumps(spec.to_dict()))}
    if spec.inject is not None:
        metadata["injection_site"] = [spec.inject.view, spec.inject.superpixel]
    return SceneBundle(views, spec.num_classes, samples, superpixels, labels, metadata)


class SyntheticProvider:
    """Stand-in for a segmentation network trained on the labeled superpixels.

    Predictions are the ground truth, except on a fixed random set of
    "confused" superpixels per view, where the predicted class is shifted;
    Dirichlet noise of strength ``noise`` is mixed in everywhere. Labeling a
    superpixel removes its confusion and scales its noise by ``labeled_noise_scale``.
    """

    def __init__(
        self,
        bundle: SceneBundle,
        noise: float = 0.2,
        labeled_noise_scale: float = 0.1,
        confusion_fraction: float = 0.2,
        mc_samples: int = 2,
        rng_seed: int = 0,
    ):
        if not bundle.labels:
            raise InvalidSpec("the synthetic provider needs ground-truth label rasters")
        self.bundle = bundle
        self.noise = noise
        self.labeled_noise_scale = labeled_noise_scale
        self.mc_samples = mc_samples
        self.rng_seed = rng_seed
        rng = np.random.default_rng([rng_seed, 0x5EED])
        self.confused: set[Key] = set()
        for vid in bundle.view_ids:
            n = bundle.superpixels[vid].num_superpixels
            picks = rng.choice(n, size=int(round(confusion_fraction * n)), replace=False)
            self.confused.update((vid, int(k)) for k in picks)

    def predict(self, labeled, round_index: int) -> dict[int, list[ClassProbabilityMap]]:
        rng = np.random.default_rng([self.rng_seed, round_index])
        labeled = set(labeled)
        out = {}
        num_classes = self.bundle.num_classes
        for vid in self.bundle.view_ids:
            sp = self.bundle.superpixels[vid].labels
            gt = self.bundle.labels[vid]
            n = int(sp.max()) + 1
            is_labeled = np.array([(vid, k) in labeled for k in range(n)])[sp]
            is_confused = np.array([(vid, k) in self.confused for k in range(n)])[sp] & ~is_labeled
            pred = np.where(is_confused, (gt + 1) % num_classes, gt)
            noise = np.where(is_labeled, self.noise * self.labeled_noise_scale, self.noise)
            out[vid] = [
                ClassProbabilityMap(vid, noisy_probs(pred, num_classes, noise, rng))
                for _ in range(self.mc_samples)
            ]
        return out

    def quality(self, maps: Mapping[int, ClassProbabilityMap]) -> float:
        """Pixel accuracy of the averaged prediction against ground truth."""
        hits = total = 0
        for vid, m in maps.items():
            gt = self.bundle.labels[vid]
            valid = self.bundle.view(vid).valid
            hits += int((m.probs.argmax(axis=2) == gt)[valid].sum())
            total += int(valid.sum())
        return hits / total if total else 0.0
