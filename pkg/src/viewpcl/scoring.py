"""Superpixel uncertainty scores: transport-based view inconsistency and the
view entropy / view divergence baseline."""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyOmega, RegionMismatch
from .geometry import Correspondences, OverlapRegion
from .probability import (
    DEFAULT_WEIGHT_THRESHOLD,
    ClassProbabilityMap,
    PointCloudDistribution,
    RegionProbabilityFamily,
    SelectionDistribution,
    induced_class_prob,
    point_cloud_distribution,
    prune_and_renormalize,
    uniform_selection,
)
from .transport import TransportConfig, dissimilarity

KL_EPS = 1e-12
WORKERS_ENV = "VIEWPCL_WORKERS"

Key = tuple[int, int]


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class ScoringConfig:
    transport: TransportConfig = field(default_factory=TransportConfig)
    weight_threshold: float = DEFAULT_WEIGHT_THRESHOLD


@dataclass(frozen=True, eq=False)
class SubregionScoreInput:
    """Own-view family P1, cross-projected family P2 and q, all over the same pixels of D."""

    family_p1: RegionProbabilityFamily
    family_p2: RegionProbabilityFamily
    q: SelectionDistribution

    def __post_init__(self):
        r = self.family_p1.region
        if not (np.array_equal(r, self.family_p2.region) and np.array_equal(r, self.q.region)):
            raise RegionMismatch("P1, P2 and q must share the same ordered region")

    @property
    def region(self) -> np.ndarray:
        return self.family_p1.region

    @classmethod
    def from_overlap(
        cls,
        region: OverlapRegion,
        target_map: ClassProbabilityMap,
        source_map: ClassProbabilityMap,
        selection: Callable[[np.ndarray], SelectionDistribution] = uniform_selection,
    ) -> "SubregionScoreInput":
        pixels = region.target_pixels
        src = region.source_pixels
        p1 = RegionProbabilityFamily(pixels, target_map.probs[pixels[:, 0], pixels[:, 1]])
        p2 = RegionProbabilityFamily(pixels, source_map.probs[src[:, 0], src[:, 1]])
        return cls(p1, p2, selection(pixels))

    def canonical(self) -> "SubregionScoreInput":
        """Same input with pixels sorted row-major, so scores ignore enumeration order."""
        r = self.region
        order = np.lexsort((r[:, 1], r[:, 0]))
        if np.array_equal(order, np.arange(len(order))):
            return self
        region = r[order]
        return SubregionScoreInput(
            RegionProbabilityFamily(region, self.family_p1.maps[order]),
            RegionProbabilityFamily(region, self.family_p2.maps[order]),
            SelectionDistribution(region, self.q.weights[order]),
        )


def prominent_classes(inp: SubregionScoreInput) -> tuple[int, int]:
    """Most probable class under P1 and under P2 (lowest index on ties)."""
    p1 = induced_class_prob(inp.family_p1, inp.q)
    p2 = induced_class_prob(inp.family_p2, inp.q)
    return int(np.argmax(p1)), int(np.argmax(p2))


def _cloud(
    family: RegionProbabilityFamily, q: SelectionDistribution, c: int, threshold: float
) -> PointCloudDistribution | None:
    if not (family.maps[:, c] * q.weights).sum() > 0:
        return None
    return prune_and_renormalize(point_cloud_distribution(family, q, c), threshold)


def subregion_score(inp: SubregionScoreInput, cfg: ScoringConfig = ScoringConfig()) -> float:
    """Mean transport discrepancy of the point clouds of the two prominent classes."""
    inp = inp.canonical()
    c1, c2 = prominent_classes(inp)
    terms = {}
    for c in (c1, c2):
        if c in terms:
            continue
        mu1 = _cloud(inp.family_p1, inp.q, c, cfg.weight_threshold)
        mu2 = _cloud(inp.family_p2, inp.q, c, cfg.weight_threshold)
        terms[c] = dissimilarity(mu1, mu2, inp.region, cfg.transport)
    return (terms[c1] + terms[c2]) / 2.0


def superpixel_viewpcl_score(scored: Sequence[tuple[OverlapRegion, float]]) -> float:
    """Overlap-size-weighted mean of subregion scores; 0 when nothing overlaps."""
    if not scored:
        return 0.0
    w = np.array([region.relative_size for region, _ in scored])
    s = np.array([score for _, score in scored])
    return float(np.dot(w, s) / w.sum())


def _as_omega(omega) -> np.ndarray:
    omega = np.asarray(omega, dtype=np.float64)
    if omega.size == 0:
        raise EmptyOmega("no cross-projected maps at this pixel")
    return np.atleast_2d(omega)


def view_entropy(omega) -> float:
    """Entropy (nats) of the mean of the cross-projected class distributions."""
    omega = _as_omega(omega)
    q = omega.mean(axis=0)
    nz = q > 0
    return float(-np.sum(q[nz] * np.log(q[nz])))


def kl_divergence(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``KL(a || b)`` along the last axis; 0 log 0 = 0, denominators clamped at 1e-12."""
    a = np.asarray(a, dtype=np.float64)
    b = np.maximum(np.asarray(b, dtype=np.float64), KL_EPS)
    safe_a = np.where(a > 0, a, 1.0)
    return np.sum(np.where(a > 0, a * np.log(safe_a / b), 0.0), axis=-1)


def view_divergence(p_own, omega) -> float:
    """Mean KL divergence from the pixel's own map to each cross-projected map."""
    omega = _as_omega(omega)
    return float(kl_divergence(np.asarray(p_own)[None, :], omega).mean())


def superpixel_baseline_scores(entropy, divergence) -> tuple[float, float]:
    """Mean VE and VD over a superpixel's pixels; NaN marks a pixel with empty Omega."""
    entropy = np.asarray(entropy, dtype=np.float64)
    divergence = np.asarray(divergence, dtype=np.float64)
    ok = ~np.isnan(entropy)
    if not ok.any():
        return 0.0, 0.0
    return float(entropy[ok].mean()), float(divergence[ok].mean())


@dataclass(frozen=True, eq=False)
class PixelViewStats:
    """Per-pixel baseline scores of one view (NaN where Omega is empty)."""

    entropy: np.ndarray
    divergence: np.ndarray
    omega_count: np.ndarray
    disagreement: np.ndarray  # fraction of cross-projected maps whose argmax differs from the own one


def pixel_view_stats(
    view_id: int,
    maps: Mapping[int, ClassProbabilityMap],
    projections: Mapping[tuple[int, int], Correspondences],
) -> PixelViewStats:
    own = np.asarray(maps[view_id].probs, dtype=np.float64)
    h, w, c = own.shape
    q_sum = np.zeros((h, w, c))
    kl_sum = np.zeros((h, w))
    count = np.zeros((h, w), dtype=np.int64)
    disagree = np.zeros((h, w))
    own_label = own.argmax(axis=2)
    for (src_id, tgt_id), corr in projections.items():
        if tgt_id != view_id or not len(corr):
            continue
        t, s = corr.target, corr.source
        other = np.asarray(maps[src_id].probs, dtype=np.float64)[s[:, 0], s[:, 1]]
        q_sum[t[:, 0], t[:, 1]] += other
        kl_sum[t[:, 0], t[:, 1]] += kl_divergence(own[t[:, 0], t[:, 1]], other)
        count[t[:, 0], t[:, 1]] += 1
        disagree[t[:, 0], t[:, 1]] += other.argmax(axis=1) != own_label[t[:, 0], t[:, 1]]

    has = count > 0
    q = np.where(has[..., None], q_sum / np.maximum(count, 1)[..., None], 0.0)
    ent = -np.sum(np.where(q > 0, q * np.log(np.where(q > 0, q, 1.0)), 0.0), axis=2)
    entropy = np.where(has, ent, np.nan)
    divergence = np.where(has, kl_sum / np.maximum(count, 1), np.nan)
    disagreement = np.where(has, disagree / np.maximum(count, 1), 0.0)
    return PixelViewStats(entropy, divergence, count, disagreement)


@dataclass
class ScoreEntry:
    viewpcl_score: float = 0.0
    view_entropy: float = 0.0
    view_divergence: float = 0.0
    coverage: int = 0


COLUMNS = ("view_id", "superpixel_id", "viewpcl_score", "view_entropy", "view_divergence", "coverage")


@dataclass
class ScoreTable:
    entries: dict[Key, ScoreEntry] = field(default_factory=dict)

    def __getitem__(self, key: Key) -> ScoreEntry:
        return self.entries[key]

    def __contains__(self, key) -> bool:
        return key in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def keys(self) -> list[Key]:
        return sorted(self.entries)

    def merge(self, other: "ScoreTable") -> "ScoreTable":
        self.entries.update(other.entries)
        return self

    def rows(self) -> list[dict]:
        return [{"view_id": v, "superpixel_id": k, **asdict(self.entries[(v, k)])} for v, k in self.keys()]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows():
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"columns": list(COLUMNS), "rows": self.rows()}, indent=2)

    @classmethod
    def from_rows(cls, rows: Iterable[Mapping]) -> "ScoreTable":
        table = cls()
        for row in rows:
            table.entries[(int(row["view_id"]), int(row["superpixel_id"]))] = ScoreEntry(
                float(row["viewpcl_score"]),
                float(row["view_entropy"]),
                float(row["view_divergence"]),
                int(row["coverage"]),
            )
        return table

    @classmethod
    def from_csv(cls, text: str) -> "ScoreTable":
        return cls.from_rows(csv.DictReader(io.StringIO(text)))

    @classmethod
    def from_json(cls, text: str) -> "ScoreTable":
        return cls.from_rows(json.loads(text)["rows"])


def score_superpixel(
    regions: Sequence[OverlapRegion],
    maps: Mapping[int, ClassProbabilityMap],
    cfg: ScoringConfig = ScoringConfig(),
) -> tuple[float, list[float]]:
    """Viewpcl score of one superpixel from its overlap regions, plus the per-region scores."""
    per_region = [
        subregion_score(
            SubregionScoreInput.from_overlap(r, maps[r.target_view], maps[r.source_view]), cfg
        )
        for r in regions
    ]
    return superpixel_viewpcl_score(list(zip(regions, per_region))), per_region


def build_score_table(
    maps: Mapping[int, ClassProbabilityMap],
    labels: Mapping[int, np.ndarray],
    regions: Mapping[Key, Sequence[OverlapRegion]],
    projections: Mapping[tuple[int, int], Correspondences],
    cfg: ScoringConfig = ScoringConfig(),
    keys: Iterable[Key] | None = None,
    stats: Mapping[int, PixelViewStats] | None = None,
) -> ScoreTable:
    """Score every requested superpixel (all superpixels when ``keys`` is None)."""
    if stats is None:
        stats = {v: pixel_view_stats(v, maps, projections) for v in maps}
    if keys is None:
        keys = [(v, k) for v in sorted(labels) for k in range(int(labels[v].max()) + 1)]
    keys = sorted(keys)

    baseline: dict[Key, tuple[float, float]] = {}
    for v in sorted({v for v, _ in keys}):
        lab = labels[v].ravel()
        st = stats[v]
        ent, div = st.entropy.ravel(), st.divergence.ravel()
        ok = ~np.isnan(ent)
        n = int(lab.max()) + 1
        cnt = np.bincount(lab[ok], minlength=n)
        ent_sum = np.bincount(lab[ok], weights=ent[ok], minlength=n)
        div_sum = np.bincount(lab[ok], weights=div[ok], minlength=n)
        for k in range(n):
            baseline[(v, k)] = (
                (float(ent_sum[k] / cnt[k]), float(div_sum[k] / cnt[k])) if cnt[k] else (0.0, 0.0)
            )

    def work(chunk: Sequence[Key]) -> ScoreTable:
        part = ScoreTable()
        for key in chunk:
            regs = regions.get(key, [])
            s, _ = score_superpixel(regs, maps, cfg)
            ve, vd = baseline[key]
            part.entries[key] = ScoreEntry(s, ve, vd, len(regs))
        return part

    workers = worker_count()
    if workers == 1 or len(keys) < 2:
        return work(keys)
    chunks = [keys[i::workers] for i in range(workers)]
    table = ScoreTable()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for part in pool.map(work, chunks):
            table.merge(part)
    return table
