"""Superpixel selection policies, labeling budgets and the active-learning loop."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Literal, Mapping, NamedTuple, Protocol, Sequence

import numpy as np

from .errors import EmptyPool, ProviderFailure
from .geometry import OverlapIndex
from .probability import ClassProbabilityMap, mc_average
from .scenebundle.format import SceneBundle
from .scenebundle.overlaps import OverlapCache, precompute_overlaps
from .scoring import ScoreTable, ScoringConfig, build_score_table, pixel_view_stats

logger = logging.getLogger(__name__)

Key = tuple[int, int]
Policy = Literal["viewpcl", "viewal", "random"]
POLICIES = ("viewpcl", "viewal", "random")

DEFAULT_K = 1500
DEFAULT_SEED_FRACTION = 0.015
DEFAULT_MIN_PROJECTION_OVERLAP = 0.25


@dataclass(frozen=True)
class RoundConfig:
    K: float = DEFAULT_K
    seed_fraction: float = DEFAULT_SEED_FRACTION
    min_projection_overlap: float = DEFAULT_MIN_PROJECTION_OVERLAP
    rng_seed: int = 0
    budget_mode: Literal["pixels", "superpixels"] = "pixels"

    def __post_init__(self):
        if not self.K >= 0:
            raise ValueError("K must be non-negative")
        if not 0 < self.seed_fraction < 1:
            raise ValueError("seed_fraction must lie in (0, 1)")
        if not 0 < self.min_projection_overlap <= 1:
            raise ValueError("min_projection_overlap must lie in (0, 1]")
        if self.budget_mode not in ("pixels", "superpixels"):
            raise ValueError(f"unknown budget mode {self.budget_mode!r}")


@dataclass
class CandidatePool:
    candidates: set[Key] = field(default_factory=set)
    labeled: set[Key] = field(default_factory=set)

    def __len__(self) -> int:
        return len(self.candidates)

    def __bool__(self) -> bool:
        return bool(self.candidates)

    def label(self, key: Key) -> None:
        self.candidates.discard(key)
        self.labeled.add(key)

    def discard(self, keys) -> None:
        self.candidates.difference_update(keys)


@dataclass
class Budget:
    """Labeling allowance, counted in pixels or in superpixels."""

    mode: Literal["pixels", "superpixels"]
    limit: int
    consumed: int = 0

    @classmethod
    def image_equivalents(cls, k: float, image_pixels: float, superpixels_per_image: float, mode="pixels") -> "Budget":
        per_image = image_pixels if mode == "pixels" else superpixels_per_image
        # tolerate float noise such as 1.5 * 4096 landing just below an integer
        return cls(mode, int(math.floor(k * per_image + 1e-9)))

    @property
    def remaining(self) -> int:
        return self.limit - self.consumed

    def cost(self, pixels: int) -> int:
        return pixels if self.mode == "pixels" else 1

    def can_afford(self, pixels: int) -> bool:
        return self.cost(pixels) <= self.remaining

    def consume(self, pixels: int) -> None:
        self.consumed += self.cost(pixels)


class ProbabilityProvider(Protocol):
    """Returns per-view MC samples of class probability maps given the labeled set."""

    def predict(self, labeled: frozenset[Key], round_index: int) -> Mapping[int, Sequence[ClassProbabilityMap]]: ...


class StaticProvider:
    """Replays the MC samples stored in a bundle, whatever the labeled set."""

    def __init__(self, bundle: SceneBundle):
        self.bundle = bundle

    def predict(self, labeled, round_index):
        return self.bundle.samples


class Selection(NamedTuple):
    selected: Key
    removed: frozenset[Key]


def _argmax(keys, score) -> Key:
    # highest score; ties to the lowest (view_id, superpixel_id)
    return min(keys, key=lambda k: (-score(k), k))


def _select_two_step(pool: CandidatePool, first_score, scores: ScoreTable, index: OverlapIndex, cfg: RoundConfig) -> Selection:
    if not pool:
        raise EmptyPool("candidate pool is empty")
    anchor = _argmax(pool.candidates, first_score)
    members = {anchor}
    members.update(k for k in index.members(anchor, cfg.min_projection_overlap) if k in pool.candidates)
    chosen = _argmax(members, lambda k: scores[k].view_divergence)
    return Selection(chosen, frozenset(members - {chosen}))


def select_one_viewpcl(pool: CandidatePool, scores: ScoreTable, index: OverlapIndex, cfg: RoundConfig) -> Selection:
    """Anchor on the highest viewpcl score, then pick the highest view divergence
    among the candidates overlapping the anchor; the other overlapping candidates
    are removed."""
    return _select_two_step(pool, lambda k: scores[k].viewpcl_score, scores, index, cfg)


def select_one_viewal(pool: CandidatePool, scores: ScoreTable, index: OverlapIndex, cfg: RoundConfig) -> Selection:
    """Same as ``select_one_viewpcl`` but anchored on view entropy."""
    return _select_two_step(pool, lambda k: scores[k].view_entropy, scores, index, cfg)


def select_one_random(pool: CandidatePool, rng: np.random.Generator) -> Selection:
    if not pool:
        raise EmptyPool("candidate pool is empty")
    ordered = sorted(pool.candidates)
    return Selection(ordered[int(rng.integers(len(ordered)))], frozenset())


@dataclass(frozen=True)
class SelectedItem:
    rank: int
    view_id: int
    superpixel_id: int
    pixels: int
    score: float


def select_batch(
    pool: CandidatePool,
    scores: ScoreTable,
    index: OverlapIndex,
    cfg: RoundConfig,
    budget: Budget,
    policy: Policy = "viewpcl",
    rng: np.random.Generator | None = None,
) -> list[SelectedItem]:
    """Select superpixels one at a time until the next one no longer fits the budget
    or the pool runs dry. Mutates ``pool`` and ``budget``."""
    if policy == "random" and rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    out: list[SelectedItem] = []
    while pool and budget.remaining > 0:
        if policy == "viewpcl":
            sel = select_one_viewpcl(pool, scores, index, cfg)
            score = scores[sel.selected].viewpcl_score
        elif policy == "viewal":
            sel = select_one_viewal(pool, scores, index, cfg)
            score = scores[sel.selected].view_entropy
        elif policy == "random":
            sel = select_one_random(pool, rng)
            score = float("nan")
        else:
            raise ValueError(f"unknown policy {policy!r}")
        pixels = index.sizes[sel.selected]
        if not budget.can_afford(pixels):
            break
        budget.consume(pixels)
        pool.label(sel.selected)
        pool.discard(sel.removed)
        out.append(SelectedItem(len(out), sel.selected[0], sel.selected[1], pixels, score))
    return out


@dataclass
class RoundReport:
    round: int
    labeled_superpixels: int
    labeled_pixels: int
    labeled_fraction: float
    budget_limit: int
    budget_consumed: int
    score_summary: dict
    selections: list[dict]
    disagreement_mass: float
    quality: float | None = None


@dataclass
class SimulationReport:
    policy: str
    rng_seed: int
    seed_views: list[int]
    seed_superpixels: int
    rounds: list[RoundReport] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False, default=_json_default)

    @property
    def cumulative_disagreement(self) -> float:
        return sum(r.disagreement_mass for r in self.rounds)

    def selections_csv(self) -> str:
        return selections_to_csv((r.round, r.selections) for r in self.rounds)


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(type(obj))


SELECTION_COLUMNS = ("round", "rank", "view_id", "superpixel_id", "pixels", "score")


def selections_to_csv(rounds) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SELECTION_COLUMNS)
    for round_index, items in rounds:
        for item in items:
            row = item if isinstance(item, dict) else asdict(item)
            writer.writerow([round_index, row["rank"], row["view_id"], row["superpixel_id"], row["pixels"], repr(row["score"]) if row["score"] is not None else ""])
    return buf.getvalue()


def seed_views(view_ids: Sequence[int], fraction: float, rng_seed: int) -> list[int]:
    """Fully annotated starting images: ``round(fraction * n)`` of them, at least one."""
    n = max(1, int(round(fraction * len(view_ids))))
    rng = np.random.default_rng(rng_seed)
    picked = rng.choice(np.asarray(view_ids), size=min(n, len(view_ids)), replace=False)
    return sorted(int(v) for v in picked)


def _summary(values) -> dict:
    v = np.asarray(list(values), dtype=np.float64)
    if v.size == 0:
        return {"count": 0}
    return {"count": int(v.size), "min": float(v.min()), "mean": float(v.mean()), "max": float(v.max())}


def run_active_learning(
    bundle: SceneBundle,
    provider: ProbabilityProvider,
    policy: Policy = "viewpcl",
    cfg: RoundConfig = RoundConfig(),
    num_rounds: int = 1,
    scoring: ScoringConfig = ScoringConfig(),
    overlaps: OverlapCache | None = None,
) -> SimulationReport:
    """Seed, then per round: predict, MC-average, score the unlabeled superpixels,
    select a batch and label it."""
    if num_rounds < 1:
        raise ValueError("num_rounds must be >= 1")
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    if overlaps is None:
        overlaps = precompute_overlaps(bundle)
    sizes = bundle.superpixel_sizes()
    total_pixels = sum(sizes.values())
    per_image_sp = np.mean([sp.num_superpixels for sp in bundle.superpixels.values()])

    seeds = seed_views(bundle.view_ids, cfg.seed_fraction, cfg.rng_seed)
    labeled = {k for k in sizes if k[0] in seeds}
    report = SimulationReport(policy, cfg.rng_seed, seeds, len(labeled))
    rng = np.random.default_rng([cfg.rng_seed, 1])

    for r in range(num_rounds):
        try:
            raw = provider.predict(frozenset(labeled), r)
        except Exception as exc:  # noqa: BLE001 - re-raised with round context
            raise ProviderFailure(r, exc) from exc
        maps = {v: mc_average(samples) for v, samples in raw.items()}
        stats = {v: pixel_view_stats(v, maps, overlaps.projections) for v in maps}
        candidates = set(sizes) - labeled
        scores = build_score_table(
            maps, bundle.label_rasters(), overlaps.regions, overlaps.projections, scoring,
            keys=candidates, stats=stats,
        )
        pool = CandidatePool(set(candidates), set(labeled))
        budget = Budget.image_equivalents(cfg.K, bundle.image_pixels(), per_image_sp, cfg.budget_mode)
        picked = select_batch(pool, scores, overlaps.index, cfg, budget, policy, rng)
        disagreement = 0.0
        for item in picked:
            mask = bundle.superpixels[item.view_id].labels == item.superpixel_id
            disagreement += float(stats[item.view_id].disagreement[mask].sum())
        labeled.update((i.view_id, i.superpixel_id) for i in picked)
        labeled_pixels = sum(sizes[k] for k in labeled)
        quality = provider.quality(maps) if hasattr(provider, "quality") else None
        entries = [scores[k] for k in scores.keys()]
        report.rounds.append(
            RoundReport(
                round=r,
                labeled_superpixels=len(labeled),
                labeled_pixels=labeled_pixels,
                labeled_fraction=labeled_pixels / total_pixels,
                budget_limit=budget.limit,
                budget_consumed=budget.consumed,
                score_summary={
                    "viewpcl_score": _summary(e.viewpcl_score for e in entries),
                    "view_entropy": _summary(e.view_entropy for e in entries),
                    "view_divergence": _summary(e.view_divergence for e in entries),
                },
                selections=[
                    {**asdict(i), "score": None if math.isnan(i.score) else i.score} for i in picked
                ],
                disagreement_mass=disagreement,
                quality=quality,
            )
        )
        logger.info("round %d: %s selected %d superpixels, labeled fraction %.4f",
                    r, policy, len(picked), labeled_pixels / total_pixels)
    return report
