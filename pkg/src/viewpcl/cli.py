"""Command-line entry point: ``viewpcl <command> ...``.

Exit status: 0 on success, 1 on validation failure, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ViewPCLError
from .geometry import DEFAULT_DEPTH_TOLERANCE
from .probability import DEFAULT_WEIGHT_THRESHOLD
from .scenebundle import (
    DEFAULT_MIN_RELATIVE_SIZE,
    DEFAULT_SUPERPIXELS,
    SynthSpec,
    SyntheticProvider,
    get_overlaps,
    grid_superpixels,
    load_bundle,
    save_bundle,
    synth_scene,
)
from .scenebundle.format import write_superpixels
from .scoring import ScoringConfig, build_score_table
from .selection import (
    DEFAULT_K,
    DEFAULT_MIN_PROJECTION_OVERLAP,
    DEFAULT_SEED_FRACTION,
    POLICIES,
    Budget,
    CandidatePool,
    RoundConfig,
    StaticProvider,
    run_active_learning,
    select_batch,
    selections_to_csv,
)
from .transport import TransportConfig

logger = logging.getLogger("viewpcl")

EXIT_OK, EXIT_INVALID, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _scoring_config(path: str | None) -> tuple[ScoringConfig, dict]:
    """Read a policy-config JSON file; unknown keys are a usage error."""
    if path is None:
        return ScoringConfig(), {}
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise UsageError(f"--policy-config: no such file {path}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"--policy-config: invalid JSON ({exc})") from exc
    transport = data.pop("transport", {})
    weight_threshold = data.pop("weight_threshold", DEFAULT_WEIGHT_THRESHOLD)
    geometry = {k: data.pop(k) for k in ("depth_tolerance", "min_overlap") if k in data}
    if data:
        raise UsageError(f"--policy-config: unknown keys {sorted(data)}")
    try:
        return ScoringConfig(TransportConfig(**transport), float(weight_threshold)), geometry
    except TypeError as exc:
        raise UsageError(f"--policy-config: {exc}") from exc


def _round_config(args) -> RoundConfig:
    return RoundConfig(
        K=args.budget,
        seed_fraction=getattr(args, "seed_fraction", DEFAULT_SEED_FRACTION),
        min_projection_overlap=args.min_projection_overlap,
        rng_seed=args.seed,
        budget_mode=args.budget_mode,
    )


def cmd_validate(args) -> int:
    bundle = load_bundle(args.bundle)
    print(f"ok: {len(bundle.views)} views, {bundle.num_classes} classes, {bundle.num_mc_samples} MC samples")
    return EXIT_OK


def cmd_superpixels(args) -> int:
    bundle = load_bundle(args.bundle)
    for view in bundle.views:
        bundle.superpixels[view.view_id] = grid_superpixels(view.width, view.height, args.count)
    write_superpixels(bundle, args.bundle)
    print(f"wrote {args.count} grid superpixels for {len(bundle.views)} views")
    return EXIT_OK


def cmd_overlaps(args) -> int:
    bundle = load_bundle(args.bundle)
    cache = get_overlaps(bundle, args.bundle, args.depth_tol, args.min_overlap)
    print(f"{cache.num_regions()} overlap regions over {len(cache.regions)} superpixels "
          f"(depth tolerance {args.depth_tol}, min overlap {args.min_overlap})")
    return EXIT_OK


def _score(args):
    cfg, geometry = _scoring_config(args.policy_config)
    bundle = load_bundle(args.bundle)
    cache = get_overlaps(
        bundle, args.bundle,
        geometry.get("depth_tolerance", args.depth_tol),
        geometry.get("min_overlap", args.min_overlap),
    )
    maps = bundle.averaged_maps()
    table = build_score_table(maps, bundle.label_rasters(), cache.regions, cache.projections, cfg)
    return bundle, cache, table


def cmd_score(args) -> int:
    _, _, table = _score(args)
    if args.format == "json":
        _emit(table.to_json(), args.out)
    elif args.format == "csv":
        _emit(table.to_csv(), args.out)
    else:
        if not args.out:
            raise UsageError("--format both requires --out PREFIX")
        _emit(table.to_csv(), args.out + ".csv")
        _emit(table.to_json(), args.out + ".json")
    return EXIT_OK


def cmd_select(args) -> int:
    bundle, cache, table = _score(args)
    cfg = _round_config(args)
    per_image_sp = sum(sp.num_superpixels for sp in bundle.superpixels.values()) / len(bundle.views)
    budget = Budget.image_equivalents(cfg.K, bundle.image_pixels(), per_image_sp, cfg.budget_mode)
    pool = CandidatePool(set(table.keys()))
    picked = select_batch(pool, table, cache.index, cfg, budget, args.policy)
    _emit(selections_to_csv([(0, picked)]), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg_scoring, geometry = _scoring_config(args.policy_config)
    bundle = load_bundle(args.bundle)
    cache = get_overlaps(
        bundle, args.bundle,
        geometry.get("depth_tolerance", args.depth_tol),
        geometry.get("min_overlap", args.min_overlap),
    )
    kind = args.provider
    if kind == "auto":
        kind = "synthetic" if bundle.labels else "static"
    if kind == "synthetic":
        provider = SyntheticProvider(bundle, noise=args.provider_noise, rng_seed=args.seed)
    else:
        provider = StaticProvider(bundle)
    report = run_active_learning(
        bundle, provider, args.policy, _round_config(args), args.rounds, cfg_scoring, cache
    )
    _emit(report.to_json(), args.out)
    return EXIT_OK


def cmd_synth(args) -> int:
    data = {}
    if args.spec:
        try:
            data = json.loads(Path(args.spec).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"--spec: cannot read {args.spec} ({exc})") from exc
    bundle = synth_scene(SynthSpec.from_dict(data))
    save_bundle(bundle, args.out)
    print(f"wrote synthetic bundle with {len(bundle.views)} views to {args.out}")
    return EXIT_OK


def _add_geometry(p) -> None:
    p.add_argument("--depth-tol", type=float, default=DEFAULT_DEPTH_TOLERANCE,
                   help="relative depth tolerance of the visibility test (default: %(default)s)")
    p.add_argument("--min-overlap", type=float, default=DEFAULT_MIN_RELATIVE_SIZE,
                   help="minimum |D|/|R| for an overlap region (default: %(default)s)")


def _add_policy_config(p) -> None:
    p.add_argument("--policy-config", metavar="FILE",
                   help="JSON with 'transport' (order, num_projections, rng_seed, exact_cutoff), "
                        "'weight_threshold', 'depth_tolerance', 'min_overlap'")


def _add_selection(p) -> None:
    p.add_argument("--policy", choices=POLICIES, default="viewpcl", help="(default: %(default)s)")
    p.add_argument("--budget", type=float, default=DEFAULT_K, metavar="K",
                   help="image-equivalents selected per round (default: K=%(default)s)")
    p.add_argument("--budget-mode", choices=("pixels", "superpixels"), default="pixels",
                   help="count the budget in pixels or superpixels (default: %(default)s)")
    p.add_argument("--min-projection-overlap", type=float, default=DEFAULT_MIN_PROJECTION_OVERLAP,
                   help="overlap threshold for removing neighbours of a selection (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default: %(default)s)")
    p.add_argument("--out", help="output file (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="viewpcl",
        description="Multi-view active learning for semantic segmentation with "
                    "point-cloud transport inconsistency scores.",
        epilog=(
            "defaults:\n"
            f"  K={DEFAULT_K} image-equivalents per round\n"
            f"  seed fraction {DEFAULT_SEED_FRACTION}\n"
            f"  S={DEFAULT_SUPERPIXELS} superpixels per image"
        ),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("validate", help="check a bundle's manifest and rasters")
    p.add_argument("bundle")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("superpixels", help="(re)generate grid superpixels")
    p.add_argument("bundle")
    p.add_argument("--count", type=int, default=DEFAULT_SUPERPIXELS,
                   help="superpixels per image (default: S=%(default)s)")
    p.set_defaults(func=cmd_superpixels)

    p = sub.add_parser("overlaps", help="precompute and cache overlap regions")
    p.add_argument("bundle")
    _add_geometry(p)
    p.set_defaults(func=cmd_overlaps)

    p = sub.add_parser("score", help="emit the per-superpixel score table")
    p.add_argument("bundle")
    _add_policy_config(p)
    _add_geometry(p)
    p.add_argument("--format", choices=("csv", "json", "both"), default="csv")
    p.add_argument("--out", help="output file, or prefix with --format both (default: stdout)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("select", help="select one batch of superpixels from the stored predictions")
    p.add_argument("bundle")
    _add_policy_config(p)
    _add_geometry(p)
    _add_selection(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("simulate", help="run active-learning rounds against a probability provider")
    p.add_argument("bundle")
    p.add_argument("--rounds", type=int, default=1, help="(default: %(default)s)")
    p.add_argument("--seed-fraction", type=float, default=DEFAULT_SEED_FRACTION,
                   help="fraction of images labeled up front (default: %(default)s)")
    p.add_argument("--provider", choices=("auto", "static", "synthetic"), default="auto",
                   help="'synthetic' needs ground-truth labels; 'auto' picks it when present")
    p.add_argument("--provider-noise", type=float, default=0.2, help="(default: %(default)s)")
    _add_policy_config(p)
    _add_geometry(p)
    _add_selection(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("synth", help="write a synthetic scene bundle")
    p.add_argument("--spec", metavar="FILE", help="JSON scene spec (default layout when omitted)")
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "rounds", 1) < 1:
        parser.error("--rounds must be >= 1")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except ViewPCLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        # configuration values rejected by the library (e.g. a seed fraction outside (0, 1))
        parser.error(str(exc))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
