"""Operator surface: synth, match, eval, bench, and validate subcommands.

Exit codes are a stable contract: 0 success, 1 runtime failure, 2 usage or
configuration error. Every command writes a run manifest sufficient to
reproduce it (inputs hashed, effective config echoed, seeds recorded).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dataset_io import (
    AnnotationSet,
    DetectionRecord,
    FeatureFileError,
    InstanceRecord,
    SchemaError,
    read_annotations,
    read_feature_file,
    load_mask,
    write_annotations,
)
from .evaluation import Detection, GroundTruth, evaluate
from .geometry import Mask, min_bounding_square
from .manifest import RunManifest
from .matching import (
    build_similarity_matrix,
    rank_select,
    stable_matching,
    threshold_filter,
    to_detections,
)
from .plots import render_bench_figure, render_pr_figure, write_pr_series_csv, write_report_csv
from .synth import ConfigError, SynthConfig, generate_dataset, load_asset_catalog


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get("INSDET_THREADS", "1")))
    except ValueError:
        return 1


def _parse_range(text: str, caster):
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected MIN,MAX, got {text!r}")
    return caster(parts[0]), caster(parts[1])


def _load_synth_config(args) -> SynthConfig:
    overrides = {}
    if args.count_range:
        overrides["count_min"], overrides["count_max"] = args.count_range
    if args.scale_range:
        overrides["scale_min"], overrides["scale_max"] = args.scale_range
    if args.blend_modes:
        overrides["blend_modes"] = tuple(args.blend_modes.split(","))
    if args.output_size:
        w, h = args.output_size
        overrides["output_width"], overrides["output_height"] = int(w), int(h)
    if args.config:
        return SynthConfig.from_file(args.config, **overrides)
    cfg = SynthConfig(**overrides) if overrides else SynthConfig()
    return cfg.validate()


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    config = _load_synth_config(args)
    assets_dir = Path(args.assets)
    backgrounds_dir = Path(args.backgrounds)
    if not assets_dir.is_dir():
        raise FileNotFoundError(f"assets directory not found: {assets_dir}")
    if not backgrounds_dir.is_dir():
        raise FileNotFoundError(f"backgrounds directory not found: {backgrounds_dir}")
    assets = load_asset_catalog(assets_dir)
    backgrounds = sorted(
        p for p in backgrounds_dir.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg")
    )
    manifest = RunManifest("synth", sys.argv[1:], config=config.to_dict(), master_seed=args.seed)
    start = time.perf_counter()
    generate_dataset(
        config,
        assets,
        backgrounds,
        args.count,
        args.out,
        master_seed=args.seed,
        workers=args.workers,
    )
    manifest.stage_seconds["synth"] = time.perf_counter() - start
    manifest.write(Path(args.out) / "run_manifest.json")
    print(f"wrote {args.count} scenes to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# match
# ---------------------------------------------------------------------------

def _group_profiles(vectors):
    profiles: dict[str, list] = {}
    for v in vectors:
        inst = v.source_id.split("/", 1)[0]
        profiles.setdefault(inst, []).append(v)
    return profiles


def run_matching(
    proposal_set: AnnotationSet,
    proposal_feats,
    profile_feats,
    algo: str,
    tau: float,
    strict: bool = False,
) -> AnnotationSet:
    """Match every image's proposals against the instance catalog."""
    profiles = _group_profiles(profile_feats)
    feats_by_image: dict[str, list] = {}
    for v in proposal_feats:
        image_id = v.source_id.split("/", 1)[0]
        feats_by_image.setdefault(image_id, []).append(v)
    boxes = {
        f"{p.image_id}/{p.proposal_id}": p.box for p in proposal_set.proposals
    }
    missing = sorted(
        f"{p.image_id}/{p.proposal_id}"
        for p in proposal_set.proposals
        if f"{p.image_id}/{p.proposal_id}" not in {v.source_id for v in proposal_feats}
    )
    if missing:
        raise SchemaError("missing_feature", f"proposals without features: {missing[:5]}")

    out = AnnotationSet()
    out.images = list(proposal_set.images)
    out.instances = [InstanceRecord(iid, iid) for iid in sorted(profiles)]
    for image in proposal_set.images:
        feats = feats_by_image.get(image.id)
        if not feats:
            continue
        matrix = threshold_filter(build_similarity_matrix(feats, profiles), tau)
        if matrix.scores.size == 0:
            continue
        result = stable_matching(matrix) if algo == "stable" else rank_select(matrix, strict)
        for instance_id, box, score in to_detections(result, boxes):
            out.detections.append(DetectionRecord(image.id, instance_id, box, score))
    out.detections.sort(key=lambda d: (d.image_id, -d.score, d.instance_id))
    return out


def cmd_match(args) -> int:
    for path in (args.proposals, args.proposal_feats, args.profile_feats):
        if not Path(path).is_file():
            raise FileNotFoundError(f"input not found: {path}")
    proposal_set = read_annotations(args.proposals)
    proposal_feats = read_feature_file(args.proposal_feats)
    profile_feats = read_feature_file(args.profile_feats)
    if proposal_feats[0].dim != profile_feats[0].dim:
        raise SchemaError(
            "dim_mismatch",
            f"feature dims differ: proposals {proposal_feats[0].dim}, "
            f"profiles {profile_feats[0].dim}",
        )
    manifest = RunManifest(
        "match",
        sys.argv[1:],
        config={
            "algorithm": args.algo,
            "tau": args.tau,
            "strict_rank_select": args.strict,
            "tie_break": "similarity desc, then (proposal_id, instance_id) asc",
        },
    )
    for path in (args.proposals, args.proposal_feats, args.profile_feats):
        manifest.add_input(path)
    start = time.perf_counter()
    detections = run_matching(
        proposal_set, proposal_feats, profile_feats, args.algo, args.tau, args.strict
    )
    manifest.stage_seconds["match"] = time.perf_counter() - start
    write_annotations(args.out, detections)
    manifest.write(Path(args.out).with_suffix(".manifest.json"))
    print(f"wrote {len(detections.detections)} detections to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _to_eval_inputs(gt_set: AnnotationSet, det_set: AnnotationSet):
    tags = {im.id: im.scene_tag for im in gt_set.images}
    gts = [
        GroundTruth(a.image_id, a.instance_id, a.box, tags.get(a.image_id, "easy"))
        for a in gt_set.annotations
    ]
    dets = [
        Detection(d.image_id, d.instance_id, d.box, d.score) for d in det_set.detections
    ]
    catalog = gt_set.instance_ids()
    return dets, gts, catalog


def cmd_eval(args) -> int:
    for path in (args.detections, args.ground_truth):
        if not Path(path).is_file():
            raise FileNotFoundError(f"input not found: {path}")
    det_set = read_annotations(args.detections)
    gt_set = read_annotations(args.ground_truth)
    dets, gts, catalog = _to_eval_inputs(gt_set, det_set)

    manifest = RunManifest("eval", sys.argv[1:], config={"ar_grid": args.ar_grid})
    manifest.add_input(args.detections)
    manifest.add_input(args.ground_truth)
    start = time.perf_counter()
    report = evaluate(dets, gts, catalog, ar_grid=args.ar_grid)
    manifest.stage_seconds["eval"] = time.perf_counter() - start

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    scaled = {
        "ap": {k: v * 100.0 for k, v in report.ap.items()},
        "ap50": report.ap50 * 100.0,
        "ap75": report.ap75 * 100.0,
        "ar": {mk: {k: v * 100.0 for k, v in row.items()} for mk, row in report.ar.items()},
        "ar_grid": report.ar_grid,
        "num_images": len(gt_set.images),
        "num_ground_truth": len(gts),
        "num_detections": len(dets),
    }
    (out_dir / "report.json").write_text(
        json.dumps(scaled, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    write_report_csv(out_dir / "report.csv", {k: v * 100.0 for k, v in report.flat().items()})
    if args.plot:
        write_pr_series_csv(out_dir / "pr_curves.csv", report.pr_curves)
        render_pr_figure(
            out_dir / "pr_curves.svg",
            report.pr_curves,
            label=f"AP50={report.ap50 * 100.0:.2f}",
        )
    manifest.write(out_dir / "run_manifest.json")
    print(f"AP {scaled['ap']['avg']:.2f}  AP50 {scaled['ap50']:.2f}  AP75 {scaled['ap75']:.2f}")
    return 0


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def cmd_bench(args) -> int:
    repeats = max(3, args.repeats)
    rows = []
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("bench", sys.argv[1:], config={"repeats": repeats})

    if args.stage == "synth":
        config = _load_synth_config(args)
        assets = load_asset_catalog(args.assets)
        backgrounds = sorted(
            p
            for p in Path(args.backgrounds).iterdir()
            if p.suffix.lower() in (".png", ".jpg", ".jpeg")
        )
        times = []
        for rep in range(repeats):
            start = time.perf_counter()
            generate_dataset(
                config, assets, backgrounds, args.count, out_dir / f"rep{rep}", master_seed=args.seed
            )
            times.append((time.perf_counter() - start) / args.count)
        rows.append({"stage": "synth", "seconds_per_image": float(np.mean(times)), "ap": ""})
    elif args.stage == "match":
        proposal_set = read_annotations(args.proposals)
        proposal_feats = read_feature_file(args.proposal_feats)
        profile_feats = read_feature_file(args.profile_feats)
        n_images = max(1, len(proposal_set.images))
        times = []
        for _ in range(repeats):
            start = time.perf_counter()
            run_matching(proposal_set, proposal_feats, profile_feats, args.algo, args.tau)
            times.append((time.perf_counter() - start) / n_images)
        rows.append({"stage": "match", "seconds_per_image": float(np.mean(times)), "ap": ""})
    else:  # eval
        det_set = read_annotations(args.detections)
        gt_set = read_annotations(args.ground_truth)
        dets, gts, catalog = _to_eval_inputs(gt_set, det_set)
        n_images = max(1, len(gt_set.images))
        times = []
        report = None
        for _ in range(repeats):
            start = time.perf_counter()
            report = evaluate(dets, gts, catalog, with_pr=False)
            times.append((time.perf_counter() - start) / n_images)
        rows.append(
            {
                "stage": "eval",
                "seconds_per_image": float(np.mean(times)),
                "ap": f"{report.ap['avg'] * 100.0:.2f}",
            }
        )

    with open(out_dir / "bench.csv", "w", encoding="utf-8") as fh:
        fh.write("stage,seconds_per_image,ap\n")
        for row in rows:
            fh.write(f"{row['stage']},{row['seconds_per_image']:.6f},{row['ap']}\n")
    if args.plot:
        render_bench_figure(out_dir / "bench.svg", rows)
    manifest.stage_seconds.update({r["stage"]: r["seconds_per_image"] for r in rows})
    manifest.write(out_dir / "run_manifest.json")
    for row in rows:
        print(f"{row['stage']}: {row['seconds_per_image']:.4f} s/image  AP={row['ap'] or 'n/a'}")
    return 0


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def validate_path(path: Path, messages: list[str]) -> bool:
    """Validate one artifact; append warnings to ``messages``; return ok."""
    if path.suffix == ".idfv" or path.suffix == ".bin":
        read_feature_file(path)
        return True
    records = read_annotations(path)
    sizes = {im.id: (im.width, im.height) for im in records.images}
    for p in records.proposals:
        if p.mask_file is None or p.square_crop is None:
            messages.append(f"warning: proposal {p.proposal_id!r} lacks mask or square crop")
            continue
        mask_path = path.parent / p.mask_file
        if not mask_path.is_file():
            raise SchemaError("missing_mask", f"mask file not found: {mask_path}")
        mask = Mask(load_mask(mask_path))
        width, height = sizes[p.image_id]
        expected = min_bounding_square(mask, width, height)
        got = p.square_crop
        if any(
            abs(a - b) > 1e-6
            for a, b in zip(expected.as_tuple(), got.as_tuple())
        ):
            raise SchemaError(
                "bad_square_crop",
                f"proposal {p.proposal_id!r}: square crop {got.as_tuple()} does not "
                f"match the minimum bounding square {expected.as_tuple()}",
            )
    return True


def cmd_validate(args) -> int:
    messages: list[str] = []
    for raw in args.paths:
        path = Path(raw)
        if not path.is_file():
            raise FileNotFoundError(f"input not found: {path}")
        validate_path(path, messages)
        print(f"ok: {path}")
    for msg in messages:
        print(msg)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_synth_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML synthesis config file")
    p.add_argument(
        "--count-range", type=lambda s: _parse_range(s, int), help="objects per scene, MIN,MAX"
    )
    p.add_argument(
        "--scale-range", type=lambda s: _parse_range(s, float), help="paste scale range, MIN,MAX"
    )
    p.add_argument("--blend-modes", help="comma-separated subset of gaussian,motion,box,naive")
    p.add_argument(
        "--output-size", type=lambda s: _parse_range(s, int), help="canvas size, WIDTH,HEIGHT"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="insdet", description=__doc__)
    parser.add_argument("--version", action="version", version=f"insdet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cut-paste dataset")
    _add_synth_config_flags(p)
    p.add_argument("--assets", required=True, help="RGBA profile crops, <instance_id>/<view>.png")
    p.add_argument("--backgrounds", required=True, help="background image directory")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True, help="number of scenes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=_default_workers())
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("match", help="match proposal features to instance profiles")
    p.add_argument("--proposals", required=True, help="proposal table (annotation schema)")
    p.add_argument("--proposal-feats", required=True)
    p.add_argument("--profile-feats", required=True)
    p.add_argument("--algo", choices=("rank-select", "stable"), default="stable")
    p.add_argument("--tau", type=float, default=0.3, help="similarity threshold")
    p.add_argument("--strict", action="store_true", help="rank-select also removes the instance")
    p.add_argument("--out", required=True, help="detections file to write")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("eval", help="evaluate detections against ground truth")
    p.add_argument("--detections", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--ar-grid", choices=("literal", "coco"), default="literal")
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--plot", action="store_true", help="emit PR series and vector figure")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="time a pipeline stage")
    p.add_argument("--stage", choices=("synth", "match", "eval"), required=True)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out", required=True)
    p.add_argument("--plot", action="store_true")
    _add_synth_config_flags(p)
    p.add_argument("--assets")
    p.add_argument("--backgrounds")
    p.add_argument("--count", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--proposals")
    p.add_argument("--proposal-feats")
    p.add_argument("--profile-feats")
    p.add_argument("--algo", choices=("rank-select", "stable"), default="stable")
    p.add_argument("--tau", type=float, default=0.3)
    p.add_argument("--detections")
    p.add_argument("--ground-truth")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("validate", help="validate annotation, proposal, and feature files")
    p.add_argument("paths", nargs="+")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SchemaError, FeatureFileError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
