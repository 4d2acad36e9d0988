"""Command-line entry point: every pipeline stage as a subcommand plus the
review service.

Exit codes: 0 success, 1 domain error (one structured JSON line on stderr),
2 usage error (argparse).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__
from .elements import MapClass, PerceptionWindow
from .errors import MapweldError
from .metrics import ApThresholds, evaluate, evaluate_per_cell
from .synth import ScenarioKind

LOG = logging.getLogger("mapweld")


class _JsonFormatter(logging.Formatter):
    def format(self, record):
        entry = {"level": record.levelname.lower(), "msg": record.getMessage()}
        return json.dumps(entry, separators=(",", ":"))


def _setup_logging(verbose: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    if verbose:
        handler.setFormatter(_JsonFormatter())
        level = logging.INFO
    else:
        handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
        level = logging.WARNING
    logging.basicConfig(level=level, handlers=[handler], force=True)


def _grid_stem(path: Path) -> Path:
    """A grid location is a directory holding <stem>.grid.json; stem is 'grid'."""
    path = Path(path)
    if path.suffix == "":
        return path / "grid"
    return path


def _cmd_synth(args) -> int:
    from .fileio import save_frames, save_map
    from .synth import NoiseSpec, ScenarioKind, ScenarioSpec, generate_scenario, simulate_frames

    spec = ScenarioSpec(
        kind=ScenarioKind(args.scenario),
        length=args.length,
        radius=args.radius,
        lanes_each_way=args.lanes,
        half_width=args.half_width,
    )
    gt_map, drive = generate_scenario(spec)
    save_map(gt_map, args.out_gt)
    LOG.info(f"wrote ground truth with {len(gt_map.elements)} elements to {args.out_gt}")
    if args.out_frames:
        noise = NoiseSpec(
            point_sigma=args.noise_sigma,
            dropout_prob=args.dropout,
            spurious_rate=args.spurious,
            seed=args.seed,
        )
        frames = simulate_frames(gt_map, drive, step=args.step, noise=noise)
        save_frames(frames, args.out_frames)
        LOG.info(f"wrote {len(frames)} frames to {args.out_frames}")
    return 0


def _cmd_label(args) -> int:
    from .autolabel import LaneSpec, auto_label
    from .fileio import load_pointcloud, load_poses, save_map

    poses = load_poses(args.poses)
    cloud = load_pointcloud(args.cloud)
    vmap = auto_label(
        poses,
        cloud,
        spec=LaneSpec(half_width=args.half_width),
        dedup_distance=args.dedup,
        smooth_window=args.smooth,
        tile_size=args.tile_size,
        seed=args.seed,
    )
    save_map(vmap, args.out)
    LOG.info(f"labeled {len(vmap.elements)} elements from {len(poses)} poses")
    return 0


def _cmd_accumulate(args) -> int:
    from .fileio import load_frames
    from .grid import accumulate, save_grid

    frames = load_frames(args.frames, window=PerceptionWindow())
    grid = accumulate(frames, resolution=args.resolution)
    stem = _grid_stem(Path(args.out))
    stem.parent.mkdir(parents=True, exist_ok=True)
    save_grid(grid, stem)
    LOG.info(f"accumulated {len(frames)} frames into {grid.spec.width}x{grid.spec.height} grid")
    return 0


def _cmd_mask(args) -> int:
    from .grid import AccumulationGrid, load_grid, save_grid, threshold_mask

    grid = load_grid(_grid_stem(Path(args.grid)))
    mask = threshold_mask(grid, args.threshold)
    out_stem = Path(args.out) / "mask" if Path(args.out).suffix == "" else Path(args.out)
    out_stem.parent.mkdir(parents=True, exist_ok=True)
    save_grid(AccumulationGrid(spec=mask.spec, counts=mask.bits.astype("int32")), out_stem)
    LOG.info(f"mask has {int(mask.bits.sum())} set cells at threshold {args.threshold}")
    return 0


def _cmd_extract(args) -> int:
    from .fileio import save_map
    from .grid import load_grid, threshold_mask
    from .skeleton import extract_lines, skeletonize

    grid = load_grid(_grid_stem(Path(args.grid)))
    mask = threshold_mask(grid, args.threshold)
    vmap = extract_lines(
        skeletonize(mask), min_length=args.min_length, simplify_tol=args.simplify
    )
    save_map(vmap, args.out)
    LOG.info(f"extracted {len(vmap.elements)} elements")
    return 0


def _report_obj(report, thresholds) -> dict:
    return {
        "per_class": {
            c.value: {
                **{f"{t:g}": report.per_class[c][t] for t in thresholds.thresholds},
                "mean": report.class_means[c],
            }
            for c in MapClass
        },
        "map": report.mean_ap,
        "map_at": {f"{t:g}": report.map_at(t) for t in thresholds.thresholds},
        "matches": {
            f"{t:g}": [
                {"pred": m.pred_id, "gt": m.gt_id, "distance": m.distance}
                for m in report.matches.get(t, [])
            ]
            for t in thresholds.thresholds
        },
    }


def _cmd_eval(args) -> int:
    from .fileio import load_map

    pred = load_map(args.pred)
    gt = load_map(args.gt)
    thresholds = ApThresholds()
    report = evaluate(pred, gt, thresholds)
    obj = _report_obj(report, thresholds)
    if args.per_cell is not None:
        cells, vacuous = evaluate_per_cell(pred, gt, cell_size=args.per_cell, thresholds=thresholds)
        obj["cells"] = {
            c.cell_id: {
                "rect": list(c.rect),
                "map": c.cell_map,
                **_report_obj(c.report, thresholds),
            }
            for c in cells
        }
        obj["vacuous_cells"] = vacuous
    Path(args.out).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")
    LOG.info(f"mAP = {report.mean_ap:.4f}")
    return 0


def _cmd_flag(args) -> int:
    from .fileio import load_map
    from .updater import flag_cells, save_proposal

    new = load_map(args.new)
    existing = load_map(args.map)
    proposal = flag_cells(
        new, existing, update_threshold=args.threshold, cell_size=args.cell_size
    )
    save_proposal(proposal, args.out)
    LOG.info(f"flagged {len(proposal.cells)} cells below mAP {args.threshold}")
    return 0


def _cmd_decide(args) -> int:
    from .updater import Decision, decide, load_proposal, save_proposal

    proposal = load_proposal(args.proposal)
    decision = Decision.ACCEPTED if args.accept else Decision.REJECTED
    proposal = decide(proposal, args.cell, decision)
    save_proposal(proposal, args.proposal)
    LOG.info(f"cell {args.cell} -> {decision.value}")
    return 0


def _cmd_merge(args) -> int:
    from .fileio import load_map, save_map
    from .updater import Decision, decide, load_proposal, merge

    existing = load_map(args.map)
    new = load_map(args.new)
    proposal = load_proposal(args.proposal, base_map=existing)
    if args.accept_all or args.reject_all:
        decision = Decision.ACCEPTED if args.accept_all else Decision.REJECTED
        for cell in proposal.cells:
            proposal = decide(proposal, cell.cell_id, decision)
    result = merge(existing, new, proposal)
    save_map(result.merged, args.out)
    n_new = sum(1 for v in result.provenance.values() if v != "kept-old")
    LOG.info(f"merged map has {len(result.merged.elements)} elements ({n_new} new or stitched)")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .server import ServeState, create_app, mount_ui

    grid_stem = _grid_stem(Path(args.grid)) if args.grid else None
    state = ServeState(
        map_path=args.map,
        new_path=args.new,
        proposal_path=args.proposal,
        grid_stem=grid_stem,
    )
    app = create_app(state)
    if args.ui_dir:
        mount_ui(app, args.ui_dir)
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    except (OSError, SystemExit) as e:
        if isinstance(e, SystemExit) and not e.code:
            return 0
        print(
            json.dumps({"error": "startup", "message": f"cannot bind port {args.port}: {e}"}),
            file=sys.stderr,
        )
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mapweld",
        description="Weld frame-by-frame vector-map predictions into a maintained HD map.",
    )
    parser.add_argument("--version", action="version", version=f"mapweld {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="JSON logs on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scenario and frame log")
    p.add_argument("--scenario", required=True, choices=[k.value for k in ScenarioKind])
    p.add_argument("--length", type=float, default=None)
    p.add_argument("--radius", type=float, default=15.0)
    p.add_argument("--lanes", type=int, default=1)
    p.add_argument("--half-width", type=float, default=3.048)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--spurious", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=2.0)
    p.add_argument("--out-gt", required=True)
    p.add_argument("--out-frames")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("label", help="auto-label a 3D map from a pose trace and point cloud")
    p.add_argument("--poses", required=True)
    p.add_argument("--cloud", required=True)
    p.add_argument("--half-width", type=float, default=3.048)
    p.add_argument("--dedup", type=float, default=0.5)
    p.add_argument("--smooth", type=int, default=5)
    p.add_argument("--tile-size", type=float, default=20.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_label)

    p = sub.add_parser("accumulate", help="rasterize frames into the accumulation grid")
    p.add_argument("--frames", required=True)
    p.add_argument("--resolution", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_accumulate)

    p = sub.add_parser("mask", help="threshold the grid into a dense mask")
    p.add_argument("--grid", required=True)
    p.add_argument("--threshold", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_mask)

    p = sub.add_parser("extract", help="skeletonize and vectorize the thresholded grid")
    p.add_argument("--grid", required=True)
    p.add_argument("--threshold", type=int, default=3)
    p.add_argument("--min-length", type=float, default=2.0)
    p.add_argument("--simplify", type=float, default=0.25)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("eval", help="Chamfer-AP evaluation of a map against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--per-cell", type=float, nargs="?", const=30.0, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("flag", help="flag stale 30 m cells against the existing map")
    p.add_argument("--new", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--threshold", type=float, default=0.3)
    p.add_argument("--cell-size", type=float, default=30.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_flag)

    p = sub.add_parser("decide", help="record one accept/reject decision in a proposal")
    p.add_argument("--proposal", required=True)
    p.add_argument("--cell", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--accept", action="store_true")
    group.add_argument("--reject", action="store_true")
    p.set_defaults(func=_cmd_decide)

    p = sub.add_parser("merge", help="merge accepted cells into a new map")
    p.add_argument("--map", required=True)
    p.add_argument("--new", required=True)
    p.add_argument("--proposal", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--accept-all", action="store_true")
    group.add_argument("--reject-all", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_merge)

    p = sub.add_parser("serve", help="host the review API (and optionally the UI)")
    p.add_argument("--map", required=True)
    p.add_argument("--new", required=True)
    p.add_argument("--proposal", required=True)
    p.add_argument("--grid")
    p.add_argument("--ui-dir")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.verbose)
    try:
        return args.func(args)
    except MapweldError as e:
        print(
            json.dumps({"error": type(e).__name__, "message": str(e)}),
            file=sys.stderr,
        )
        return 1
    except OSError as e:
        print(
            json.dumps({"error": "IoError", "message": str(e)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
