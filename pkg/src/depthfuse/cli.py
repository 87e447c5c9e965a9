"""Command-line interface.

    depthfuse [--config FILE] [--jobs N] [--seed N] [--output PATH] <command> ...

``--output`` is a file for decode/mask/segment/fuse, a directory for synth
and run, and an optional report file for eval. Exit status is 0 on success,
2 when some frames failed, 1 on a fatal error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import Config
from .errors import DepthFuseError
from .flow_mask import build_static_mask, epipolar_deviation
from .fusion import SparseDepthMap, fuse
from .geometry import fundamental_from_pose
from .metrics import METRIC_NAMES, aggregate, evaluate
from .pipeline import decode_logits_file, discover, drop_dynamic, run_pipeline, write_synth_dataset
from .slic3d import SegmentLabels, rgb_to_lab, segment

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_PARTIAL = 2

log = logging.getLogger("depthfuse")


def _need_output(args) -> Path:
    if args.output is None:
        raise SystemExit(f"depthfuse {args.command}: --output is required")
    return Path(args.output)


def _pose(args):
    """Point transform from the frame to the next one, from --pose or --poses/--index."""
    if args.pose is not None:
        poses = io.load_pose_file(args.pose)
        if len(poses) != 1:
            raise DepthFuseError(f"{args.pose}: expected a single relative pose, got {len(poses)}")
        return poses[0]
    poses = io.load_pose_file(args.poses)
    if not 0 <= args.index < len(poses) - 1:
        raise DepthFuseError(f"{args.poses}: index {args.index} needs poses {args.index} and {args.index + 1}")
    return io.relative_pose(poses[args.index + 1], poses[args.index])


def cmd_decode(args, cfg: Config) -> int:
    camera = io.load_calib(args.calib) if args.calib else None
    depth = decode_logits_file(args.logits, cfg, camera)
    io.save_depth_png(_need_output(args), depth)
    return EXIT_OK


def cmd_mask(args, cfg: Config) -> int:
    camera = io.load_calib(args.calib)
    flow = io.load_flow(args.flow)
    dev = epipolar_deviation(flow, fundamental_from_pose(camera, _pose(args)))
    static = build_static_mask(dev, cfg.mask.threshold_px)
    io.save_mask_png(_need_output(args), static)
    print(f"static {int(static.sum())} dynamic {int((~static).sum())}")
    return EXIT_OK


def _write_stats(path, seg: SegmentLabels) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write("# id L a b x y mean_depth count\n")
        for k in range(seg.n_segments):
            L, a, b = seg.center_lab[k]
            x, y = seg.center_xy[k]
            fh.write(f"{k} {L:.6f} {a:.6f} {b:.6f} {x:.6f} {y:.6f} {seg.center_depth[k]:.6f} "
                     f"{int(seg.counts[k])}\n")


def cmd_segment(args, cfg: Config) -> int:
    image = io.load_image(args.image)
    depth = io.load_depth_png(args.depth)
    seg = segment(rgb_to_lab(image), depth, cfg.slic_params())
    out = _need_output(args)
    io.save_label_png(out, seg.labels)
    _write_stats(args.stats or out.with_suffix(".txt"), seg)
    print(f"segments {seg.n_segments}")
    return EXIT_OK


def cmd_fuse(args, cfg: Config) -> int:
    image = io.load_image(args.image)
    net = np.clip(io.load_depth_png(args.depth), cfg.depth.d_min, cfg.depth.d_max)
    H, W = net.shape
    vo = io.load_vo_points(args.vo, H, W) if args.vo else SparseDepthMap.empty()
    if args.mask:
        vo = drop_dynamic(vo, io.load_mask_png(args.mask))
    d = cfg.depth
    res = fuse(image, np.log(net), vo, cfg.slic_params(), cfg.fusion_weights(), d.d_min, d.d_max)
    io.save_depth_png(_need_output(args), res.depth)
    print(f"segments {res.segments.n_segments} vo {len(vo.depth)} "
          f"optimize_s {res.timings['optimize']:.4f}")
    return EXIT_OK


def _pairs(pred: Path, gt: Path):
    if pred.is_dir():
        files = sorted(pred.glob("*.png"))
        return [(p, gt / p.name) for p in files]
    return [(pred, gt)]


def cmd_eval(args, cfg: Config) -> int:
    ecfg = cfg.eval_config()
    rows = ["\t".join(["frame", *METRIC_NAMES, "n_pixels"])]
    results = []
    failed = 0
    for p, g in _pairs(Path(args.pred), Path(args.gt)):
        try:
            res = evaluate(io.load_depth_png(p), io.load_depth_png(g), cfg=ecfg)
        except (DepthFuseError, OSError) as exc:
            log.warning("%s: %s", p, exc)
            failed += 1
            continue
        results.append(res)
        rows.append(f"{p.stem}\t{res.as_row()}")
    if not results:
        raise DepthFuseError("nothing could be evaluated")
    rows.append(f"ALL\t{aggregate(results).as_row()}")
    text = "\n".join(rows) + "\n"
    sys.stdout.write(text)
    if args.output:
        Path(args.output).write_text(text)
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_synth(args, cfg: Config) -> int:
    motion = None if args.dynamic is None else tuple(args.dynamic)
    out = write_synth_dataset(
        _need_output(args), args.frames, args.seed, args.width, args.height,
        vo_noise=args.vo_noise, vo_dropout=args.vo_dropout, vo_density=args.vo_density,
        baseline=args.baseline, dynamic_motion=motion,
        logits_bins=cfg.bins() if args.logits else None,
    )
    print(f"wrote {args.frames} frames to {out}")
    return EXIT_OK


def cmd_run(args, cfg: Config) -> int:
    out = _need_output(args)
    report = run_pipeline(cfg, discover(args.dataset), out, jobs=args.jobs)
    for f in report.frames:
        status = "ok" if f.ok else f"FAILED {f.error}"
        print(f"{f.sequence}/{f.frame_id}".lstrip("/") + f" [{','.join(f.stages)}] {status}")
    for name, res in (("network", report.network), ("fused", report.fused)):
        if res is not None:
            print(f"{name}\t{res.as_row()}")
    return EXIT_PARTIAL if report.n_failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="depthfuse", description=__doc__.split("\n\n")[0])
    parser.add_argument("--config", type=Path, help="INI config file")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes for run")
    parser.add_argument("--seed", type=int, default=0, help="seed for synth")
    parser.add_argument("--output", "-o", help="output file or directory")
    parser.add_argument("--verbose", "-v", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decode", help="decode a logits file to a depth PNG")
    p.add_argument("logits", type=Path)
    p.add_argument("--calib", type=Path, help="intrinsics, needed when depth.f_base is set")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("mask", help="static/dynamic mask from flow and relative pose")
    p.add_argument("flow", type=Path)
    p.add_argument("--calib", type=Path, required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--pose", type=Path, help="file with one relative pose (frame -> next)")
    g.add_argument("--poses", type=Path, help="absolute pose file, used with --index")
    p.add_argument("--index", type=int, default=0)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("segment", help="depth-aware superpixels")
    p.add_argument("image", type=Path)
    p.add_argument("depth", type=Path)
    p.add_argument("--stats", type=Path, help="segment table (default: output with .txt)")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("fuse", help="fuse network depth with VO points")
    p.add_argument("image", type=Path)
    p.add_argument("depth", type=Path)
    p.add_argument("--vo", type=Path)
    p.add_argument("--mask", type=Path, help="static mask; VO on dynamic pixels is dropped")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", help="depth metrics for a PNG or a directory of PNGs")
    p.add_argument("pred", type=Path)
    p.add_argument("gt", type=Path)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--frames", type=int, default=3)
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=96)
    p.add_argument("--vo-noise", type=float, default=0.05)
    p.add_argument("--vo-dropout", type=float, default=0.5)
    p.add_argument("--vo-density", type=float, default=0.05)
    p.add_argument("--baseline", type=float, default=0.5)
    p.add_argument("--dynamic", type=float, nargs=2, metavar=("DU", "DV"),
                   help="pixel motion of the middle rectangle")
    p.add_argument("--logits", action="store_true", help="also write logits files")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="full pipeline over a dataset directory")
    p.add_argument("dataset", type=Path)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = Config.load(args.config) if args.config else Config()
        if args.jobs < 1:
            raise DepthFuseError("--jobs must be at least 1")
        return args.func(args, cfg)
    except (DepthFuseError, OSError, ValueError) as exc:
        print(f"depthfuse: error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
