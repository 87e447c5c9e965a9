"""Frame discovery and the decode -> mask -> segment -> fuse -> eval runner.

Dataset layout, one directory per sequence (a root may hold several)::

    calib.txt          fx fy cx cy width height
    poses.txt          absolute camera-to-world [R|t] per frame; frame i's
                       flow points to frame i+1, so pose i+1 must exist
    image/<id>.png     RGB frame
    depth/<id>.png     network depth, 16-bit meters*256 (used without logits)
    logits/<id>.bin    multichannel logits, decoded to network depth
    flow/<id>.flo      flow from frame i to frame i+1
    vo/<id>.txt        sparse VO points
    gt/<id>.png        ground-truth depth
    manifest.json      optional {"frames": {"<id>": {"image": "rel/path", ...}}}

Frame ids are taken from ``image/`` plus any manifest entries. Outputs go to
``<out>/<sequence>/{fused,mask,segments}/<id>.png`` with ``metrics.tsv`` and
``report.json`` at the top level; wall-clock timings are kept apart in
``timings.json`` so the reports themselves are reproducible.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .config import Config
from .depth_codec import adapt_bins_to_camera, decode_multichannel, decode_sigmoid
from .errors import DepthFuseError, InvalidSpec, NoValidPixels, ParseError, ShapeMismatch
from .flow_mask import build_static_mask, epipolar_deviation
from .fusion import SparseDepthMap, fuse
from .geometry import CameraIntrinsics, RelativePose, fundamental_from_pose
from .metrics import METRIC_NAMES, DepthEvalResult, aggregate, evaluate
from .slic3d import rgb_to_lab, segment

log = logging.getLogger(__name__)

STAGES = ("decode", "mask", "segment", "fuse", "eval")
INPUT_KINDS = {
    "image": ("image", ".png"),
    "depth": ("depth", ".png"),
    "logits": ("logits", ".bin"),
    "flow": ("flow", ".flo"),
    "vo": ("vo", ".txt"),
    "gt": ("gt", ".png"),
}


@dataclass
class FrameBundle:
    sequence: str
    frame_id: str
    image: Path
    depth: Path | None = None
    logits: Path | None = None
    flow: Path | None = None
    vo: Path | None = None
    gt: Path | None = None
    camera: CameraIntrinsics | None = None
    pose: RelativePose | None = None  # point transform to the next frame

    @property
    def key(self) -> str:
        return f"{self.sequence}/{self.frame_id}" if self.sequence else self.frame_id


@dataclass
class FrameReport:
    sequence: str
    frame_id: str
    stages: list = field(default_factory=list)
    network: DepthEvalResult | None = None
    fused: DepthEvalResult | None = None
    n_segments: int | None = None
    n_vo: int | None = None
    n_vo_dynamic: int | None = None
    timings: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        return {
            "sequence": self.sequence,
            "frame": self.frame_id,
            "stages": list(self.stages),
            "n_segments": self.n_segments,
            "n_vo": self.n_vo,
            "n_vo_dynamic": self.n_vo_dynamic,
            "network": self.network.to_dict() if self.network else None,
            "fused": self.fused.to_dict() if self.fused else None,
            "error": self.error,
        }


@dataclass
class PipelineReport:
    frames: list
    network: DepthEvalResult | None
    fused: DepthEvalResult | None

    @property
    def n_failed(self) -> int:
        return sum(not f.ok for f in self.frames)

    def to_dict(self) -> dict:
        return {
            "frames": [f.to_dict() for f in self.frames],
            "n_frames": len(self.frames),
            "n_failed": self.n_failed,
            "aggregate": {
                "network": self.network.to_dict() if self.network else None,
                "fused": self.fused.to_dict() if self.fused else None,
            },
        }

    def metrics_tsv(self) -> str:
        header = "\t".join(["sequence", "frame", "source", *METRIC_NAMES, "n_pixels"])
        rows = [header]
        for f in self.frames:
            for source, res in (("network", f.network), ("fused", f.fused)):
                if res is not None:
                    rows.append(f"{f.sequence}\t{f.frame_id}\t{source}\t{res.as_row()}")
        for source, res in (("network", self.network), ("fused", self.fused)):
            if res is not None:
                rows.append(f"ALL\tALL\t{source}\t{res.as_row()}")
        return "\n".join(rows) + "\n"


# --- discovery ------------------------------------------------------------------


def _is_sequence(path: Path) -> bool:
    return (path / "image").is_dir() or (path / "manifest.json").is_file()


def discover(root) -> list[FrameBundle]:
    """All frames under ``root``, either a sequence or a directory of sequences."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"{root}: dataset directory not found")
    if _is_sequence(root):
        return load_sequence(root, "")
    frames = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir() and _is_sequence(p)):
        frames.extend(load_sequence(sub, sub.name))
    if not frames:
        raise InvalidSpec(f"{root}: no sequences found (expected image/ or manifest.json)")
    return frames


def _read_manifest(seq_dir: Path) -> dict:
    path = seq_dir / "manifest.json"
    if not path.is_file():
        return {}
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path, exc.lineno) from None
    frames = data.get("frames", {}) if isinstance(data, dict) else None
    if not isinstance(frames, dict):
        raise InvalidSpec(f"{path}: 'frames' must map frame ids to path overrides")
    for fid, entry in frames.items():
        unknown = set(entry) - set(INPUT_KINDS)
        if unknown:
            raise InvalidSpec(f"{path}: frame {fid}: unknown keys {sorted(unknown)}")
    return frames


def load_sequence(seq_dir, name: str = "") -> list[FrameBundle]:
    seq_dir = Path(seq_dir)
    manifest = _read_manifest(seq_dir)
    ids = set(manifest)
    if (seq_dir / "image").is_dir():
        ids.update(p.stem for p in (seq_dir / "image").glob("*.png"))
    ids = sorted(ids)

    camera = io.load_calib(seq_dir / "calib.txt") if (seq_dir / "calib.txt").is_file() else None
    poses = io.load_pose_file(seq_dir / "poses.txt") if (seq_dir / "poses.txt").is_file() else None

    frames = []
    for fid in ids:
        paths = {}
        for kind, (sub, ext) in INPUT_KINDS.items():
            override = manifest.get(fid, {}).get(kind)
            if override is not None:
                paths[kind] = seq_dir / override
            else:
                p = seq_dir / sub / f"{fid}{ext}"
                paths[kind] = p if p.is_file() else None
        pose = None
        if poses is not None and fid.isdigit() and int(fid) + 1 < len(poses):
            i = int(fid)
            pose = io.relative_pose(poses[i + 1], poses[i])
        image = paths.pop("image") or seq_dir / "image" / f"{fid}.png"
        frames.append(FrameBundle(name, fid, image, camera=camera, pose=pose, **paths))
    return frames


# --- per-frame stages -------------------------------------------------------------


def decode_logits_file(path, cfg: Config, camera: CameraIntrinsics | None = None) -> np.ndarray:
    """Network depth from a logits file; one channel uses the sigmoid decode."""
    logits = io.load_logits(path)
    d = cfg.depth
    if logits.shape[-1] == 1:
        return decode_sigmoid(logits[..., 0], d.d_min, d.d_max)
    bins = cfg.bins()
    if d.f_base is not None:
        if camera is None:
            raise InvalidSpec("depth.f_base is set but no intrinsics are available")
        bins = adapt_bins_to_camera(bins, camera.fx, d.f_base)
    return decode_multichannel(logits, bins)


def static_mask_from_flow(flow: np.ndarray, camera: CameraIntrinsics, pose: RelativePose,
                          threshold: float) -> np.ndarray:
    F = fundamental_from_pose(camera, pose)
    return build_static_mask(epipolar_deviation(flow, F), threshold)


def drop_dynamic(vo: SparseDepthMap, static: np.ndarray) -> SparseDepthMap:
    if len(vo.depth) == 0:
        return vo
    keep = static[np.rint(vo.v).astype(int), np.rint(vo.u).astype(int)]
    return SparseDepthMap(vo.u[keep], vo.v[keep], vo.depth[keep])


def _network_depth(bundle: FrameBundle, cfg: Config, report: FrameReport) -> np.ndarray:
    if bundle.logits is not None:
        t0 = time.perf_counter()
        depth = decode_logits_file(bundle.logits, cfg, bundle.camera)
        report.timings["decode"] = time.perf_counter() - t0
        report.stages.append("decode")
    elif bundle.depth is not None:
        depth = io.load_depth_png(bundle.depth)
    else:
        raise InvalidSpec("frame has neither logits nor network depth")
    if not np.all(np.isfinite(depth) & (depth > 0)):
        raise NoValidPixels("network depth has invalid pixels")
    return np.clip(depth, cfg.depth.d_min, cfg.depth.d_max)


def process_frame(bundle: FrameBundle, cfg: Config, out_dir) -> FrameReport:
    """Run every stage the frame has inputs for; errors end up in the report."""
    report = FrameReport(bundle.sequence, bundle.frame_id)
    out = Path(out_dir) / bundle.sequence if bundle.sequence else Path(out_dir)
    try:
        image = io.load_image(bundle.image)
        net = _network_depth(bundle, cfg, report)
        if net.shape != image.shape[:2]:
            raise ShapeMismatch(f"network depth {net.shape} vs image {image.shape[:2]}")
        H, W = net.shape

        static = None
        if bundle.flow is not None and bundle.camera is not None and bundle.pose is not None:
            t0 = time.perf_counter()
            flow = io.load_flow(bundle.flow)
            if flow.shape[:2] != (H, W):
                raise ShapeMismatch(f"flow {flow.shape[:2]} vs image {(H, W)}")
            static = static_mask_from_flow(flow, bundle.camera, bundle.pose, cfg.mask.threshold_px)
            report.timings["mask"] = time.perf_counter() - t0
            io.save_mask_png(out / "mask" / f"{bundle.frame_id}.png", static)
            report.stages.append("mask")

        t0 = time.perf_counter()
        segments = segment(rgb_to_lab(image), net, cfg.slic_params())
        report.timings["segment"] = time.perf_counter() - t0
        report.n_segments = segments.n_segments
        io.save_label_png(out / "segments" / f"{bundle.frame_id}.png", segments.labels)
        report.stages.append("segment")

        fused = net
        if bundle.vo is not None:
            vo = io.load_vo_points(bundle.vo, H, W)
            if static is not None:
                kept = drop_dynamic(vo, static)
                report.n_vo_dynamic = len(vo.depth) - len(kept.depth)
                vo = kept
            report.n_vo = len(vo.depth)
            d = cfg.depth
            result = fuse(image, np.log(net), vo, cfg.slic_params(), cfg.fusion_weights(),
                          d.d_min, d.d_max, segments=segments)
            report.timings["optimize"] = result.timings["optimize"]
            fused = result.depth
            report.stages.append("fuse")
        io.save_depth_png(out / "fused" / f"{bundle.frame_id}.png", fused)

        if bundle.gt is not None:
            gt = io.load_depth_png(bundle.gt)
            ecfg = cfg.eval_config()
            report.network = evaluate(net, gt, cfg=ecfg)
            report.fused = evaluate(fused, gt, cfg=ecfg)
            report.stages.append("eval")
    except (DepthFuseError, OSError, ValueError) as exc:
        report.error = f"{type(exc).__name__}: {exc}"
        log.warning("frame %s failed: %s", bundle.key, report.error)
    return report


def _aggregate(results) -> DepthEvalResult | None:
    results = [r for r in results if r is not None]
    return aggregate(results) if results else None


def run_pipeline(cfg: Config, frames, out_dir, jobs: int = 1) -> PipelineReport:
    """Process ``frames`` (in a pool when ``jobs > 1``) and write the reports."""
    frames = list(frames)
    if not frames:
        raise InvalidSpec("no frames to process")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if jobs > 1 and len(frames) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(process_frame, frames, [cfg] * len(frames),
                                    [out_dir] * len(frames)))
    else:
        reports = [process_frame(f, cfg, out_dir) for f in frames]

    report = PipelineReport(
        reports,
        _aggregate(r.network for r in reports),
        _aggregate(r.fused for r in reports),
    )
    write_reports(report, out_dir)
    return report


def write_reports(report: PipelineReport, out_dir) -> None:
    out_dir = Path(out_dir)
    (out_dir / "metrics.tsv").write_text(report.metrics_tsv())
    (out_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    timings = {f"{f.sequence}/{f.frame_id}".lstrip("/"): f.timings for f in report.frames}
    (out_dir / "timings.json").write_text(json.dumps(timings, indent=2, sort_keys=True) + "\n")


# --- synthetic datasets -----------------------------------------------------------


def write_synth_dataset(out_dir, n_frames: int = 3, seed: int = 0, width: int = 320,
                        height: int = 96, vo_noise: float = 0.05, vo_dropout: float = 0.5,
                        vo_density: float = 0.05, baseline: float = 0.5,
                        dynamic_motion=None, logits_bins=None) -> Path:
    """Write ``n_frames`` independent benchmark scenes in the dataset layout.

    Frame ``i`` uses scene seed ``seed + i``; the absolute poses translate
    by ``i * baseline`` along x, which is exactly the ego-motion each scene
    was rendered with. With ``logits_bins`` the network depth is also stored
    as logits that decode back to it.
    """
    from .synth import corrupt, render, standard_scene

    if n_frames < 1:
        raise InvalidSpec("need at least one frame")
    out = Path(out_dir)
    poses = []
    camera = None
    for i in range(n_frames):
        spec = standard_scene(seed + i, width, height, vo_noise=vo_noise, vo_dropout=vo_dropout,
                              vo_density=vo_density, baseline=baseline,
                              dynamic_motion=dynamic_motion)
        scene = render(spec)
        net, vo = corrupt(scene)
        fid = f"{i:06d}"
        io.save_image(out / "image" / f"{fid}.png", scene.image_a)
        io.save_image(out / "image_next" / f"{fid}.png", scene.image_b)
        io.save_depth_png(out / "depth" / f"{fid}.png", net)
        io.save_depth_png(out / "gt" / f"{fid}.png", scene.depth)
        io.save_flow(out / "flow" / f"{fid}.flo", scene.flow)
        io.save_vo_points(out / "vo" / f"{fid}.txt", vo)
        if logits_bins is not None:
            from .depth_codec import depth_to_logits

            io.save_logits(out / "logits" / f"{fid}.bin", depth_to_logits(net, logits_bins))
        camera = spec.camera
    for i in range(n_frames + 1):
        poses.append(RelativePose(np.eye(3), np.array([i * baseline, 0.0, 0.0])))
    io.save_calib(out / "calib.txt", camera)
    io.save_pose_file(out / "poses.txt", poses)
    (out / "seed.txt").write_text(f"{seed}\n")
    return out
