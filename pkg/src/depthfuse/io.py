"""File formats: depth/mask/label PNGs, VO points, poses, calibration, flow, logits."""

from __future__ import annotations

import struct
from pathlib import Path

import cv2
import numpy as np

from .errors import BadFormat, NotARotation, OutOfBounds, ParseError
from .fusion import SparseDepthMap
from .geometry import CameraIntrinsics, RelativePose, is_rotation, nearest_rotation

DEPTH_PNG_SCALE = 256.0
LOGITS_MAGIC = b"DLGT"
FLO_MAGIC = 202021.25
ROTATION_DRIFT_TOL = 1e-3


def _read_unchanged(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"{path}: no such file")
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise BadFormat(f"{path}: not a readable image")
    return img


def _write(path, img: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), img):
        raise OSError(f"{path}: could not write image")


# --- images -------------------------------------------------------------------


def load_image(path) -> np.ndarray:
    """8-bit RGB (or gray) PNG/JPEG as float RGB in ``[0, 1]``."""
    img = _read_unchanged(path)
    if img.dtype != np.uint8:
        raise BadFormat(f"{path}: expected an 8-bit image, got {img.dtype}")
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=-1)
    elif img.shape[2] == 4:
        img = cv2.cvtColor(img, cv2.COLOR_BGRA2RGB)
    else:
        img = cv2.cvtColor(img, cv2.COLOR_BGR2RGB)
    return img.astype(float) / 255.0


def save_image(path, rgb: np.ndarray) -> None:
    img = np.clip(np.rint(np.asarray(rgb) * 255.0), 0, 255).astype(np.uint8)
    _write(path, cv2.cvtColor(img, cv2.COLOR_RGB2BGR))


# --- depth / mask / labels ------------------------------------------------------


def load_depth_png(path) -> np.ndarray:
    """16-bit PNG with ``meters * 256``; raw 0 becomes NaN (invalid)."""
    raw = _read_unchanged(path)
    if raw.dtype != np.uint16 or raw.ndim != 2:
        raise BadFormat(f"{path}: expected a single-channel 16-bit PNG, got {raw.dtype} {raw.shape}")
    depth = raw.astype(float) / DEPTH_PNG_SCALE
    depth[raw == 0] = np.nan
    return depth


def save_depth_png(path, depth: np.ndarray) -> None:
    """Invalid (non-finite or non-positive) pixels are written as 0."""
    d = np.asarray(depth, dtype=float)
    raw = np.where(np.isfinite(d) & (d > 0), np.rint(d * DEPTH_PNG_SCALE), 0)
    _write(path, np.clip(raw, 0, 65535).astype(np.uint16))


def save_mask_png(path, static_mask: np.ndarray) -> None:
    _write(path, np.where(static_mask, 255, 0).astype(np.uint8))


def load_mask_png(path) -> np.ndarray:
    raw = _read_unchanged(path)
    if raw.dtype != np.uint8 or raw.ndim != 2:
        raise BadFormat(f"{path}: expected an 8-bit single-channel mask")
    return raw >= 128


def save_label_png(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    if labels.max(initial=0) > 65535 or labels.min(initial=0) < 0:
        raise BadFormat("labels do not fit a 16-bit PNG")
    _write(path, labels.astype(np.uint16))


def load_label_png(path) -> np.ndarray:
    raw = _read_unchanged(path)
    if raw.dtype != np.uint16 or raw.ndim != 2:
        raise BadFormat(f"{path}: expected a 16-bit label PNG")
    return raw.astype(np.int32)


# --- text formats ---------------------------------------------------------------


def _data_lines(path):
    """Yield ``(line_no, fields)`` for non-blank, non-comment lines (1-based)."""
    path = Path(path)
    with path.open() as fh:
        for no, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if text:
                yield no, text.split()


def _floats(path, no, fields, count):
    if len(fields) != count:
        raise ParseError(f"expected {count} values, got {len(fields)}", path, no)
    try:
        vals = [float(f) for f in fields]
    except ValueError as exc:
        raise ParseError(str(exc), path, no) from None
    if not all(np.isfinite(vals)):
        raise ParseError("non-finite value", path, no)
    return vals


def load_vo_points(path, height: int | None = None, width: int | None = None) -> SparseDepthMap:
    """``u v depth`` per line, ``#`` comments allowed.

    Points must lie on the image when its size is given; a repeated pixel
    keeps its nearest depth.
    """
    pts = []
    for no, fields in _data_lines(path):
        u, v, d = _floats(path, no, fields, 3)
        if not d > 0:
            raise ParseError(f"non-positive depth {d}", path, no)
        if height is not None and width is not None:
            if not (0 <= round(u) < width and 0 <= round(v) < height):
                raise OutOfBounds(f"{path}:{no}: point ({u}, {v}, {d}) outside {width}x{height}")
        pts.append((u, v, d))
    return SparseDepthMap.from_points(pts)


def save_vo_points(path, vo: SparseDepthMap) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write("# u v depth_m\n")
        for u, v, d in zip(vo.u, vo.v, vo.depth):
            fh.write(f"{float(u)!r} {float(v)!r} {float(d)!r}\n")


def load_pose_file(path) -> list[RelativePose]:
    """Row-major 3x4 ``[R|t]`` per line (KITTI odometry layout).

    Rotations drifting less than 1e-3 from orthonormal are projected onto the
    nearest rotation; anything further off is rejected.
    """
    poses = []
    for no, fields in _data_lines(path):
        vals = np.array(_floats(path, no, fields, 12)).reshape(3, 4)
        R = vals[:, :3]
        drift = max(np.max(np.abs(R @ R.T - np.eye(3))), abs(np.linalg.det(R) - 1.0))
        if drift > ROTATION_DRIFT_TOL:
            raise NotARotation(f"{path}:{no}: not a rotation (drift {drift:.3g})")
        if not is_rotation(R):
            R = nearest_rotation(R)
        poses.append(RelativePose(R, vals[:, 3]))
    return poses


def save_pose_file(path, poses) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for p in poses:
            M = np.hstack([p.rotation, p.translation[:, None]])
            fh.write(" ".join(repr(float(x)) for x in M.reshape(-1)) + "\n")


def relative_pose(p1: RelativePose, p2: RelativePose) -> RelativePose:
    """``inv(P1) @ P2`` for absolute camera-to-world poses: maps frame-2 points into frame 1."""
    return p1.inverse().compose(p2)


def load_calib(path) -> CameraIntrinsics:
    """Single data line ``fx fy cx cy width height``."""
    lines = list(_data_lines(path))
    if len(lines) != 1:
        no = lines[1][0] if len(lines) > 1 else None
        raise ParseError(f"expected exactly one calibration line, got {len(lines)}", path, no)
    no, fields = lines[0]
    fx, fy, cx, cy, w, h = _floats(path, no, fields, 6)
    if w != int(w) or h != int(h):
        raise ParseError("image size must be integral", path, no)
    return CameraIntrinsics(fx, fy, cx, cy, int(w), int(h))


def save_calib(path, K: CameraIntrinsics) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        "# fx fy cx cy width height\n"
        f"{K.fx!r} {K.fy!r} {K.cx!r} {K.cy!r} {K.width} {K.height}\n"
    )


# --- binary formats -------------------------------------------------------------


def load_flow(path) -> np.ndarray:
    """Middlebury ``.flo``: float32 magic 202021.25, int32 width, height, then (u, v) pairs."""
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise BadFormat(f"{path}: truncated flow header")
    magic, w, h = struct.unpack("<fii", data[:12])
    if magic != FLO_MAGIC:
        raise BadFormat(f"{path}: bad flow magic {magic}")
    expected = 12 + 8 * w * h
    if w <= 0 or h <= 0 or len(data) != expected:
        raise BadFormat(f"{path}: expected {expected} bytes for {w}x{h} flow, got {len(data)}")
    return np.frombuffer(data, dtype="<f4", offset=12).reshape(h, w, 2).astype(float)


def save_flow(path, flow: np.ndarray) -> None:
    flow = np.asarray(flow)
    h, w = flow.shape[:2]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(struct.pack("<fii", FLO_MAGIC, w, h) + flow.astype("<f4").tobytes())


def load_logits(path) -> np.ndarray:
    """Logits file: 16-byte header (magic ``DLGT``, uint32 H, W, N) then float32 ``H*W*N``.

    All little-endian; values row-major with the channel axis last.
    """
    data = Path(path).read_bytes()
    if len(data) < 16:
        raise BadFormat(f"{path}: truncated logits header")
    magic, h, w, n = struct.unpack("<4sIII", data[:16])
    if magic != LOGITS_MAGIC:
        raise BadFormat(f"{path}: bad logits magic {magic!r}")
    expected = 16 + 4 * h * w * n
    if len(data) != expected:
        raise BadFormat(f"{path}: expected {expected} bytes for {h}x{w}x{n} logits, got {len(data)}")
    arr = np.frombuffer(data, dtype="<f4", offset=16).reshape(h, w, n).astype(float)
    if not np.all(np.isfinite(arr)):
        raise BadFormat(f"{path}: non-finite logits")
    return arr


def save_logits(path, logits: np.ndarray) -> None:
    logits = np.asarray(logits)
    h, w, n = logits.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(struct.pack("<4sIII", LOGITS_MAGIC, h, w, n) + logits.astype("<f4").tobytes())
