"""Pinhole camera, rigid poses, two-view epipolar geometry and depth warping.

Conventions:
    * Pixel coordinates are ``(u, v)`` with ``u`` to the right, ``v`` down and
      the origin at the centre of the top-left pixel.
    * A :class:`RelativePose` maps points expressed in frame A (the base or
      target frame) into frame B (the source frame): ``X_b = R @ X_a + t``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateLine, InvalidSpec, NotARotation, ZeroBaseline

_ROT_TOL = 1e-9
# reprojection rounding can push exact border pixels a hair outside
_BORDER_EPS = 1e-6


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidSpec(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width < 1 or self.height < 1:
            raise InvalidSpec(f"image size must be positive, got {self.width}x{self.height}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidSpec(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image"
            )

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def inverse_matrix(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def flipped_horizontal(self) -> "CameraIntrinsics":
        """Intrinsics of the horizontally mirrored image."""
        return CameraIntrinsics(
            self.fx, self.fy, self.width - 1 - self.cx, self.cy, self.width, self.height
        )


@dataclass(frozen=True)
class RelativePose:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not is_rotation(R, _ROT_TOL):
            raise NotARotation("rotation must be orthonormal with det +1")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RelativePose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T) -> "RelativePose":
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3], T[:3, 3])

    def as_matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def inverse(self) -> "RelativePose":
        Rt = self.rotation.T
        return RelativePose(Rt, -Rt @ self.translation)

    def compose(self, other: "RelativePose") -> "RelativePose":
        """Pose equivalent to applying ``other`` first, then ``self``."""
        return RelativePose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Apply the pose to ``(..., 3)`` points."""
        return points @ self.rotation.T + self.translation

    def __eq__(self, other):
        if not isinstance(other, RelativePose):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation, other.translation
        )

    __hash__ = None


def is_rotation(R: np.ndarray, tol: float = _ROT_TOL) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return bool(
        np.max(np.abs(R @ R.T - np.eye(3))) <= tol and abs(np.linalg.det(R) - 1.0) <= tol
    )


def nearest_rotation(M: np.ndarray) -> np.ndarray:
    """Closest rotation matrix in the Frobenius sense (SVD projection).

    Raises NotARotation if the closest orthogonal matrix is a reflection.
    """
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=float))
    R = U @ Vt
    if np.linalg.det(R) < 0:
        raise NotARotation("matrix is closer to a reflection than to a rotation")
    return R


def skew(v) -> np.ndarray:
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def fundamental_from_pose(K: CameraIntrinsics, pose: RelativePose) -> np.ndarray:
    """Fundamental matrix ``F`` with ``p_b^T F p_a = 0`` for static points.

    ``F = K^-T [t]x R K^-1``. Both frames share the intrinsics ``K``.
    """
    t = pose.translation
    if np.linalg.norm(t) < 1e-12:
        raise ZeroBaseline("pure rotation has no fundamental matrix")
    Kinv = K.inverse_matrix
    return Kinv.T @ skew(t) @ pose.rotation @ Kinv


def epipolar_line(F: np.ndarray, p) -> np.ndarray:
    """Line ``F @ [u, v, 1]`` in the second image. Accepts ``(..., 2)`` points."""
    p = np.asarray(p, dtype=float)
    ph = np.concatenate([p, np.ones(p.shape[:-1] + (1,))], axis=-1)
    return ph @ np.asarray(F, dtype=float).T


def point_line_distance(L, q) -> np.ndarray | float:
    """Euclidean distance from pixel(s) ``q`` to line(s) ``L`` (broadcasting)."""
    L = np.asarray(L, dtype=float)
    q = np.asarray(q, dtype=float)
    norm2 = L[..., 0] ** 2 + L[..., 1] ** 2
    if np.any(norm2 < 1e-20):
        raise DegenerateLine("line has (L0, L1) = (0, 0)")
    num = np.abs(L[..., 0] * q[..., 0] + L[..., 1] * q[..., 1] + L[..., 2])
    d = num / np.sqrt(norm2)
    return float(d) if d.ndim == 0 else d


def pixel_grid(height: int, width: int) -> np.ndarray:
    """``(H, W, 2)`` array of ``(u, v)`` pixel coordinates."""
    v, u = np.mgrid[0:height, 0:width].astype(float)
    return np.stack([u, v], axis=-1)


def backproject(depth: np.ndarray, K: CameraIntrinsics) -> np.ndarray:
    """Lift a depth map to ``(H, W, 3)`` camera-frame points."""
    H, W = depth.shape
    uv = pixel_grid(H, W)
    x = (uv[..., 0] - K.cx) / K.fx * depth
    y = (uv[..., 1] - K.cy) / K.fy * depth
    return np.stack([x, y, depth], axis=-1)


def project(points: np.ndarray, K: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Project ``(..., 3)`` points; returns pixel coords and depth ``z``."""
    z = points[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = K.fx * points[..., 0] / z + K.cx
        v = K.fy * points[..., 1] / z + K.cy
    return np.stack([u, v], axis=-1), z


def bilinear_sample(image: np.ndarray, uv: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``image`` at continuous pixel coords ``uv`` of shape ``(H', W', 2)``.

    Coordinates are clamped to the image; any sample that needed clamping by
    more than ``_BORDER_EPS`` (or is non-finite) is reported invalid.
    """
    img = np.asarray(image, dtype=float)
    H, W = img.shape[:2]
    u = uv[..., 0]
    v = uv[..., 1]
    finite = np.isfinite(u) & np.isfinite(v)
    e = _BORDER_EPS
    valid = finite & (u >= -e) & (u <= W - 1 + e) & (v >= -e) & (v <= H - 1 + e)
    uc = np.clip(np.where(finite, u, 0.0), 0, W - 1)
    vc = np.clip(np.where(finite, v, 0.0), 0, H - 1)
    x0 = np.clip(np.floor(uc).astype(int), 0, max(W - 2, 0))
    y0 = np.clip(np.floor(vc).astype(int), 0, max(H - 2, 0))
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    wx = uc - x0
    wy = vc - y0
    if img.ndim == 3:
        wx = wx[..., None]
        wy = wy[..., None]
    top = img[y0, x0] * (1 - wx) + img[y0, x1] * wx
    bottom = img[y1, x0] * (1 - wx) + img[y1, x1] * wx
    return top * (1 - wy) + bottom * wy, valid


def warp_depth_to_source(
    depth: np.ndarray,
    K: CameraIntrinsics,
    pose: RelativePose,
    source_image: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Reconstruct the target view by sampling ``source_image``.

    Each target pixel is back-projected with ``depth``, moved into the source
    frame by ``pose`` and projected; colours are sampled bilinearly.

    Returns:
        ``(reconstructed, valid)``. Invalid pixels (non-positive depth, behind
        the source camera, or outside the source image) are zero-filled.
    """
    depth = np.asarray(depth, dtype=float)
    good_depth = np.isfinite(depth) & (depth > 0)
    pts = pose.transform(backproject(np.where(good_depth, depth, 1.0), K))
    uv, z = project(pts, K)
    recon, valid = bilinear_sample(source_image, uv)
    valid &= good_depth & (z > 0)
    if recon.ndim == 3:
        recon = np.where(valid[..., None], recon, 0.0)
    else:
        recon = np.where(valid, recon, 0.0)
    return recon, valid


_MIRROR = np.diag([-1.0, 1.0, 1.0])


def flip_pose_horizontal(pose: RelativePose) -> RelativePose:
    """Pose seen through a left-right mirrored camera: ``R' = M R M``, ``t' = M t``."""
    return RelativePose(_MIRROR @ pose.rotation @ _MIRROR, _MIRROR @ pose.translation)


def rotation_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    Kx = skew(axis)
    return np.eye(3) + np.sin(angle) * Kx + (1 - np.cos(angle)) * Kx @ Kx
