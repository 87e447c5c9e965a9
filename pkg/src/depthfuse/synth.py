"""Synthetic scenes with exact depth, flow and corruption models.

A scene is a textured background plane plus fronto-parallel textured
rectangles, all defined in the first camera frame. The second view is ray
cast, so depth and the flow of static surfaces are exact. Dynamic rectangles
move by a fixed pixel offset in the second view, independent of the camera.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpec
from .fusion import SparseDepthMap
from .geometry import CameraIntrinsics, RelativePose, pixel_grid, project

BACKGROUND = 0


@dataclass(frozen=True)
class Rect:
    """Axis-aligned patch covering pixels ``[u0, u1) x [v0, v1)`` of view A at ``depth``."""

    u0: float
    v0: float
    u1: float
    v1: float
    depth: float
    color: tuple = (0.5, 0.5, 0.5)
    motion: tuple | None = None  # (du, dv) pixels in view B; None = static

    @property
    def dynamic(self) -> bool:
        return self.motion is not None


@dataclass(frozen=True)
class SceneSpec:
    camera: CameraIntrinsics
    rects: tuple = ()
    background_depth: float = 50.0
    background_color: tuple = (0.55, 0.65, 0.85)
    # pose of camera B expressed in camera A (ego-motion)
    camera_motion: RelativePose = field(default_factory=RelativePose.identity)
    texture_contrast: float = 0.15
    texture_period: float = 8.0
    vo_density: float = 0.05
    vo_noise: float = 0.0
    vo_dropout: float = 0.0
    # per-region multiplicative corruption of the fake network depth, indexed
    # by region id (0 = background, i = rects[i-1]); missing entries are 1
    scale_factors: tuple = ()
    d_min: float = 0.1
    d_max: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.vo_dropout < 1:
            raise InvalidSpec(f"vo_dropout must be in [0, 1), got {self.vo_dropout}")
        if not 0 < self.vo_density <= 1:
            raise InvalidSpec(f"vo_density must be in (0, 1], got {self.vo_density}")
        if self.vo_noise < 0:
            raise InvalidSpec("vo_noise must be non-negative")
        depths = [self.background_depth] + [r.depth for r in self.rects]
        if min(depths) < self.d_min or max(depths) > self.d_max:
            raise InvalidSpec(f"plane depths {depths} outside [{self.d_min}, {self.d_max}]")
        if any(f <= 0 for f in self.scale_factors):
            raise InvalidSpec("scale factors must be positive")
        if len(self.scale_factors) > len(self.rects) + 1:
            raise InvalidSpec("more scale factors than regions")

    @property
    def n_regions(self) -> int:
        return len(self.rects) + 1

    def scale_factor(self, region: int) -> float:
        return self.scale_factors[region] if region < len(self.scale_factors) else 1.0

    @property
    def pose(self) -> RelativePose:
        """Point transform from view A to view B."""
        return self.camera_motion.inverse()


@dataclass
class RenderedScene:
    image_a: np.ndarray
    image_b: np.ndarray
    depth: np.ndarray
    flow: np.ndarray
    regions: np.ndarray
    dynamic: np.ndarray
    spec: SceneSpec

    @property
    def camera(self) -> CameraIntrinsics:
        return self.spec.camera

    @property
    def pose(self) -> RelativePose:
        return self.spec.pose


def _texture(base_color, uv, contrast, period, region):
    # smooth shading plus a soft checker, both deterministic in view-A pixels
    u = uv[..., 0]
    v = uv[..., 1]
    phase = 0.37 * region
    checker = np.sin(np.pi * u / period + phase) * np.sin(np.pi * v / period + phase)
    shade = 0.5 * contrast * np.sin(2 * np.pi * (u + 2 * v) / (13 * period) + phase)
    col = np.asarray(base_color, dtype=float) + (contrast * checker + shade)[..., None]
    return np.clip(col, 0.0, 1.0)


# ray-cast coordinates land within rounding of the exact pixel grid
_EDGE_EPS = 1e-9


def _rect_mask(uv, r: Rect):
    u = uv[..., 0]
    v = uv[..., 1]
    e = _EDGE_EPS
    return (u >= r.u0 - e) & (u < r.u1 - e) & (v >= r.v0 - e) & (v < r.v1 - e)


def _layer_view_a(spec: SceneSpec):
    K = spec.camera
    uv = pixel_grid(K.height, K.width)
    depth = np.full((K.height, K.width), float(spec.background_depth))
    regions = np.zeros((K.height, K.width), dtype=np.int32)
    for i, r in enumerate(spec.rects, start=1):
        m = _rect_mask(uv, r) & (r.depth < depth)
        depth[m] = r.depth
        regions[m] = i
    return uv, depth, regions


def _colorize(spec: SceneSpec, uv_a, regions):
    img = np.zeros(uv_a.shape[:2] + (3,))
    colors = [spec.background_color] + [r.color for r in spec.rects]
    for i, c in enumerate(colors):
        m = regions == i
        if m.any():
            img[m] = _texture(c, uv_a[m], spec.texture_contrast, spec.texture_period, i)
    return img


def _render_view_b(spec: SceneSpec):
    """Ray cast view B; returns the image and the region map."""
    K = spec.camera
    cam = spec.camera_motion  # X_a = R_c X_b + t_c
    uv_b = pixel_grid(K.height, K.width)
    rays_b = np.stack(
        [(uv_b[..., 0] - K.cx) / K.fx, (uv_b[..., 1] - K.cy) / K.fy, np.ones(uv_b.shape[:2])],
        axis=-1,
    )
    rays_a = rays_b @ cam.rotation.T  # ray directions in frame A
    origin = cam.translation
    best = np.full(uv_b.shape[:2], np.inf)
    regions = np.full(uv_b.shape[:2], -1, dtype=np.int32)
    uv_src = np.zeros_like(uv_b)

    def hit(plane_depth):
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (plane_depth - origin[2]) / rays_a[..., 2]
        s = np.where(rays_a[..., 2] > 0, s, np.inf)
        s = np.where(s > 0, s, np.inf)
        pts = origin + s[..., None] * rays_a
        uv_a, _ = project(pts, K)
        return s, uv_a

    planes = [(0, spec.background_depth, None)] + [
        (i, r.depth, r) for i, r in enumerate(spec.rects, start=1)
    ]
    for i, d, r in planes:
        if r is not None and r.dynamic:
            continue
        s, uv_a = hit(d)
        m = np.isfinite(s) & (s < best)
        if r is not None:
            m &= _rect_mask(uv_a, r)
        best[m] = s[m]
        regions[m] = i
        uv_src[m] = uv_a[m]

    # dynamic patches: translated copies drawn in image space at their own depth
    depth_b = origin[2] + best * rays_a[..., 2]  # frame-A depth of the surface hit
    for i, r in enumerate(spec.rects, start=1):
        if not r.dynamic:
            continue
        du, dv = r.motion
        src = uv_b - np.array([du, dv])
        m = _rect_mask(src, r) & (r.depth <= np.where(np.isfinite(depth_b), depth_b, np.inf))
        regions[m] = i
        uv_src[m] = src[m]

    img = np.zeros(uv_b.shape[:2] + (3,))
    colors = [spec.background_color] + [r.color for r in spec.rects]
    for i, c in enumerate(colors):
        m = regions == i
        if m.any():
            img[m] = _texture(c, uv_src[m], spec.texture_contrast, spec.texture_period, i)
    return img, regions


def analytic_flow(depth: np.ndarray, K: CameraIntrinsics, pose: RelativePose) -> np.ndarray:
    """Flow of static geometry: projection of each back-projected pixel into view B.

    Works on normalised rays scaled by ``1/depth`` so the identity pose gives
    exactly zero flow.
    """
    H, W = depth.shape
    uv = pixel_grid(H, W)
    x = (uv[..., 0] - K.cx) / K.fx
    y = (uv[..., 1] - K.cy) / K.fy
    rays = np.stack([x, y, np.ones_like(x)], axis=-1)
    # R (d * ray) + t, divided through by d
    q = rays @ pose.rotation.T + pose.translation / depth[..., None]
    with np.errstate(divide="ignore", invalid="ignore"):
        du = K.fx * (q[..., 0] / q[..., 2] - x)
        dv = K.fy * (q[..., 1] / q[..., 2] - y)
    return np.stack([du, dv], axis=-1)


def render(spec: SceneSpec) -> RenderedScene:
    """Render both views, the exact depth of view A and the A->B flow."""
    uv_a, depth, regions = _layer_view_a(spec)
    image_a = _colorize(spec, uv_a, regions)
    image_b, _ = _render_view_b(spec)
    flow = analytic_flow(depth, spec.camera, spec.pose)
    dynamic = np.zeros(depth.shape, dtype=bool)
    for i, r in enumerate(spec.rects, start=1):
        if r.dynamic:
            m = regions == i
            flow[m] = np.asarray(r.motion, dtype=float)
            dynamic |= m
    return RenderedScene(image_a, image_b, depth, flow, regions, dynamic, spec)


def corrupt(scene: RenderedScene, rng: np.random.Generator | None = None):
    """Fake network depth and sparse VO points for a rendered scene.

    Network depth is the truth times the per-region scale factor. VO points
    are drawn without replacement from static pixels (``vo_density`` of
    them), each independently dropped with probability ``vo_dropout``, and
    perturbed by log-normal noise of relative size ``vo_noise``.
    """
    spec = scene.spec
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    factors = np.array([spec.scale_factor(i) for i in range(spec.n_regions)])
    net = scene.depth * factors[scene.regions]

    static = np.flatnonzero(~scene.dynamic.reshape(-1))
    n = int(round(spec.vo_density * len(static)))
    picked = np.sort(rng.choice(static, size=n, replace=False))
    keep = rng.random(n) >= spec.vo_dropout
    picked = picked[keep]
    d = scene.depth.reshape(-1)[picked]
    if spec.vo_noise > 0:
        d = d * np.exp(spec.vo_noise * rng.standard_normal(len(d)))
    W = spec.camera.width
    vo = SparseDepthMap(picked % W, picked // W, d)
    return net, vo


def standard_scene(
    seed: int = 0,
    width: int = 320,
    height: int = 96,
    scale_factors=(1.6, 0.6, 1.8, 0.7),
    vo_noise: float = 0.0,
    vo_dropout: float = 0.0,
    vo_density: float = 0.05,
    baseline: float = 0.5,
    dynamic_motion=None,
) -> SceneSpec:
    """Benchmark scene: background plus three rectangles (four regions).

    ``dynamic_motion`` makes the middle rectangle move by that pixel offset.
    Layout scales with the image size; colours and factors are fixed, the
    seed drives VO sampling.
    """
    fx = 0.9 * width
    K = CameraIntrinsics(fx, fx, (width - 1) / 2, (height - 1) / 2, width, height)
    W, H = width, height
    rects = (
        Rect(0.05 * W, 0.15 * H, 0.30 * W, 0.85 * H, 8.0, (0.85, 0.30, 0.25)),
        Rect(0.38 * W, 0.25 * H, 0.62 * W, 0.80 * H, 15.0, (0.25, 0.75, 0.30),
             motion=dynamic_motion),
        Rect(0.70 * W, 0.10 * H, 0.95 * W, 0.70 * H, 4.0, (0.90, 0.85, 0.20)),
    )
    motion = RelativePose(np.eye(3), np.array([baseline, 0.0, 0.0]))
    return SceneSpec(
        camera=K,
        rects=rects,
        background_depth=40.0,
        camera_motion=motion,
        scale_factors=tuple(scale_factors),
        vo_noise=vo_noise,
        vo_dropout=vo_dropout,
        vo_density=vo_density,
        seed=seed,
    )
