"""Pinhole cameras, distance/depth/disparity conversions, and depth-tested
backward warping between calibrated views.

Conventions used throughout the package:

* Extrinsics are world-to-camera: ``x_cam = R @ x_world + t``, camera
  looking down +Z with +X right and +Y down (COLMAP-style).
* Pixel (u, v) is the center of the pixel in column u, row v; rasters are
  indexed ``raster[v, u]``.
* A distance map stores the distance from the camera center to the surface
  along each pixel ray (scene units).  Depth is the Z-projection of that
  distance; disparity is inverse depth.
* Images and distance maps are sampled bilinearly; binary masks use
  nearest-neighbor lookup (interpolating a mask would invent gray values).
* The depth test between a sampled ray distance and an expected ray
  distance passes when ``|sampled - expected| <= abs + rel * expected``.

Everything here is a pure function of immutable inputs and safe to call
concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataError

_ORTHO_TOL = 1e-6
# Slack on the u >= 0 / v >= 0 frustum bounds so that float round-trip noise
# at the left/top border (projections landing at -1e-14) still counts as
# inside; required for warping a view into itself to be the identity.
_FRUSTUM_EPS = 1e-9


@dataclass(frozen=True)
class DepthTestTolerance:
    """Combined absolute + relative tolerance for ray-distance agreement."""

    abs_tol: float = 1e-3
    rel_tol: float = 0.01

    def __post_init__(self):
        if self.abs_tol < 0 or self.rel_tol < 0:
            raise ConfigurationError("depth-test tolerances must be non-negative")
        if self.abs_tol == 0 and self.rel_tol == 0:
            raise ConfigurationError("depth-test tolerance cannot be identically zero")

    def bound(self, expected):
        return self.abs_tol + self.rel_tol * expected


@dataclass(frozen=True)
class CameraModel:
    """Calibrated pinhole camera with a rigid world-to-camera transform."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray      # (3, 3) row-major, world-to-camera
    translation: np.ndarray   # (3,)

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        trans = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)
        if not (self.fx > 0 and self.fy > 0):
            raise ConfigurationError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ConfigurationError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image"
            )
        if not np.all(np.isfinite(rot)) or not np.all(np.isfinite(trans)):
            raise ConfigurationError("camera pose contains non-finite values")
        if np.max(np.abs(rot.T @ rot - np.eye(3))) > _ORTHO_TOL:
            raise ConfigurationError("rotation is not orthonormal within 1e-6")
        if abs(np.linalg.det(rot) - 1.0) > _ORTHO_TOL:
            raise ConfigurationError("rotation determinant is not +1 within 1e-6")

    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    def world_to_camera(self) -> np.ndarray:
        """3x4 [R | t] matrix."""
        return np.hstack([self.rotation, self.translation[:, None]])

    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)


@dataclass
class CameraView:
    """One calibrated frame: camera plus optional image / distance / mask rasters."""

    camera: CameraModel
    image: np.ndarray | None = None      # (H, W, 3) uint8
    distance: np.ndarray | None = None   # (H, W) float32, ray distance
    mask: np.ndarray | None = None       # (H, W) bool
    view_id: int = 0


@dataclass
class WarpResult:
    """Backward-warp output plus the expected source-ray distance per pixel."""

    warped: np.ndarray        # (H, W, C) float64, 0 where not visible
    visibility: np.ndarray    # (H, W) bool
    source_uv: np.ndarray     # (H, W, 2) float64 projected coords in the source
    source_distance: np.ndarray  # (H, W) float64 distance from source center to surface


def quantize_u8(values: np.ndarray) -> np.ndarray:
    """Quantize float intensities to 8 bits with round-half-up semantics."""
    return np.clip(np.floor(np.asarray(values, dtype=np.float64) + 0.5), 0, 255).astype(np.uint8)


def pixel_grid(camera: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    """(u, v) coordinate arrays of shape (H, W) at pixel centers."""
    v, u = np.mgrid[0 : camera.height, 0 : camera.width]
    return u.astype(np.float64), v.astype(np.float64)


def ray_directions(camera: CameraModel, normalized: bool = True) -> np.ndarray:
    """Per-pixel ray directions in camera coordinates, shape (H, W, 3)."""
    u, v = pixel_grid(camera)
    x = (u - camera.cx) / camera.fx
    y = (v - camera.cy) / camera.fy
    dirs = np.stack([x, y, np.ones_like(x)], axis=-1)
    if normalized:
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    return dirs


def ray_cosines(camera: CameraModel) -> np.ndarray:
    """Z-component of the unit ray through each pixel (= cos of the off-axis angle)."""
    u, v = pixel_grid(camera)
    x = (u - camera.cx) / camera.fx
    y = (v - camera.cy) / camera.fy
    return 1.0 / np.sqrt(x * x + y * y + 1.0)


def _check_raster_matches(values: np.ndarray, camera: CameraModel, what: str):
    if values.shape[:2] != camera.shape():
        raise ConfigurationError(
            f"{what} shape {values.shape[:2]} does not match camera {camera.shape()}"
        )


def validate_distance_map(distance: np.ndarray, camera: CameraModel | None = None):
    """Raise DataError naming the first offending pixel for invalid distances."""
    distance = np.asarray(distance)
    if camera is not None:
        _check_raster_matches(distance, camera, "distance map")
    bad = ~np.isfinite(distance) | (distance <= 0)
    if np.any(bad):
        v, u = np.argwhere(bad)[0]
        raise DataError(
            f"distance map has non-positive or non-finite value {distance[v, u]!r} at pixel ({u}, {v})"
        )


def distance_to_depth(distance: np.ndarray, camera: CameraModel) -> np.ndarray:
    """Project ray distances onto the camera Z axis: depth = distance * cos(theta)."""
    distance = np.asarray(distance, dtype=np.float64)
    validate_distance_map(distance, camera)
    return distance * ray_cosines(camera)


@dataclass(frozen=True)
class DisparityMap:
    """Inverse depth plus the constants it was computed with.

    ``normalized`` maps the valid range to [0, 1] (min -> 0, max -> 1); a
    constant input normalizes to all zeros by convention.
    """

    values: np.ndarray
    delta: float
    clamp: tuple[float, float] | None
    normalized: np.ndarray


def depth_to_disparity(
    depth: np.ndarray,
    delta: float = 1e-6,
    clamp: tuple[float, float] | None = None,
) -> DisparityMap:
    """Invert depth into disparity, optionally clamping depth into [lo, hi] first."""
    if delta < 0:
        raise ConfigurationError(f"delta must be non-negative, got {delta}")
    depth = np.asarray(depth, dtype=np.float64)
    if clamp is not None:
        lo, hi = clamp
        if lo >= hi:
            raise ConfigurationError(f"depth clamp range [{lo}, {hi}] is empty")
        depth = np.clip(depth, lo, hi)
    disparity = 1.0 / (depth + delta)
    valid = np.isfinite(disparity)
    if not np.any(valid):
        normalized = np.zeros_like(disparity)
    else:
        lo_v = disparity[valid].min()
        hi_v = disparity[valid].max()
        if hi_v > lo_v:
            normalized = np.where(valid, (disparity - lo_v) / (hi_v - lo_v), 0.0)
        else:
            normalized = np.zeros_like(disparity)
    return DisparityMap(values=disparity, delta=delta, clamp=clamp, normalized=normalized)


def unproject(pixel: tuple[float, float], distance: float, camera: CameraModel) -> np.ndarray:
    """Lift one pixel to a world point at ray distance ``distance``."""
    u, v = pixel
    if not (0 <= u < camera.width and 0 <= v < camera.height):
        raise ValueError(f"pixel ({u}, {v}) outside {camera.width}x{camera.height} image")
    if not distance > 0:
        raise ValueError(f"distance must be positive, got {distance}")
    x = (u - camera.cx) / camera.fx
    y = (v - camera.cy) / camera.fy
    d = np.array([x, y, 1.0])
    d /= math.sqrt(x * x + y * y + 1.0)
    return camera.center() + distance * (camera.rotation.T @ d)


def project(point: np.ndarray, camera: CameraModel) -> tuple[float, float, float, bool]:
    """Pinhole-project a world point; returns (u, v, z, in_frustum)."""
    p = camera.rotation @ np.asarray(point, dtype=np.float64) + camera.translation
    z = p[2]
    if z <= 0:
        return math.nan, math.nan, z, False
    u = camera.fx * p[0] / z + camera.cx
    v = camera.fy * p[1] / z + camera.cy
    in_frustum = bool(-_FRUSTUM_EPS <= u < camera.width and -_FRUSTUM_EPS <= v < camera.height)
    return u, v, z, in_frustum


def project_points(points: np.ndarray, camera: CameraModel):
    """Vectorized projection of (N, 3) world points.

    Returns (uv (N, 2), z (N,), in_frustum (N,)).  Points at or behind the
    camera get NaN coords and in_frustum False.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cam = points @ camera.rotation.T + camera.translation
    z = cam[:, 2]
    front = z > 0
    uv = np.full((points.shape[0], 2), np.nan)
    np.divide(cam[:, 0], z, out=uv[:, 0], where=front)
    np.divide(cam[:, 1], z, out=uv[:, 1], where=front)
    uv[:, 0] = uv[:, 0] * camera.fx + camera.cx
    uv[:, 1] = uv[:, 1] * camera.fy + camera.cy
    in_frustum = (
        front
        & (uv[:, 0] >= -_FRUSTUM_EPS)
        & (uv[:, 0] < camera.width)
        & (uv[:, 1] >= -_FRUSTUM_EPS)
        & (uv[:, 1] < camera.height)
    )
    return uv, z, in_frustum


def unproject_map(camera: CameraModel, distance: np.ndarray) -> np.ndarray:
    """Lift a whole distance map to world points, shape (H, W, 3)."""
    distance = np.asarray(distance, dtype=np.float64)
    _check_raster_matches(distance, camera, "distance map")
    dirs = ray_directions(camera) @ camera.rotation  # R^T applied to each dir
    return camera.center() + dirs * distance[..., None]


def sample_bilinear(raster: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """Bilinearly sample a (H, W) or (H, W, C) raster at float (u, v) coords.

    Coordinates are clamped to the raster border (edge replication), so
    exact grid points return exact raster values.
    """
    raster = np.asarray(raster)
    h, w = raster.shape[:2]
    uv = np.asarray(uv, dtype=np.float64)
    u = np.clip(uv[..., 0], 0.0, w - 1.0)
    v = np.clip(uv[..., 1], 0.0, h - 1.0)
    x0 = np.minimum(np.floor(u), w - 2 if w > 1 else 0).astype(np.int64)
    y0 = np.minimum(np.floor(v), h - 2 if h > 1 else 0).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fu = u - x0
    fv = v - y0
    if raster.ndim == 3:
        fu = fu[..., None]
        fv = fv[..., None]
    r = raster.astype(np.float64)
    top = r[y0, x0] * (1 - fu) + r[y0, x1] * fu
    bot = r[y1, x0] * (1 - fu) + r[y1, x1] * fu
    return top * (1 - fv) + bot * fv


def sample_mask_nearest(mask: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """Nearest-neighbor mask lookup; out-of-bounds coordinates read as False."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    uv = np.asarray(uv, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        u = np.floor(uv[..., 0] + 0.5)
        v = np.floor(uv[..., 1] + 0.5)
        inb = (u >= 0) & (u < w) & (v >= 0) & (v < h)
    out = np.zeros(uv.shape[:-1], dtype=bool)
    if np.any(inb):
        out[inb] = mask[v[inb].astype(np.int64), u[inb].astype(np.int64)]
    return out


def depth_test_pass(sampled: np.ndarray, expected: np.ndarray, tol: DepthTestTolerance) -> np.ndarray:
    """True where a sampled ray distance agrees with the expected one."""
    return np.abs(sampled - expected) <= tol.bound(expected)


def warp_into(
    src: CameraView,
    dst_camera: CameraModel,
    dst_distance: np.ndarray,
    tol: DepthTestTolerance,
) -> WarpResult:
    """Backward-warp the source view onto the destination pixel grid.

    Every destination pixel is lifted with the destination distance map and
    located in the source view; visibility requires the projection to land
    in the source frustum and the source distance map to agree (depth test,
    in ray-distance units) with the distance from the source center to the
    surface point.
    """
    if src.distance is None:
        raise DataError(f"view {src.view_id}: missing distance map for reprojection")
    if src.image is None:
        raise DataError(f"view {src.view_id}: missing image for reprojection")
    validate_distance_map(dst_distance, dst_camera)
    _check_raster_matches(np.asarray(src.distance), src.camera, f"view {src.view_id} distance map")

    h, w = dst_camera.shape()
    world = unproject_map(dst_camera, dst_distance).reshape(-1, 3)
    uv, _, in_frustum = project_points(world, src.camera)
    expected = np.linalg.norm(world - src.camera.center(), axis=1)

    vis = in_frustum.copy()
    if np.any(in_frustum):
        sampled = sample_bilinear(src.distance, uv[in_frustum])
        vis[in_frustum] = depth_test_pass(sampled, expected[in_frustum], tol)

    image = np.asarray(src.image)
    channels = 1 if image.ndim == 2 else image.shape[2]
    warped = np.zeros((h * w, channels), dtype=np.float64)
    if np.any(vis):
        samples = sample_bilinear(image, uv[vis])
        warped[vis] = samples.reshape(-1, channels)
    if image.ndim == 2:
        warped = warped[:, 0]
        out_shape = (h, w)
    else:
        out_shape = (h, w, channels)
    return WarpResult(
        warped=warped.reshape(out_shape),
        visibility=vis.reshape(h, w),
        source_uv=uv.reshape(h, w, 2),
        source_distance=expected.reshape(h, w),
    )


def reproject_view(
    src: CameraView,
    dst_camera: CameraModel,
    dst_distance: np.ndarray,
    tol: DepthTestTolerance = DepthTestTolerance(),
) -> tuple[np.ndarray, np.ndarray]:
    """Warp ``src`` into the destination view; returns (warped, visibility).

    ``warped`` is float (same layout as the source image, [0, 255] scale for
    uint8 inputs) and zero where not visible.
    """
    result = warp_into(src, dst_camera, dst_distance, tol)
    return result.warped, result.visibility
