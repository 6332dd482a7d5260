"""Analytic test scenes: a textured plane, an optional floating sphere, an
optional disk decal marking an object region on the plane, and cameras on
an arc.  Rendering is exact ray casting with closed-form intersections and
an integer-hash texture, so every geometric quantity has an oracle and the
output is bit-deterministic (no RNG state anywhere).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError
from .geometry import (
    CameraModel,
    CameraView,
    pixel_grid,
    quantize_u8,
    ray_directions,
    sample_bilinear,
)

_SPLITMIX_GAMMA = np.uint64(0x9E3779B97F4A7C15)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer; stable across platforms (pure uint64 ops)."""
    z = x + _SPLITMIX_GAMMA
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _cell_hash01(ix: np.ndarray, iy: np.ndarray) -> np.ndarray:
    """Deterministic uniform [0, 1) value per integer texture cell."""
    packed = (ix.astype(np.int64).astype(np.uint64) << np.uint64(32)) ^ (
        iy.astype(np.int64).astype(np.uint64) & np.uint64(0xFFFFFFFF)
    )
    return _splitmix64(packed).astype(np.float64) / 2.0**64


@dataclass(frozen=True)
class PlaneSpec:
    """Infinite textured plane n . x = offset with a smooth checker texture."""

    normal: tuple[float, float, float] = (0.0, 0.0, 1.0)
    offset: float = 0.0
    checker_size: float = 1.0
    contrast: float = 0.22       # amplitude of the smooth checker
    tint: float = 0.03           # amplitude of the per-cell hash tint
    sharpness: float = 2.5       # tanh slope of the checker edges


@dataclass(frozen=True)
class SphereSpec:
    center: tuple[float, float, float] = (0.0, 0.0, 1.2)
    radius: float = 1.0
    albedo: tuple[float, float, float] = (0.82, 0.36, 0.30)


@dataclass(frozen=True)
class DiskSpec:
    """Circular decal on the plane; can serve as the masked object."""

    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 1.0
    albedo: tuple[float, float, float] = (0.22, 0.28, 0.68)


@dataclass(frozen=True)
class ArcSpec:
    """Cameras on a circular arc, all looking at a common target."""

    count: int = 8
    radius: float = 4.0
    look_at: tuple[float, float, float] = (0.0, 0.0, 0.0)
    fov_deg: float = 50.0
    span_deg: float = 60.0
    elevation_deg: float = 35.0
    azimuth_deg: float = -90.0   # arc center direction, degrees from +X


@dataclass(frozen=True)
class CorruptionSpec:
    """Per-view initial-mask perturbations (view_id, px) plus dropped views."""

    dilate: tuple[tuple[int, int], ...] = ()
    erode: tuple[tuple[int, int], ...] = ()
    drop: tuple[int, ...] = ()


@dataclass(frozen=True)
class SceneSpec:
    width: int = 128
    height: int = 128
    plane: PlaneSpec = field(default_factory=PlaneSpec)
    sphere: SphereSpec | None = None
    disk: DiskSpec | None = None
    mask_object: str = "sphere"      # "sphere" | "disk"
    cameras: ArcSpec = field(default_factory=ArcSpec)
    corruption: CorruptionSpec | None = None

    def __post_init__(self):
        if self.cameras.count < 1:
            raise ConfigurationError("camera count must be >= 1")
        if not (10.0 < self.cameras.fov_deg < 120.0):
            raise ConfigurationError(f"fov {self.cameras.fov_deg} outside (10, 120) degrees")
        if self.mask_object == "sphere" and self.sphere is None:
            raise ConfigurationError("mask_object 'sphere' requires a sphere")
        if self.mask_object == "disk" and self.disk is None:
            raise ConfigurationError("mask_object 'disk' requires a disk")
        if self.mask_object not in ("sphere", "disk"):
            raise ConfigurationError(f"unknown mask_object {self.mask_object!r}")
        if self.corruption is not None:
            mags = [px for _, px in self.corruption.dilate] + [px for _, px in self.corruption.erode]
            if any(px < 0 for px in mags):
                raise ConfigurationError("corruption magnitudes must be >= 0")


def spec_to_json(spec: SceneSpec) -> dict:
    def plain(obj):
        if obj is None:
            return None
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in obj.__dict__.items()}

    return {
        "width": spec.width,
        "height": spec.height,
        "plane": plain(spec.plane),
        "sphere": plain(spec.sphere),
        "disk": plain(spec.disk),
        "mask_object": spec.mask_object,
        "cameras": plain(spec.cameras),
        "corruption": None
        if spec.corruption is None
        else {
            "dilate": [list(t) for t in spec.corruption.dilate],
            "erode": [list(t) for t in spec.corruption.erode],
            "drop": list(spec.corruption.drop),
        },
    }


def spec_from_json(payload: dict) -> SceneSpec:
    def tup(v):
        return tuple(v) if isinstance(v, list) else v

    def build(cls, record):
        if record is None:
            return None
        return cls(**{k: tup(v) for k, v in record.items()})

    corruption = None
    if payload.get("corruption") is not None:
        c = payload["corruption"]
        corruption = CorruptionSpec(
            dilate=tuple((int(v), int(px)) for v, px in c.get("dilate", [])),
            erode=tuple((int(v), int(px)) for v, px in c.get("erode", [])),
            drop=tuple(int(v) for v in c.get("drop", [])),
        )
    return SceneSpec(
        width=int(payload.get("width", 128)),
        height=int(payload.get("height", 128)),
        plane=build(PlaneSpec, payload.get("plane")) or PlaneSpec(),
        sphere=build(SphereSpec, payload.get("sphere")),
        disk=build(DiskSpec, payload.get("disk")),
        mask_object=payload.get("mask_object", "sphere"),
        cameras=build(ArcSpec, payload.get("cameras")) or ArcSpec(),
        corruption=corruption,
    )


def load_spec(path) -> SceneSpec:
    from .errors import DataError

    if not os.path.exists(path):
        raise DataError(f"scene spec {path!r} does not exist")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            return spec_from_json(json.load(fh))
        except (json.JSONDecodeError, TypeError, ValueError) as exc:
            raise DataError(f"{path}: invalid scene spec: {exc}") from exc


def look_at_camera(
    position, target, width: int, height: int, fov_deg: float
) -> CameraModel:
    """COLMAP-style camera at ``position`` looking at ``target`` (world up +Z)."""
    position = np.asarray(position, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    forward = target - position
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise ConfigurationError("camera position coincides with its target")
    forward /= norm
    up = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-9:
        raise ConfigurationError("camera looks along the world up axis; pick a lower elevation")
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward])
    translation = -rotation @ position
    fx = (width / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
    return CameraModel(
        fx=fx,
        fy=fx,
        cx=(width - 1) / 2.0,
        cy=(height - 1) / 2.0,
        width=width,
        height=height,
        rotation=rotation,
        translation=translation,
    )


def arc_cameras(spec: SceneSpec) -> list[CameraModel]:
    arc = spec.cameras
    look = np.asarray(arc.look_at, dtype=np.float64)
    el = math.radians(arc.elevation_deg)
    cams = []
    for i in range(arc.count):
        if arc.count == 1:
            az = math.radians(arc.azimuth_deg)
        else:
            az = math.radians(
                arc.azimuth_deg - arc.span_deg / 2.0 + arc.span_deg * i / (arc.count - 1)
            )
        offset = arc.radius * np.array(
            [math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)]
        )
        cams.append(look_at_camera(look + offset, look, spec.width, spec.height, arc.fov_deg))
    return cams


def _plane_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    axis = np.array([1.0, 0.0, 0.0])
    if abs(normal @ axis) > 0.9:
        axis = np.array([0.0, 1.0, 0.0])
    e1 = np.cross(normal, axis)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(normal, e1)
    return e1, e2


def first_hits(spec: SceneSpec, origins: np.ndarray, directions: np.ndarray):
    """First intersection of unit-direction rays with the scene.

    Returns (t, primitive) with primitive 0 = plane, 1 = sphere, -1 = miss.
    With unit directions t equals the Euclidean ray distance.
    """
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    n = np.asarray(spec.plane.normal, dtype=np.float64)
    n = n / np.linalg.norm(n)

    t = np.full(origins.shape[0], np.inf)
    prim = np.full(origins.shape[0], -1, dtype=np.int8)

    denom = directions @ n
    with np.errstate(divide="ignore", invalid="ignore"):
        t_plane = (spec.plane.offset - origins @ n) / denom
    plane_hit = np.isfinite(t_plane) & (t_plane > 1e-9)
    t = np.where(plane_hit, t_plane, t)
    prim = np.where(plane_hit, np.int8(0), prim)

    if spec.sphere is not None:
        c = np.asarray(spec.sphere.center, dtype=np.float64)
        oc = origins - c
        b = np.einsum("ij,ij->i", oc, directions)
        cc = np.einsum("ij,ij->i", oc, oc) - spec.sphere.radius**2
        if np.any(cc < 0):
            raise ConfigurationError("a ray origin lies inside the sphere")
        disc = b * b - cc
        hit = disc >= 0
        t_sph = np.where(hit, -b - np.sqrt(np.maximum(disc, 0.0)), np.inf)
        sph_hit = hit & (t_sph > 1e-9) & (t_sph < t)
        t = np.where(sph_hit, t_sph, t)
        prim = np.where(sph_hit, np.int8(1), prim)
    return t, prim


def _plane_color(spec: SceneSpec, points: np.ndarray) -> np.ndarray:
    plane = spec.plane
    n = np.asarray(plane.normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    e1, e2 = _plane_basis(n)
    s = plane.checker_size
    x = points @ e1 / s
    y = points @ e2 / s
    checker = np.tanh(plane.sharpness * np.sin(2 * math.pi * x) * np.sin(2 * math.pi * y))
    base = 0.55 + plane.contrast * checker
    tint = (_cell_hash01(np.floor(x).astype(np.int64), np.floor(y).astype(np.int64)) - 0.5) * 2.0
    v = base + plane.tint * tint
    rgb = np.stack([v * 0.98, v, v * 0.92], axis=-1)
    if spec.disk is not None:
        inside = _disk_membership(spec, points)
        rgb[inside] = np.asarray(spec.disk.albedo, dtype=np.float64) * (
            0.85 + 0.3 * (v[inside, None] - 0.55)
        )
    return rgb


def _disk_membership(spec: SceneSpec, points: np.ndarray) -> np.ndarray:
    center = np.asarray(spec.disk.center, dtype=np.float64)
    return np.linalg.norm(points - center, axis=-1) <= spec.disk.radius


_LIGHT = np.array([0.3, -0.5, 0.8]) / np.linalg.norm([0.3, -0.5, 0.8])


def _sphere_color(spec: SceneSpec, points: np.ndarray) -> np.ndarray:
    normal = points - np.asarray(spec.sphere.center, dtype=np.float64)
    normal /= np.linalg.norm(normal, axis=-1, keepdims=True)
    lambert = np.clip(normal @ _LIGHT, 0.0, 1.0)
    shade = 0.35 + 0.65 * lambert
    return np.asarray(spec.sphere.albedo, dtype=np.float64) * shade[..., None]


def render_view(spec: SceneSpec, camera: CameraModel, view_id: int) -> CameraView:
    dirs_cam = ray_directions(camera)
    dirs_world = dirs_cam.reshape(-1, 3) @ camera.rotation
    origin = np.broadcast_to(camera.center(), dirs_world.shape)
    t, prim = first_hits(spec, origin, dirs_world)
    if np.any(prim < 0):
        raise ConfigurationError(
            f"view {view_id}: {int(np.sum(prim < 0))} rays miss the scene; "
            "lower the fov or raise the camera elevation"
        )
    points = origin + dirs_world * t[:, None]

    rgb = np.zeros_like(points)
    plane_px = prim == 0
    if np.any(plane_px):
        rgb[plane_px] = _plane_color(spec, points[plane_px])
    sphere_px = prim == 1
    if np.any(sphere_px):
        rgb[sphere_px] = _sphere_color(spec, points[sphere_px])

    if spec.mask_object == "sphere":
        mask = sphere_px
    else:
        mask = plane_px & _disk_membership(spec, points)

    h, w = camera.shape()
    return CameraView(
        camera=camera,
        image=quantize_u8(np.clip(rgb, 0.0, 1.0) * 255.0).reshape(h, w, 3),
        distance=t.astype(np.float32).reshape(h, w),
        mask=mask.reshape(h, w),
        view_id=view_id,
    )


def render_scene(spec: SceneSpec) -> list[CameraView]:
    """Render all arc cameras; masks are the exact object silhouettes."""
    return [render_view(spec, cam, i) for i, cam in enumerate(arc_cameras(spec))]


def corrupt_masks(views: list[CameraView], corruption: CorruptionSpec) -> list[CameraView]:
    """Apply deterministic mask perturbations; untouched views share arrays."""
    dilate = dict(corruption.dilate)
    erode = dict(corruption.erode)
    out = []
    for view in views:
        mask = view.mask
        if view.view_id in dilate and dilate[view.view_id] > 0:
            px = dilate[view.view_id]
            mask = ndimage.binary_dilation(mask, structure=np.ones((2 * px + 1, 2 * px + 1), bool))
        if view.view_id in erode and erode[view.view_id] > 0:
            px = erode[view.view_id]
            mask = ndimage.binary_erosion(mask, structure=np.ones((2 * px + 1, 2 * px + 1), bool))
        if view.view_id in corruption.drop:
            mask = np.zeros_like(view.mask)
        out.append(replace(view, mask=mask))
    return out


def plane_homography(spec: SceneSpec, cam_a: CameraModel, cam_b: CameraModel) -> np.ndarray:
    """Homography taking pixel coords of cam_a to pixel coords of cam_b,
    induced by the scene plane."""
    n = np.asarray(spec.plane.normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    # Plane in a's camera frame: m . x = d
    m = cam_a.rotation @ n
    d = spec.plane.offset - n @ cam_a.center()
    if abs(d) < 1e-9:
        raise ConfigurationError("plane passes through camera a's center")
    if abs(spec.plane.offset - n @ cam_b.center()) < 1e-9:
        raise ConfigurationError("plane passes through camera b's center")
    r_ab = cam_b.rotation @ cam_a.rotation.T
    t_ab = cam_b.translation - r_ab @ cam_a.translation
    k_a = np.array([[cam_a.fx, 0, cam_a.cx], [0, cam_a.fy, cam_a.cy], [0, 0, 1.0]])
    k_b = np.array([[cam_b.fx, 0, cam_b.cx], [0, cam_b.fy, cam_b.cy], [0, 0, 1.0]])
    return k_b @ (r_ab + np.outer(t_ab, m) / d) @ np.linalg.inv(k_a)


def plane_incidence_deg(spec: SceneSpec, camera: CameraModel) -> float:
    """Angle between the optical axis and the plane normal, in degrees.

    90 means the camera looks along the plane (grazing); oracle users skip
    such pairs because the induced warp is arbitrarily anisotropic.
    """
    n = np.asarray(spec.plane.normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    axis_world = camera.rotation.T @ np.array([0.0, 0.0, 1.0])
    return math.degrees(math.acos(min(1.0, abs(float(axis_world @ n)))))


def homography_oracle(
    spec: SceneSpec,
    cam_a: CameraModel,
    cam_b: CameraModel,
    image_b: np.ndarray,
    grazing_limit_deg: float = 88.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact plane-induced warp of view b onto view a's pixel grid.

    Returns (warped float, valid bool); uses the same bilinear sampler as
    the reprojection path so the two can be compared pixel-for-pixel.
    """
    for cam in (cam_a, cam_b):
        if plane_incidence_deg(spec, cam) > grazing_limit_deg:
            raise ConfigurationError(
                "grazing plane incidence: homography oracle is unreliable for this pair"
            )
    h_ab = plane_homography(spec, cam_a, cam_b)
    u, v = pixel_grid(cam_a)
    coords = np.stack([u, v, np.ones_like(u)], axis=-1).reshape(-1, 3)
    mapped = coords @ h_ab.T
    w = mapped[:, 2]
    valid = w > 1e-12
    uv = np.full((coords.shape[0], 2), np.nan)
    uv[valid] = mapped[valid, :2] / w[valid, None]
    valid &= (
        (uv[:, 0] >= 0) & (uv[:, 0] < cam_b.width) & (uv[:, 1] >= 0) & (uv[:, 1] < cam_b.height)
    )
    image_b = np.asarray(image_b)
    channels = 1 if image_b.ndim == 2 else image_b.shape[2]
    warped = np.zeros((coords.shape[0], channels), dtype=np.float64)
    if np.any(valid):
        warped[valid] = sample_bilinear(image_b, uv[valid]).reshape(-1, channels)
    shape = cam_a.shape() if image_b.ndim == 2 else (*cam_a.shape(), channels)
    return warped.reshape(shape), valid.reshape(cam_a.shape())
