"""3D-consistent mask refinement: lift noisy per-view masks to scored world
points, prune by cross-view agreement and a sphere prior, splat back with a
z-buffer and per-view depth test, and clean up with a guided filter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, DataError
from .geometry import (
    CameraView,
    DepthTestTolerance,
    depth_test_pass,
    project_points,
    sample_bilinear,
    sample_mask_nearest,
    unproject_map,
)


@dataclass
class ScoredPointCloud:
    """World points lifted from masked pixels with cross-view agreement scores.

    ``scores`` are visibility-normalized fractions: among the views where a
    point is geometrically visible (in frustum + depth test), the fraction
    whose initial mask contains it.  Points visible nowhere score 0.
    """

    points: np.ndarray         # (N, 3) float64
    scores: np.ndarray         # (N,) float64 in [0, 1]
    source_views: np.ndarray   # (N,) int64 view ids
    source_pixels: np.ndarray  # (N, 2) int64 (u, v)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        self.source_views = np.asarray(self.source_views, dtype=np.int64).reshape(-1)
        self.source_pixels = np.asarray(self.source_pixels, dtype=np.int64).reshape(-1, 2)
        n = len(self.points)
        if not (len(self.scores) == len(self.source_views) == len(self.source_pixels) == n):
            raise ConfigurationError("point cloud arrays have mismatched lengths")
        if n and (self.scores.min() < 0 or self.scores.max() > 1):
            raise ConfigurationError("scores must lie in [0, 1]")
        if n and not np.all(np.isfinite(self.points)):
            raise ConfigurationError("point cloud contains non-finite coordinates")

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class SpherePrior:
    """Outlier-rejection sphere around the object."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64).reshape(3))
        if not self.radius > 0:
            raise ConfigurationError(f"sphere radius must be positive, got {self.radius}")


@dataclass
class RefinedMaskSet:
    """Final per-view masks (uint8, 255 = object) plus the pre-threshold
    guided-filter output for each view."""

    view_ids: list[int]
    masks: list[np.ndarray]   # uint8 {0, 255}
    soft: list[np.ndarray]    # float64 guided-filter output


def _require(view: CameraView, what: str):
    value = getattr(view, what)
    if value is None:
        raise DataError(f"view {view.view_id}: missing {what.replace('_', ' ')}")
    return value


def lift_and_score(views: list[CameraView], tol: DepthTestTolerance) -> ScoredPointCloud:
    """Lift every masked pixel of every view and score cross-view agreement."""
    pts, src_views, src_pixels = [], [], []
    for view in views:
        mask = _require(view, "mask")
        distance = _require(view, "distance")
        ys, xs = np.nonzero(mask)
        if ys.size == 0:
            continue
        world = unproject_map(view.camera, distance)[ys, xs]
        pts.append(world)
        src_views.append(np.full(ys.size, view.view_id, dtype=np.int64))
        src_pixels.append(np.stack([xs, ys], axis=1))
    if not pts:
        empty = np.zeros((0,))
        return ScoredPointCloud(np.zeros((0, 3)), empty, empty, np.zeros((0, 2)))

    points = np.concatenate(pts)
    num = np.zeros(len(points))
    den = np.zeros(len(points))
    for view in views:
        mask = _require(view, "mask")
        distance = _require(view, "distance")
        uv, _, in_frustum = project_points(points, view.camera)
        expected = np.linalg.norm(points - view.camera.center(), axis=1)
        visible = in_frustum.copy()
        if np.any(in_frustum):
            sampled = sample_bilinear(distance, uv[in_frustum])
            visible[in_frustum] = depth_test_pass(sampled, expected[in_frustum], tol)
        den += visible
        in_mask = np.zeros(len(points), dtype=bool)
        if np.any(visible):
            in_mask[visible] = sample_mask_nearest(mask, uv[visible])
        num += in_mask
    scores = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return ScoredPointCloud(points, scores, np.concatenate(src_views), np.concatenate(src_pixels))


def default_sphere_prior(cloud: ScoredPointCloud, tau: float, scale: float = 2.5) -> SpherePrior:
    """Sphere at the centroid of points scoring >= tau, radius = scale * RMS."""
    keep = cloud.scores >= tau
    if not np.any(keep):
        raise ConfigurationError(f"no points with score >= {tau}; cannot derive a sphere prior")
    pts = cloud.points[keep]
    center = pts.mean(axis=0)
    rms = float(np.sqrt(np.mean(np.sum((pts - center) ** 2, axis=1))))
    return SpherePrior(center=center, radius=max(scale * rms, 1e-9))


def prune_points(
    cloud: ScoredPointCloud, tau: float, sphere: SpherePrior
) -> ScoredPointCloud:
    """Keep points with score >= tau inside the sphere; deterministic order
    (source view, then source pixel row-major)."""
    if not 0 <= tau <= 1:
        raise ConfigurationError(f"score threshold must be in [0, 1], got {tau}")
    keep = (cloud.scores >= tau) & (
        np.linalg.norm(cloud.points - sphere.center, axis=1) <= sphere.radius
    )
    order = np.lexsort(
        (
            cloud.source_pixels[keep, 0],
            cloud.source_pixels[keep, 1],
            cloud.source_views[keep],
        )
    )
    idx = np.nonzero(keep)[0][order]
    return ScoredPointCloud(
        cloud.points[idx],
        cloud.scores[idx],
        cloud.source_views[idx],
        cloud.source_pixels[idx],
    )


def splat_masks(
    cloud: ScoredPointCloud, views: list[CameraView], tol: DepthTestTolerance
) -> list[np.ndarray]:
    """Z-buffer splat of the cloud into each view (1-px footprint).

    A pixel is set iff some point rounds onto it and passes the view's depth
    test; points behind a nearer surface are disregarded.
    """
    out = []
    for view in views:
        distance = _require(view, "distance")
        h, w = view.camera.shape()
        if len(cloud) == 0:
            out.append(np.zeros((h, w), dtype=bool))
            continue
        uv, _, in_frustum = project_points(cloud.points, view.camera)
        expected = np.linalg.norm(cloud.points - view.camera.center(), axis=1)
        ok = in_frustum.copy()
        if np.any(in_frustum):
            sampled = sample_bilinear(distance, uv[in_frustum])
            ok[in_frustum] = depth_test_pass(sampled, expected[in_frustum], tol)
        px = np.floor(uv[ok] + 0.5).astype(np.int64)
        inb = (px[:, 0] >= 0) & (px[:, 0] < w) & (px[:, 1] >= 0) & (px[:, 1] < h)
        flat = px[inb, 1] * w + px[inb, 0]
        zbuf = np.full(h * w, np.inf)
        np.minimum.at(zbuf, flat, expected[ok][inb])
        out.append((zbuf < np.inf).reshape(h, w))
    return out


def close_mask(mask: np.ndarray, size: int = 3) -> np.ndarray:
    """Morphological closing with a square structuring element; heals the
    sub-pixel holes a 1-px splat footprint leaves."""
    if size <= 1:
        return mask
    structure = np.ones((size, size), dtype=bool)
    dilated = ndimage.binary_dilation(mask, structure=structure)
    return ndimage.binary_erosion(dilated, structure=structure, border_value=1)


def box_mean(values: np.ndarray, radius: int) -> np.ndarray:
    """Mean over the (2r+1)^2 window clipped at the image border, via
    integral images (exact per-window normalization)."""
    values = np.asarray(values, dtype=np.float64)
    h, w = values.shape
    padded = np.zeros((h + 1, w + 1))
    np.cumsum(np.cumsum(values, axis=0), axis=1, out=padded[1:, 1:])
    y0 = np.clip(np.arange(h) - radius, 0, h)
    y1 = np.clip(np.arange(h) + radius + 1, 0, h)
    x0 = np.clip(np.arange(w) - radius, 0, w)
    x1 = np.clip(np.arange(w) + radius + 1, 0, w)
    sums = (
        padded[np.ix_(y1, x1)]
        - padded[np.ix_(y0, x1)]
        - padded[np.ix_(y1, x0)]
        + padded[np.ix_(y0, x0)]
    )
    counts = np.outer(y1 - y0, x1 - x0)
    return sums / counts


def luminance(image: np.ndarray) -> np.ndarray:
    """Rec. 601 luma of an RGB uint8 image, scaled to [0, 1]."""
    rgb = np.asarray(image, dtype=np.float64) / 255.0
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


def guided_filter(
    mask: np.ndarray, guide: np.ndarray, radius: int, eps: float
) -> np.ndarray:
    """Classic guided filter of a float mask steered by the guide luminance.

    Per-window linear model q = a * I + b with a = cov(I, p) / (var(I) + eps),
    coefficients box-filtered before evaluation.
    """
    if radius < 1:
        raise ConfigurationError(f"guided-filter radius must be >= 1, got {radius}")
    if not eps > 0:
        raise ConfigurationError(f"guided-filter eps must be positive, got {eps}")
    mask = np.asarray(mask, dtype=np.float64)
    guide = np.asarray(guide)
    lum = luminance(guide) if guide.ndim == 3 else np.asarray(guide, dtype=np.float64)
    if lum.shape != mask.shape:
        raise ConfigurationError(
            f"guide shape {lum.shape} does not match mask shape {mask.shape}"
        )
    mean_i = box_mean(lum, radius)
    mean_p = box_mean(mask, radius)
    cov_ip = box_mean(lum * mask, radius) - mean_i * mean_p
    var_i = box_mean(lum * lum, radius) - mean_i * mean_i
    a = cov_ip / (var_i + eps)
    b = mean_p - a * mean_i
    return box_mean(a, radius) * lum + box_mean(b, radius)


def guided_filter_refine(
    mask: np.ndarray,
    guide: np.ndarray,
    radius: int = 8,
    eps: float = 1e-4,
    threshold: float = 0.5,
) -> tuple[np.ndarray, np.ndarray]:
    """Guided-filter a raw mask and binarize; returns (uint8 mask, soft output)."""
    if not 0 < threshold < 1:
        raise ConfigurationError(f"threshold must be in (0, 1), got {threshold}")
    soft = guided_filter(mask, guide, radius, eps)
    return (soft >= threshold).astype(np.uint8) * 255, soft


@dataclass(frozen=True)
class RefineConfig:
    tau: float = 0.5
    sphere: SpherePrior | None = None   # None derives the default prior
    sphere_scale: float = 2.5
    closing: int = 3
    filter_radius: int = 8
    filter_eps: float = 1e-4
    threshold: float = 0.5


def refine_masks(
    views: list[CameraView],
    tol: DepthTestTolerance = DepthTestTolerance(),
    config: RefineConfig = RefineConfig(),
) -> tuple[RefinedMaskSet, ScoredPointCloud]:
    """Full refinement chain: lift -> score -> prune -> splat -> close ->
    guided filter.  Returns the refined masks and the pruned cloud."""
    cloud = lift_and_score(views, tol)
    if len(cloud):
        sphere = config.sphere or default_sphere_prior(cloud, config.tau, config.sphere_scale)
        cloud = prune_points(cloud, config.tau, sphere)
    raw = splat_masks(cloud, views, tol)
    view_ids, masks, softs = [], [], []
    for view, raw_mask in zip(views, raw):
        closed = close_mask(raw_mask, config.closing)
        refined, soft = guided_filter_refine(
            closed.astype(np.float64),
            _require(view, "image"),
            radius=config.filter_radius,
            eps=config.filter_eps,
            threshold=config.threshold,
        )
        view_ids.append(view.view_id)
        masks.append(refined)
        softs.append(soft)
    return RefinedMaskSet(view_ids=view_ids, masks=masks, soft=softs), cloud
