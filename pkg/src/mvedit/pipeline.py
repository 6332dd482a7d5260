"""Edit-session orchestration: order views by mask overlap, edit the
reference with a full-mask schedule, then sweep the remaining views,
reprojecting prior edits and inpainting with a hybrid schedule.

The sweep is inherently sequential in accumulated mode (each view consumes
every previously edited view); reference-only mode depends only on the
reference edit and exists for ablation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .backends import EditRequest, EditResponse
from .errors import BackendError, ConfigurationError, DataError
from .geometry import (
    CameraView,
    DepthTestTolerance,
    depth_test_pass,
    depth_to_disparity,
    distance_to_depth,
    project_points,
    quantize_u8,
    sample_bilinear,
    sample_mask_nearest,
    unproject_map,
    warp_into,
)
from .schedule import MaskSchedule, build_hybrid_schedule, full_mask_schedule

logger = logging.getLogger(__name__)

REFERENCE_ONLY = "reference-only"
ACCUMULATED = "accumulated"


@dataclass
class EditSession:
    """Everything one multi-view edit needs; views carry images, distance
    maps, and object masks."""

    views: list[CameraView]
    reference_id: int
    prompt: str
    backend: object                       # anything with .edit(EditRequest)
    projection_steps: int = 5             # N: steps preserving reprojected pixels
    total_steps: int = 20                 # T
    propagation_mode: str = ACCUMULATED
    seed: int = 0
    negative_prompt: str = ""
    guidance: float = 7.5
    control_scale: float = 0.5
    noise_strength: tuple[float, float] = (0.8, 0.98)
    max_views: int = 100
    delta: float = 1e-6
    depth_clamp: tuple[float, float] | None = None
    tolerance: DepthTestTolerance = field(default_factory=DepthTestTolerance)

    def __post_init__(self):
        if self.total_steps < 1:
            raise ConfigurationError(f"total steps must be >= 1, got {self.total_steps}")
        if not 0 <= self.projection_steps <= self.total_steps:
            raise ConfigurationError(
                f"projection steps {self.projection_steps} outside [0, {self.total_steps}]"
            )
        if self.propagation_mode not in (REFERENCE_ONLY, ACCUMULATED):
            raise ConfigurationError(f"unknown propagation mode {self.propagation_mode!r}")
        if self.max_views < 1:
            raise ConfigurationError(f"max_views must be >= 1, got {self.max_views}")
        ids = [v.view_id for v in self.views]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("view ids must be unique")
        if self.reference_id not in ids:
            raise ConfigurationError(f"reference view {self.reference_id} not in session")

    def view(self, view_id: int) -> CameraView:
        for v in self.views:
            if v.view_id == view_id:
                return v
        raise ConfigurationError(f"view {view_id} not in session")


@dataclass
class ViewEditResult:
    view_id: int
    edited: np.ndarray                       # (H, W, 3) uint8
    mask: np.ndarray                         # object mask used
    schedule: MaskSchedule | None
    projected: np.ndarray | None = None      # I^p as uint8 (zeros off-visibility)
    vis_mask: np.ndarray | None = None       # M_vis
    inpaint_mask: np.ndarray | None = None   # M^p = M ∧ ¬M_vis
    backend_id: str = ""
    steps_run: int = 0
    seed_used: int = 0
    warnings: list[str] = field(default_factory=list)
    changed: bool = False
    skipped: bool = False


@dataclass
class SessionResult:
    order: list[int]
    reference_id: int
    records: list[ViewEditResult]
    complete: bool
    error: dict | None = None


def count_reprojected_mask_pixels(
    src: CameraView,
    src_mask: np.ndarray,
    dst: CameraView,
    tol: DepthTestTolerance,
) -> int:
    """How many of src's masked pixels land in dst's frustum and pass the
    depth test against dst's distance map."""
    ys, xs = np.nonzero(src_mask)
    if ys.size == 0:
        return 0
    world = unproject_map(src.camera, src.distance)[ys, xs]
    uv, _, in_frustum = project_points(world, dst.camera)
    if not np.any(in_frustum):
        return 0
    expected = np.linalg.norm(world[in_frustum] - dst.camera.center(), axis=1)
    sampled = sample_bilinear(dst.distance, uv[in_frustum])
    return int(np.sum(depth_test_pass(sampled, expected, tol)))


def order_views(
    views: list[CameraView],
    masks: dict[int, np.ndarray],
    reference_id: int,
    tol: DepthTestTolerance = DepthTestTolerance(),
) -> list[int]:
    """Greedy proximity order: starting at the reference, repeatedly pick the
    remaining view that receives the most reprojected mask pixels from the
    current view; ties break toward the smaller view id."""
    by_id = {v.view_id: v for v in views}
    if reference_id not in by_id:
        raise ConfigurationError(f"reference view {reference_id} not among views")
    if not np.any(masks.get(reference_id, np.zeros(1, dtype=bool))):
        raise ConfigurationError(
            f"reference view {reference_id} has an empty mask; nothing to propagate"
        )
    order = [reference_id]
    remaining = sorted(vid for vid in by_id if vid != reference_id)
    while remaining:
        current = by_id[order[-1]]
        current_mask = masks[current.view_id]
        counts = [
            count_reprojected_mask_pixels(current, current_mask, by_id[vid], tol)
            for vid in remaining
        ]
        best = int(np.argmax(counts))  # argmax takes the first max: smallest id wins ties
        order.append(remaining.pop(best))
    return order


def _conditioning_disparity(view: CameraView, session: EditSession) -> np.ndarray:
    depth = distance_to_depth(view.distance, view.camera)
    return depth_to_disparity(depth, delta=session.delta, clamp=session.depth_clamp).normalized


def _invoke_backend(
    session: EditSession,
    view: CameraView,
    init_image: np.ndarray,
    schedule: MaskSchedule,
) -> EditResponse:
    request = EditRequest(
        init_image=init_image,
        disparity=_conditioning_disparity(view, session),
        schedule=schedule,
        prompt=session.prompt,
        negative_prompt=session.negative_prompt,
        guidance=session.guidance,
        control_scale=session.control_scale,
        seed=session.seed,
        noise_strength=session.noise_strength,
    )
    try:
        return session.backend.edit(request)
    except BackendError as exc:
        raise type(exc)(f"view {view.view_id}: {exc}") from exc


def _enforce_outside_mask(
    view: CameraView, mask: np.ndarray, edited: np.ndarray, warnings: list[str]
) -> np.ndarray:
    """Pixels outside the object mask are the original image, bit-exactly."""
    outside = ~mask
    violated = int(np.sum(np.any(edited != view.image, axis=-1) & outside))
    out = np.where(mask[..., None], edited, view.image)
    if violated:
        warnings.append(
            f"backend changed {violated} pixels outside the mask; clamped to original"
        )
        logger.warning("view %d: clamped %d out-of-mask pixels", view.view_id, violated)
    return out.astype(np.uint8)


def _project_prior_edits(
    session: EditSession, view: CameraView, prior: list[ViewEditResult]
) -> tuple[np.ndarray, np.ndarray]:
    """Fuse prior edited views into (I^p uint8, M_vis).

    Per pixel the sample comes from the nearest source surface among the
    prior views that pass the depth test; visibility additionally requires
    the source pixel to lie inside that source's object mask (the edit only
    fills the masked region, so only that content is propagatable).
    """
    h, w = view.camera.shape()
    best_dist = np.full((h, w), np.inf)
    fused = np.zeros((h, w, 3), dtype=np.float64)
    for record in prior:
        src_view = session.view(record.view_id)
        src = CameraView(
            camera=src_view.camera,
            image=record.edited,
            distance=src_view.distance,
            view_id=src_view.view_id,
        )
        result = warp_into(src, view.camera, view.distance, session.tolerance)
        vis = result.visibility & sample_mask_nearest(record.mask, result.source_uv)
        take = vis & (result.source_distance < best_dist)
        best_dist[take] = result.source_distance[take]
        fused[take] = result.warped[take]
    vis_mask = np.isfinite(best_dist) & (best_dist < np.inf)
    projected = np.zeros((h, w, 3), dtype=np.uint8)
    projected[vis_mask] = quantize_u8(fused[vis_mask])
    return projected, vis_mask


def propagate_edit(
    session: EditSession, view_id: int, prior: list[ViewEditResult]
) -> ViewEditResult:
    """Edit one view from prior edits: reproject, compose the init image,
    build the hybrid schedule, call the backend, and enforce the
    outside-mask contract."""
    if not prior:
        raise ConfigurationError("propagate_edit needs at least the edited reference")
    view = session.view(view_id)
    mask = view.mask
    if mask is None or not np.any(mask):
        return ViewEditResult(
            view_id=view_id,
            edited=view.image.copy(),
            mask=np.zeros(view.camera.shape(), dtype=bool) if mask is None else mask,
            schedule=None,
            skipped=True,
            changed=False,
            backend_id="",
            warnings=["empty mask: view passed through unedited"],
        )

    if session.projection_steps == 0:
        # plain depth-conditioned inpainting of the original image: no
        # reprojection enters the init or the schedule
        projected = None
        vis_mask = np.zeros_like(mask)
        init = view.image
    else:
        if session.propagation_mode == REFERENCE_ONLY:
            sources = [r for r in prior if r.view_id == session.reference_id]
        else:
            sources = [r for r in prior if not r.skipped]
        projected, vis_mask = _project_prior_edits(session, view, sources)
        init = np.where((vis_mask & mask)[..., None], projected, view.image).astype(np.uint8)
    schedule = build_hybrid_schedule(
        mask, vis_mask, session.projection_steps, session.total_steps
    )
    response = _invoke_backend(session, view, init, schedule)
    warnings = list(response.warnings)
    edited = _enforce_outside_mask(view, mask, response.image, warnings)
    changed = bool(np.any(edited != view.image))
    if not changed:
        warnings.append("zero-change edit: output identical to the input image")
    return ViewEditResult(
        view_id=view_id,
        edited=edited,
        mask=mask,
        schedule=schedule,
        projected=projected,
        vis_mask=vis_mask,
        inpaint_mask=mask & ~vis_mask,
        backend_id=response.backend_id,
        steps_run=response.steps_run,
        seed_used=response.seed_used,
        warnings=warnings,
        changed=changed,
    )


def edit_reference(session: EditSession) -> ViewEditResult:
    """Edit the reference view with a plain full-mask schedule (no projection)."""
    view = session.view(session.reference_id)
    mask = view.mask
    if mask is None or not np.any(mask):
        raise ConfigurationError(
            f"reference view {session.reference_id} has an empty mask; nothing to edit"
        )
    schedule = full_mask_schedule(mask, session.total_steps)
    response = _invoke_backend(session, view, view.image, schedule)
    warnings = list(response.warnings)
    edited = _enforce_outside_mask(view, mask, response.image, warnings)
    changed = bool(np.any(edited != view.image))
    if not changed:
        warnings.append("zero-change edit: output identical to the input image")
    return ViewEditResult(
        view_id=view.view_id,
        edited=edited,
        mask=mask,
        schedule=schedule,
        vis_mask=np.zeros_like(mask),
        inpaint_mask=mask,
        backend_id=response.backend_id,
        steps_run=response.steps_run,
        seed_used=response.seed_used,
        warnings=warnings,
        changed=changed,
    )


def run_session(session: EditSession) -> SessionResult:
    """Order the views, edit the reference, then sweep; deterministic given
    the seed.  A failing view aborts with a partial result marked incomplete."""
    for view in session.views:
        if view.image is None or view.distance is None:
            raise DataError(f"view {view.view_id}: session views need image and distance")
        if view.mask is None:
            raise DataError(f"view {view.view_id}: session views need an object mask")
    masks = {v.view_id: v.mask for v in session.views}
    order = order_views(session.views, masks, session.reference_id, session.tolerance)
    order = order[: session.max_views]

    records: list[ViewEditResult] = []
    try:
        records.append(edit_reference(session))
        logger.info("edited reference view %d", session.reference_id)
        for view_id in order[1:]:
            records.append(propagate_edit(session, view_id, records))
            logger.info("edited view %d (%d/%d)", view_id, len(records), len(order))
    except BackendError as exc:
        failed = order[len(records)]
        logger.error("aborting session at view %d: %s", failed, exc)
        return SessionResult(
            order=order,
            reference_id=session.reference_id,
            records=records,
            complete=False,
            error={"view_id": failed, "message": str(exc)},
        )
    return SessionResult(
        order=order,
        reference_id=session.reference_id,
        records=records,
        complete=True,
    )
