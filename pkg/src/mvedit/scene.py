"""Scene manifests: the JSON description binding images, distance maps,
cameras, and masks into one portable directory, plus session output writing.

All paths inside a manifest are relative to the manifest's directory so a
scene can be moved as a unit.  Manifests are written atomically with sorted
keys; no timestamps are recorded anywhere, so reruns are bit-identical.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import formats
from .errors import ConfigurationError, DataError
from .geometry import CameraModel, CameraView, DepthTestTolerance
from .masks import RefinedMaskSet, ScoredPointCloud
from .pipeline import SessionResult

SCHEMA_VERSION = "1"
MANIFEST_NAME = "manifest.json"
SESSION_NAME = "session.json"


@dataclass
class SceneView:
    view_id: int
    camera: CameraModel
    image: np.ndarray
    distance: np.ndarray                 # clamp and override already applied
    initial_mask: np.ndarray | None = None
    refined_mask: np.ndarray | None = None
    override_mask: np.ndarray | None = None
    distance_overridden: bool = False
    source_paths: dict = field(default_factory=dict)  # original manifest paths

    def edit_mask(self) -> np.ndarray:
        """Object mask for editing: override > refined > initial."""
        for mask in (self.override_mask, self.refined_mask, self.initial_mask):
            if mask is not None:
                return mask
        raise DataError(f"view {self.view_id}: no mask available")

    def to_camera_view(self, mask: str = "edit") -> CameraView:
        if mask == "edit":
            chosen = self.edit_mask()
        elif mask == "initial":
            if self.initial_mask is None:
                raise DataError(f"view {self.view_id}: no initial mask")
            chosen = self.initial_mask
        elif mask == "none":
            chosen = None
        else:
            raise ConfigurationError(f"unknown mask kind {mask!r}")
        return CameraView(
            camera=self.camera,
            image=self.image,
            distance=self.distance,
            mask=chosen,
            view_id=self.view_id,
        )


@dataclass
class Scene:
    root: str
    views: list[SceneView]
    delta: float = 1e-6
    depth_clamp: tuple[float, float] | None = None
    tolerance: DepthTestTolerance = field(default_factory=DepthTestTolerance)
    sphere_prior: dict | None = None     # {"center": [x, y, z], "radius": r}

    def view(self, view_id: int) -> SceneView:
        for v in self.views:
            if v.view_id == view_id:
                return v
        raise ConfigurationError(f"view {view_id} not in scene")

    def camera_views(self, mask: str = "edit") -> list[CameraView]:
        return [v.to_camera_view(mask) for v in self.views]


def _global_to_json(scene: Scene) -> dict:
    return {
        "delta": scene.delta,
        "depth_clamp": list(scene.depth_clamp) if scene.depth_clamp else None,
        "tolerance": {"abs": scene.tolerance.abs_tol, "rel": scene.tolerance.rel_tol},
        "sphere_prior": scene.sphere_prior,
    }


def _load_raster(root: str, rel_path: str, view_id: int, kind: str, loader):
    path = os.path.join(root, rel_path)
    if not os.path.exists(path):
        raise DataError(f"view {view_id}: {kind} file {rel_path!r} does not exist")
    try:
        return loader(path)
    except DataError as exc:
        raise DataError(f"view {view_id}: {kind}: {exc}") from exc


def load_scene(path: str) -> Scene:
    """Load and validate a scene manifest; decodes all rasters, cross-checks
    dimensions against the cameras, and applies depth clamping and overrides."""
    import json

    if not os.path.exists(path):
        raise DataError(f"scene manifest {path!r} does not exist")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON: {exc}") from exc
    version = payload.get("schema_version")
    if version != SCHEMA_VERSION:
        raise DataError(f"{path}: unsupported schema version {version!r}")
    root = os.path.dirname(os.path.abspath(path))
    glob = payload.get("global", {})
    clamp = glob.get("depth_clamp")
    tolerance = DepthTestTolerance(
        abs_tol=glob.get("tolerance", {}).get("abs", 1e-3),
        rel_tol=glob.get("tolerance", {}).get("rel", 0.01),
    )
    views = []
    seen = set()
    for record in payload.get("views", []):
        vid = int(record["id"])
        if vid in seen:
            raise DataError(f"duplicate view id {vid} in manifest")
        seen.add(vid)
        camera = formats.camera_from_json(record["camera"])
        image = _load_raster(root, record["image"], vid, "image", formats.read_image)
        if image.shape[:2] != camera.shape():
            raise DataError(
                f"view {vid}: image shape {image.shape[:2]} does not match camera "
                f"{camera.shape()}"
            )
        if record.get("override_depth"):
            distance = _load_raster(
                root, record["override_depth"], vid, "override depth", formats.read_pfm
            )
            overridden = True
        else:
            distance = _load_raster(root, record["distance"], vid, "distance", formats.read_pfm)
            overridden = False
        if distance.shape != camera.shape():
            raise DataError(
                f"view {vid}: distance shape {distance.shape} does not match camera "
                f"{camera.shape()}"
            )
        if clamp:
            distance = np.clip(distance, clamp[0], clamp[1])
        bad = ~np.isfinite(distance) | (distance <= 0)
        if np.any(bad):
            v, u = np.argwhere(bad)[0]
            raise DataError(f"view {vid}: invalid distance at pixel ({u}, {v})")

        def load_mask(key):
            if not record.get(key):
                return None
            mask = _load_raster(root, record[key], vid, key.replace("_", " "), formats.read_mask)
            if mask.shape != camera.shape():
                raise DataError(
                    f"view {vid}: {key} shape {mask.shape} does not match camera "
                    f"{camera.shape()}"
                )
            return mask

        views.append(
            SceneView(
                view_id=vid,
                camera=camera,
                image=image,
                distance=distance,
                initial_mask=load_mask("initial_mask"),
                refined_mask=load_mask("refined_mask"),
                override_mask=load_mask("override_mask"),
                distance_overridden=overridden,
                source_paths={
                    key: record.get(key)
                    for key in (
                        "image",
                        "distance",
                        "initial_mask",
                        "refined_mask",
                        "override_depth",
                        "override_mask",
                    )
                },
            )
        )
    return Scene(
        root=root,
        views=views,
        delta=glob.get("delta", 1e-6),
        depth_clamp=tuple(clamp) if clamp else None,
        tolerance=tolerance,
        sphere_prior=glob.get("sphere_prior"),
    )


def _prepare_out_dir(out_dir: str, overwrite: bool, marker: str):
    os.makedirs(out_dir, exist_ok=True)
    target = os.path.join(out_dir, marker)
    if os.path.exists(target) and not overwrite:
        raise ConfigurationError(
            f"{target} already exists; pass overwrite to replace it"
        )


def view_file(view_id: int, kind: str, ext: str) -> str:
    return f"{view_id:04d}_{kind}.{ext}"


def save_scene(
    out_dir: str,
    views: list[CameraView],
    delta: float = 1e-6,
    depth_clamp: tuple[float, float] | None = None,
    tolerance: DepthTestTolerance = DepthTestTolerance(),
    sphere_prior: dict | None = None,
    extra_masks: dict[str, dict[int, np.ndarray]] | None = None,
    overwrite: bool = False,
) -> str:
    """Write views and a fresh manifest into ``out_dir``; returns the manifest
    path.  ``extra_masks`` maps a kind name (e.g. "gt_mask") to per-view masks
    written alongside but not referenced by the manifest."""
    _prepare_out_dir(out_dir, overwrite, MANIFEST_NAME)
    records = []
    for view in views:
        image_rel = view_file(view.view_id, "image", "png")
        dist_rel = view_file(view.view_id, "distance", "pfm")
        formats.write_image(os.path.join(out_dir, image_rel), view.image)
        formats.write_pfm(os.path.join(out_dir, dist_rel), view.distance)
        record = {
            "id": view.view_id,
            "camera": formats.camera_to_json(view.camera),
            "image": image_rel,
            "distance": dist_rel,
            "initial_mask": None,
            "refined_mask": None,
            "override_depth": None,
            "override_mask": None,
        }
        if view.mask is not None:
            mask_rel = view_file(view.view_id, "initial_mask", "png")
            formats.write_mask(os.path.join(out_dir, mask_rel), view.mask)
            record["initial_mask"] = mask_rel
        records.append(record)
    for kind, masks in (extra_masks or {}).items():
        for vid, mask in masks.items():
            formats.write_mask(os.path.join(out_dir, view_file(vid, kind, "png")), mask)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "global": {
            "delta": delta,
            "depth_clamp": list(depth_clamp) if depth_clamp else None,
            "tolerance": {"abs": tolerance.abs_tol, "rel": tolerance.rel_tol},
            "sphere_prior": sphere_prior,
        },
        "views": records,
    }
    manifest_path = os.path.join(out_dir, MANIFEST_NAME)
    formats.write_json_atomic(manifest_path, manifest)
    return manifest_path


def save_refined_scene(
    out_dir: str,
    scene: Scene,
    refined: RefinedMaskSet,
    cloud: ScoredPointCloud | None = None,
    overwrite: bool = False,
) -> str:
    """Write refined masks (plus the point cloud) and a manifest referencing
    the original rasters relative to ``out_dir``."""
    _prepare_out_dir(out_dir, overwrite, MANIFEST_NAME)
    by_id = dict(zip(refined.view_ids, refined.masks))
    records = []

    def reref(rel_path):
        if not rel_path:
            return None
        return os.path.relpath(os.path.join(scene.root, rel_path), out_dir)

    for view in scene.views:
        refined_rel = view_file(view.view_id, "refined_mask", "png")
        formats.write_mask(os.path.join(out_dir, refined_rel), by_id[view.view_id] > 127)
        records.append(
            {
                "id": view.view_id,
                "camera": formats.camera_to_json(view.camera),
                "image": reref(view.source_paths.get("image")),
                "distance": reref(view.source_paths.get("distance")),
                "initial_mask": reref(view.source_paths.get("initial_mask")),
                "refined_mask": refined_rel,
                "override_depth": reref(view.source_paths.get("override_depth")),
                "override_mask": reref(view.source_paths.get("override_mask")),
            }
        )
    if cloud is not None:
        formats.write_ply(
            os.path.join(out_dir, "points.ply"), cloud.points, cloud.scores, cloud.source_views
        )
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "global": {
            "delta": scene.delta,
            "depth_clamp": list(scene.depth_clamp) if scene.depth_clamp else None,
            "tolerance": {"abs": scene.tolerance.abs_tol, "rel": scene.tolerance.rel_tol},
            "sphere_prior": scene.sphere_prior,
        },
        "views": records,
    }
    manifest_path = os.path.join(out_dir, MANIFEST_NAME)
    formats.write_json_atomic(manifest_path, manifest)
    return manifest_path


def save_session(
    out_dir: str,
    result: SessionResult,
    config: dict,
    overwrite: bool = False,
) -> str:
    """Write edited images and per-view artifacts plus session.json."""
    _prepare_out_dir(out_dir, overwrite, SESSION_NAME)
    records = []
    for rec in result.records:
        edited_rel = view_file(rec.view_id, "edited", "png")
        formats.write_image(os.path.join(out_dir, edited_rel), rec.edited)
        record = {
            "id": rec.view_id,
            "edited": edited_rel,
            "mask": None,
            "projected": None,
            "vis_mask": None,
            "inpaint_mask": None,
            "schedule": None,
            "backend_id": rec.backend_id,
            "steps_run": rec.steps_run,
            "seed_used": rec.seed_used,
            "warnings": rec.warnings,
            "changed": rec.changed,
            "skipped": rec.skipped,
        }
        mask_rel = view_file(rec.view_id, "mask", "png")
        formats.write_mask(os.path.join(out_dir, mask_rel), rec.mask)
        record["mask"] = mask_rel
        if rec.projected is not None:
            rel = view_file(rec.view_id, "projected", "png")
            formats.write_image(os.path.join(out_dir, rel), rec.projected)
            record["projected"] = rel
        if rec.vis_mask is not None:
            rel = view_file(rec.view_id, "mvis", "png")
            formats.write_mask(os.path.join(out_dir, rel), rec.vis_mask)
            record["vis_mask"] = rel
        if rec.inpaint_mask is not None:
            rel = view_file(rec.view_id, "mp", "png")
            formats.write_mask(os.path.join(out_dir, rel), rec.inpaint_mask)
            record["inpaint_mask"] = rel
        if rec.schedule is not None:
            entries = []
            for i, entry in enumerate(rec.schedule.entries):
                rel = view_file(rec.view_id, f"schedule{i}_mask", "png")
                formats.write_mask(os.path.join(out_dir, rel), entry.mask)
                entries.append({"lo": entry.step_lo, "hi": entry.step_hi, "mask": rel})
            record["schedule"] = entries
        records.append(record)
    session = {
        "schema_version": SCHEMA_VERSION,
        "config": config,
        "reference": result.reference_id,
        "order": result.order,
        "complete": result.complete,
        "error": result.error,
        "views": records,
    }
    session_path = os.path.join(out_dir, SESSION_NAME)
    formats.write_json_atomic(session_path, session)
    return session_path


def load_session(path: str) -> dict:
    """Load session.json and decode the edited images in record order."""
    import json

    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    root = os.path.dirname(os.path.abspath(path))
    for record in payload["views"]:
        record["edited_image"] = formats.read_image(os.path.join(root, record["edited"]))
    return payload
