"""Command-line interface.

Verbs: synth, refine-masks, order-views, edit, reproject, metrics.
Exit codes: 0 ok, 2 configuration error, 3 data error, 4 backend/transport
error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import formats, synth
from .backends import MockEditorBackend, RemoteEditorBackend
from .errors import ConfigurationError, MVEditError
from .geometry import CameraView, quantize_u8, reproject_view
from .masks import RefineConfig, SpherePrior, refine_masks
from .metrics import (
    SurrogateEmbeddingProvider,
    direction_consistency,
    masked_reprojection_error,
    text_image_direction_similarity,
)
from .pipeline import EditSession, run_session
from .scene import load_scene, load_session, save_refined_scene, save_scene, save_session

logger = logging.getLogger("mvedit")


class _JsonLogFormatter(logging.Formatter):
    def format(self, record):
        return json.dumps(
            {"level": record.levelname.lower(), "logger": record.name, "message": record.getMessage()},
            sort_keys=True,
        )


def _setup_logging(mode: str):
    handler = logging.StreamHandler(sys.stderr)
    if mode == "json":
        handler.setFormatter(_JsonLogFormatter())
    else:
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.INFO)


def _make_backend(spec: str):
    if spec == "mock":
        return MockEditorBackend()
    if spec.startswith("remote:"):
        return RemoteEditorBackend(spec[len("remote:"):])
    raise ConfigurationError(f"unknown backend {spec!r}; use 'mock' or 'remote:<url>'")


def _cmd_synth(args) -> int:
    spec = synth.load_spec(args.spec)
    views = synth.render_scene(spec)
    gt_masks = {v.view_id: v.mask for v in views}
    if spec.corruption is not None:
        views = synth.corrupt_masks(views, spec.corruption)
    manifest = save_scene(
        args.out,
        views,
        extra_masks={"gt_mask": gt_masks},
        overwrite=args.overwrite,
    )
    formats.write_json_atomic(os.path.join(args.out, "scene_spec.json"), synth.spec_to_json(spec))
    logger.info("wrote %d views to %s", len(views), manifest)
    return 0


def _cmd_refine_masks(args) -> int:
    scene = load_scene(args.scene)
    sphere = None
    if args.radius != "auto":
        if args.center is None:
            raise ConfigurationError("--center is required when --radius is explicit")
        center = [float(x) for x in args.center.split(",")]
        sphere = SpherePrior(center=np.asarray(center), radius=float(args.radius))
    elif scene.sphere_prior:
        sphere = SpherePrior(
            center=np.asarray(scene.sphere_prior["center"]),
            radius=float(scene.sphere_prior["radius"]),
        )
    config = RefineConfig(
        tau=args.tau,
        sphere=sphere,
        filter_radius=args.filter_radius,
        filter_eps=args.eps,
        threshold=args.threshold,
    )
    refined, cloud = refine_masks(scene.camera_views(mask="initial"), scene.tolerance, config)
    manifest = save_refined_scene(args.out, scene, refined, cloud, overwrite=args.overwrite)
    logger.info("wrote refined masks for %d views to %s", len(refined.view_ids), manifest)
    return 0


def _cmd_order_views(args) -> int:
    from .pipeline import order_views

    scene = load_scene(args.scene)
    views = scene.camera_views(mask=args.mask)
    masks = {v.view_id: v.mask for v in views}
    reference = args.reference if args.reference is not None else views[0].view_id
    order = order_views(views, masks, reference, scene.tolerance)
    payload = {"reference": reference, "order": order}
    if args.out:
        formats.write_json_atomic(args.out, payload)
    print(json.dumps(payload, sort_keys=True))
    return 0


def _cmd_edit(args) -> int:
    scene = load_scene(args.scene)
    views = scene.camera_views(mask="edit")
    reference = args.reference if args.reference is not None else views[0].view_id
    session = EditSession(
        views=views,
        reference_id=reference,
        prompt=args.prompt,
        negative_prompt=args.negative_prompt,
        backend=_make_backend(args.backend),
        projection_steps=args.n,
        total_steps=args.t,
        propagation_mode=args.mode,
        seed=args.seed,
        guidance=args.guidance,
        control_scale=args.control_scale,
        max_views=args.max_views,
        delta=scene.delta,
        depth_clamp=scene.depth_clamp,
        tolerance=scene.tolerance,
    )
    result = run_session(session)
    # deliberately no filesystem paths here: outputs must be bit-identical
    # across reruns in different directories
    config_echo = {
        "prompt": args.prompt,
        "negative_prompt": args.negative_prompt,
        "projection_steps": args.n,
        "total_steps": args.t,
        "propagation_mode": args.mode,
        "seed": args.seed,
        "guidance": args.guidance,
        "control_scale": args.control_scale,
        "max_views": args.max_views,
        "backend": args.backend,
        "delta": scene.delta,
        "depth_clamp": list(scene.depth_clamp) if scene.depth_clamp else None,
        "tolerance": {"abs": scene.tolerance.abs_tol, "rel": scene.tolerance.rel_tol},
    }
    path = save_session(args.out, result, config_echo, overwrite=args.overwrite)
    if not result.complete:
        logger.error("session incomplete: %s", result.error)
        print(json.dumps({"session": path, "complete": False, "error": result.error}, sort_keys=True))
        return 4
    logger.info("edited %d views; session at %s", len(result.records), path)
    print(json.dumps({"session": path, "complete": True, "views": len(result.records)}, sort_keys=True))
    return 0


def _cmd_reproject(args) -> int:
    scene = load_scene(args.scene)
    src = scene.view(args.src).to_camera_view(mask="none")
    dst = scene.view(args.dst)
    warped, vis = reproject_view(src, dst.camera, dst.distance, scene.tolerance)
    os.makedirs(args.out, exist_ok=True)
    warped_path = os.path.join(args.out, f"warp_{args.src:04d}_into_{args.dst:04d}.png")
    vis_path = os.path.join(args.out, f"vis_{args.src:04d}_into_{args.dst:04d}.png")
    formats.write_image(warped_path, quantize_u8(warped))
    formats.write_mask(vis_path, vis)
    print(json.dumps({"warped": warped_path, "visibility": vis_path, "visible_fraction": float(vis.mean())}, sort_keys=True))
    return 0


def _make_provider(spec: str):
    if spec == "surrogate":
        return SurrogateEmbeddingProvider()
    if spec.startswith("remote:"):
        from .remote_provider import RemoteEmbeddingProvider

        return RemoteEmbeddingProvider(spec[len("remote:"):])
    raise ConfigurationError(f"unknown provider {spec!r}; use 'surrogate' or 'remote:<url>'")


def _cmd_metrics(args) -> int:
    scene = load_scene(args.scene)
    session = load_session(os.path.join(args.edited, "session.json"))
    ordered_ids = [rec["id"] for rec in session["views"]]
    orig = {v.view_id: v for v in scene.camera_views(mask="edit")}
    edited_imgs = {rec["id"]: rec["edited_image"] for rec in session["views"]}
    # measure in scene (arc) order so neighbors are geometric neighbors
    ids = sorted(ordered_ids)
    report = {"kind": args.kind}
    if args.kind == "reproj":
        views = [
            CameraView(orig[i].camera, edited_imgs[i], orig[i].distance, orig[i].mask, i)
            for i in ids
        ]
        rep = masked_reprojection_error(views, scene.tolerance)
        report.update({"per_pair": rep.per_pair, "mean": rep.mean, "pooled_mean": rep.pooled_mean})
    else:
        provider = _make_provider(args.provider)
        report["provider_id"] = provider.provider_id
        orig_frames = [orig[i].image for i in ids]
        edited_frames = [edited_imgs[i] for i in ids]
        if args.kind == "consistency":
            report.update(direction_consistency(orig_frames, edited_frames, provider))
        elif args.kind == "direction":
            target = args.target_text or session["config"].get("prompt", "")
            report.update(
                text_image_direction_similarity(
                    orig_frames, edited_frames, args.source_text, target, provider
                )
            )
        else:
            raise ConfigurationError(f"unknown metrics kind {args.kind!r}")
    formats.write_json_atomic(args.out, report)
    print(json.dumps({"report": os.path.abspath(args.out), "mean": report.get("mean")}, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvedit", description=__doc__)
    parser.add_argument("--log", choices=("text", "json"), default="text")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render an analytic scene into a manifest directory")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("refine-masks", help="make per-view masks 3D-consistent")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--radius", default="auto", help="sphere prior radius or 'auto'")
    p.add_argument("--center", default=None, help="sphere prior center as x,y,z")
    p.add_argument("--filter-radius", type=int, default=8)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=_cmd_refine_masks)

    p = sub.add_parser("order-views", help="greedy proximity ordering from a reference")
    p.add_argument("--scene", required=True)
    p.add_argument("--reference", type=int, default=None)
    p.add_argument("--mask", choices=("edit", "initial"), default="edit")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_order_views)

    p = sub.add_parser("edit", help="run a multi-view edit session")
    p.add_argument("--scene", required=True)
    p.add_argument("--prompt", required=True)
    p.add_argument("--negative-prompt", default="")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=5, help="projection-preserving steps")
    p.add_argument("--t", type=int, default=20, help="total denoising steps")
    p.add_argument("--mode", choices=("accumulated", "reference-only"), default="accumulated")
    p.add_argument("--backend", default="mock", help="mock or remote:<url>")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reference", type=int, default=None)
    p.add_argument("--guidance", type=float, default=7.5)
    p.add_argument("--control-scale", type=float, default=0.5)
    p.add_argument("--max-views", type=int, default=100)
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=_cmd_edit)

    p = sub.add_parser("reproject", help="warp one view into another")
    p.add_argument("--scene", required=True)
    p.add_argument("--src", type=int, required=True)
    p.add_argument("--dst", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_reproject)

    p = sub.add_parser("metrics", help="consistency metrics over an edited session")
    p.add_argument("--scene", required=True)
    p.add_argument("--edited", required=True, help="session output directory")
    p.add_argument("--kind", choices=("consistency", "direction", "reproj"), required=True)
    p.add_argument("--provider", default="surrogate", help="surrogate or remote:<url>")
    p.add_argument("--source-text", default="")
    p.add_argument("--target-text", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_metrics)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.log)
    try:
        return args.func(args)
    except MVEditError as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
