#!/usr/bin/env python3
"""Sweep the number of projection-preserving denoising steps N and measure
cross-view photometric consistency with the mock backend.

With the mock's linear blend the masked reprojection error scales like
(1 - N/T) relative to N = 0, so the printed ratios should track that line.

Usage: python scripts/projection_steps_ablation.py [--views 8] [--t 20]
"""

import argparse

from mvedit.backends import MockEditorBackend
from mvedit.geometry import CameraView
from mvedit.metrics import masked_reprojection_error
from mvedit.pipeline import EditSession, run_session
from mvedit.synth import ArcSpec, DiskSpec, SceneSpec, render_scene


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--views", type=int, default=8)
    parser.add_argument("--t", type=int, default=20)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--mode", default="reference-only",
                        choices=("reference-only", "accumulated"))
    parser.add_argument("--steps", type=int, nargs="*", default=[0, 5, 10, 20])
    args = parser.parse_args()

    spec = SceneSpec(
        width=128, height=128, sphere=None,
        disk=DiskSpec(center=(0, 0, 0), radius=1.0), mask_object="disk",
        cameras=ArcSpec(count=args.views, radius=4.0, look_at=(0, 0, 0), span_deg=60),
    )
    views = render_scene(spec)

    baseline = None
    print(f"mode={args.mode}  T={args.t}  views={args.views}")
    print(f"{'N':>4} {'reproj error':>14} {'ratio to N=0':>14} {'1 - N/T':>10}")
    for n in args.steps:
        session = EditSession(
            views=views, reference_id=0, prompt="tiles", backend=MockEditorBackend(),
            projection_steps=n, total_steps=args.t, seed=args.seed,
            propagation_mode=args.mode,
        )
        result = run_session(session)
        by_id = {rec.view_id: rec for rec in result.records}
        edited = [
            CameraView(v.camera, by_id[v.view_id].edited, v.distance, v.mask, v.view_id)
            for v in views
        ]
        err = masked_reprojection_error(edited).mean
        if baseline is None:
            baseline = err
        print(f"{n:>4} {err:>14.3f} {err / baseline:>14.4f} {1 - n / args.t:>10.2f}")


if __name__ == "__main__":
    main()
