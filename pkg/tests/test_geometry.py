"""Geometry core: conversions, projection round trips, and depth-tested
warping, checked against closed-form oracles on the analytic scenes."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvedit.errors import ConfigurationError, DataError
from mvedit.geometry import (
    CameraModel,
    CameraView,
    DepthTestTolerance,
    depth_to_disparity,
    distance_to_depth,
    pixel_grid,
    project,
    project_points,
    quantize_u8,
    ray_cosines,
    reproject_view,
    unproject,
    unproject_map,
)
from mvedit.synth import first_hits, homography_oracle


def identity_camera(width=64, height=48, f=100.0):
    return CameraModel(
        fx=f, fy=f, cx=width // 2, cy=height // 2,
        width=width, height=height,
        rotation=np.eye(3), translation=np.zeros(3),
    )


def rotation_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=np.float64)
    axis /= np.linalg.norm(axis)
    k = np.array([
        [0, -axis[2], axis[1]],
        [axis[2], 0, -axis[0]],
        [-axis[1], axis[0], 0],
    ])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


class TestCameraModel:
    def test_rejects_non_orthonormal_rotation(self):
        bad = np.eye(3)
        bad[0, 1] = 1e-3
        with pytest.raises(ConfigurationError):
            CameraModel(100, 100, 32, 24, 64, 48, bad, np.zeros(3))

    def test_rejects_reflection(self):
        refl = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ConfigurationError):
            CameraModel(100, 100, 32, 24, 64, 48, refl, np.zeros(3))

    def test_rejects_principal_point_outside_image(self):
        with pytest.raises(ConfigurationError):
            CameraModel(100, 100, 70, 24, 64, 48, np.eye(3), np.zeros(3))

    def test_center_inverts_translation(self):
        rot = rotation_from_axis_angle([0, 1, 0], 0.3)
        center = np.array([1.0, -2.0, 0.5])
        cam = CameraModel(100, 100, 32, 24, 64, 48, rot, -rot @ center)
        np.testing.assert_allclose(cam.center(), center, atol=1e-12)


class TestDistanceToDepth:
    def test_principal_point_ray_is_identity(self):
        # the ray through (cx, cy) is the optical axis: cos = 1
        cam = identity_camera()
        dist = np.full(cam.shape(), 1.0, dtype=np.float32)
        dist[cam.cy, cam.cx] = 2.0
        depth = distance_to_depth(dist, cam)
        assert depth[cam.cy, cam.cx] == pytest.approx(2.0, abs=1e-12)

    def test_known_ray_cosine(self):
        # (u - cx)/fx = 0.75 makes the unit ray z-component exactly 0.8
        cam = identity_camera(width=256, height=64, f=100.0)
        u = int(cam.cx + 75)
        dist = np.ones(cam.shape(), dtype=np.float32) * 5.0
        depth = distance_to_depth(dist, cam)
        assert depth[cam.cy, u] == pytest.approx(4.0, abs=1e-9)

    def test_plane_scene_matches_analytic_intersection(self, plane_disk_spec, plane_disk_views):
        view = plane_disk_views[0]
        depth = distance_to_depth(view.distance, view.camera)
        # analytic plane-ray z-depth: t * cos(theta) with t from the plane equation
        n = np.array(plane_disk_spec.plane.normal, dtype=np.float64)
        n /= np.linalg.norm(n)
        dirs_world = (
            np.linalg.inv(view.camera.rotation) @ _unit_rays(view.camera).reshape(-1, 3).T
        ).T
        t = (plane_disk_spec.plane.offset - n @ view.camera.center()) / (dirs_world @ n)
        expected = t.reshape(view.camera.shape()) * ray_cosines(view.camera)
        assert np.abs(depth - expected).max() < 1e-6

    def test_monotone_and_bounded_by_distance(self):
        cam = identity_camera()
        rng = np.random.default_rng(0)
        d1 = rng.uniform(0.5, 5.0, cam.shape()).astype(np.float32)
        d2 = d1 + rng.uniform(0.0, 1.0, cam.shape()).astype(np.float32)
        depth1 = distance_to_depth(d1, cam)
        depth2 = distance_to_depth(d2, cam)
        assert np.all(depth2 >= depth1)
        assert np.all(depth1 <= d1 + 1e-9)

    def test_nonpositive_distance_names_pixel(self):
        cam = identity_camera()
        dist = np.ones(cam.shape(), dtype=np.float32)
        dist[5, 7] = -1.0
        with pytest.raises(DataError, match=r"\(7, 5\)"):
            distance_to_depth(dist, cam)

    def test_dimension_mismatch(self):
        cam = identity_camera()
        with pytest.raises(ConfigurationError):
            distance_to_depth(np.ones((10, 10), dtype=np.float32), cam)


def _unit_rays(cam):
    u, v = pixel_grid(cam)
    x = (u - cam.cx) / cam.fx
    y = (v - cam.cy) / cam.fy
    d = np.stack([x, y, np.ones_like(x)], axis=-1)
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


class TestDisparity:
    def test_unit_depth_zero_delta(self):
        disp = depth_to_disparity(np.array([[1.0]]), delta=0.0)
        assert disp.values[0, 0] == 1.0

    def test_clamp_lifts_small_depth(self):
        # depth 0.5 clamped into [1, 5] behaves as depth 1.0
        delta = 1e-6
        disp = depth_to_disparity(np.array([[0.5, 2.0]]), delta=delta, clamp=(1.0, 5.0))
        assert disp.values[0, 0] == pytest.approx(1.0 / (1.0 + delta), rel=1e-12)

    def test_constant_depth_normalizes_to_zero(self):
        disp = depth_to_disparity(np.full((4, 4), 3.0))
        assert np.all(disp.normalized == 0.0)

    def test_normalized_range(self):
        rng = np.random.default_rng(1)
        disp = depth_to_disparity(rng.uniform(1.0, 5.0, (16, 16)))
        assert disp.normalized.min() == 0.0
        assert disp.normalized.max() == 1.0

    def test_empty_clamp_range_rejected(self):
        with pytest.raises(ConfigurationError):
            depth_to_disparity(np.ones((2, 2)), clamp=(5.0, 1.0))

    def test_disparity_decreases_with_depth(self):
        disp = depth_to_disparity(np.array([[1.0, 2.0, 3.0]]))
        assert np.all(np.diff(disp.values[0]) < 0)


class TestUnprojectProject:
    def test_axis_ray(self):
        cam = identity_camera()
        point = unproject((cam.cx, cam.cy), 3.0, cam)
        np.testing.assert_allclose(point, [0, 0, 3.0], atol=1e-12)

    def test_out_of_bounds_pixel_rejected(self):
        cam = identity_camera()
        with pytest.raises(ValueError):
            unproject((cam.width, 0), 1.0, cam)

    def test_axis_point_projects_to_principal_point(self):
        cam = identity_camera()
        u, v, z, in_frustum = project(np.array([0.0, 0.0, 2.0]), cam)
        assert (u, v, z) == pytest.approx((cam.cx, cam.cy, 2.0))
        assert in_frustum

    def test_point_behind_camera(self):
        cam = identity_camera()
        *_, z, in_frustum = project(np.array([0.0, 0.0, -1.0]), cam)
        assert z < 0 and not in_frustum

    def test_scalar_round_trip(self):
        cam = CameraModel(
            120, 110, 30.5, 20.5, 64, 48,
            rotation_from_axis_angle([0.2, 1.0, -0.3], 0.7),
            np.array([0.3, -1.0, 2.0]),
        )
        point = unproject((11.25, 40.5), 2.5, cam)
        u, v, z, in_frustum = project(point, cam)
        assert in_frustum
        assert (u, v) == pytest.approx((11.25, 40.5), abs=1e-9)

    def test_batch_round_trip_1000_points(self):
        cam = CameraModel(
            140, 140, 63.5, 63.5, 128, 128,
            rotation_from_axis_angle([1, 2, 3], -0.4),
            np.array([1.0, 0.5, -2.0]),
        )
        rng = np.random.default_rng(42)
        u = rng.uniform(0, cam.width - 1e-6, 1000)
        v = rng.uniform(0, cam.height - 1e-6, 1000)
        d = rng.uniform(0.5, 10.0, 1000)
        pts = np.array([unproject((ui, vi), di, cam) for ui, vi, di in zip(u, v, d)])
        uv, z, in_frustum = project_points(pts, cam)
        assert in_frustum.all()
        err = np.abs(uv - np.stack([u, v], axis=1)).max()
        assert err < 1e-5

    @settings(max_examples=100, deadline=None)
    @given(
        u=st.floats(0, 63.9),
        v=st.floats(0, 47.9),
        dist=st.floats(0.1, 50.0),
        angle=st.floats(-1.2, 1.2),
    )
    def test_round_trip_property(self, u, v, dist, angle):
        cam = CameraModel(
            90.0, 95.0, 32.0, 24.0, 64, 48,
            rotation_from_axis_angle([0.1, 0.9, 0.2], angle),
            np.array([0.5, 0.2, -1.0]),
        )
        pu, pv, z, _ = project(unproject((u, v), dist, cam), cam)
        assert pu == pytest.approx(u, abs=1e-5)
        assert pv == pytest.approx(v, abs=1e-5)

    def test_plane_scene_points_lie_on_plane(self, plane_disk_spec, plane_disk_views):
        view = plane_disk_views[2]
        pts = unproject_map(view.camera, view.distance).reshape(-1, 3)
        n = np.array(plane_disk_spec.plane.normal, dtype=np.float64)
        n /= np.linalg.norm(n)
        residual = np.abs(pts @ n - plane_disk_spec.plane.offset)
        assert residual.max() < 1e-6 * np.abs(pts).max()


class TestReprojectView:
    def test_identity_warp(self, sphere_views):
        view = sphere_views[0]
        warped, vis = reproject_view(view, view.camera, view.distance)
        assert vis.all()
        assert np.array_equal(quantize_u8(warped), view.image)

    def test_missing_distance_is_data_error(self, sphere_views):
        view = sphere_views[0]
        src = CameraView(camera=view.camera, image=view.image, distance=None)
        with pytest.raises(DataError):
            reproject_view(src, view.camera, view.distance)

    def test_plane_warp_matches_homography_oracle(self, plane_disk_spec, plane_disk_views):
        va, vb = plane_disk_views[1], plane_disk_views[6]
        warped, vis = reproject_view(vb, va.camera, va.distance)
        oracle, valid = homography_oracle(plane_disk_spec, va.camera, vb.camera, vb.image)
        both = vis & valid
        assert both.mean() > 0.5
        assert np.abs(warped[both] - oracle[both]).max() / 255.0 <= 1e-3

    def test_visibility_conservative_under_tolerance_growth(self, sphere_views):
        va, vb = sphere_views[0], sphere_views[5]
        tols = [
            DepthTestTolerance(1e-4, 0.001),
            DepthTestTolerance(1e-3, 0.01),
            DepthTestTolerance(1e-2, 0.05),
        ]
        masks = [reproject_view(vb, va.camera, va.distance, t)[1] for t in tols]
        for smaller, larger in zip(masks, masks[1:]):
            assert np.all(larger[smaller])  # vis(tol1) ⊆ vis(tol2)

    @settings(max_examples=20, deadline=None)
    @given(scale=st.floats(1.0, 20.0))
    def test_tolerance_growth_property(self, sphere_views, scale):
        va, vb = sphere_views[2], sphere_views[6]
        base = DepthTestTolerance(1e-4, 0.002)
        grown = DepthTestTolerance(1e-4 * scale, 0.002 * scale)
        _, vis_base = reproject_view(vb, va.camera, va.distance, base)
        _, vis_grown = reproject_view(vb, va.camera, va.distance, grown)
        assert np.all(vis_grown[vis_base])

    def test_occlusion_agrees_with_ray_oracle(self, occlusion_accept_spec):
        from mvedit.synth import render_scene

        views = render_scene(occlusion_accept_spec)
        va, vb = views[0], views[4]
        _, vis = reproject_view(vb, va.camera, va.distance)
        oracle = ray_visibility_oracle(occlusion_accept_spec, vb.camera, va, DepthTestTolerance())
        assert (vis == oracle).mean() >= 0.995


def ray_visibility_oracle(spec, src_camera, dst_view, tol):
    """Brute-force two-segment occlusion check: the destination segment is
    exact by construction (ground-truth distance); the source segment is
    visible iff the first scene hit is the surface point itself."""
    world = unproject_map(dst_view.camera, dst_view.distance).reshape(-1, 3)
    center = src_camera.center()
    delta = world - center
    dist = np.linalg.norm(delta, axis=1)
    t, _ = first_hits(spec, np.broadcast_to(center, delta.shape), delta / dist[:, None])
    _, _, in_frustum = project_points(world, src_camera)
    visible = in_frustum & (t >= dist - tol.bound(dist))
    return visible.reshape(dst_view.camera.shape())
