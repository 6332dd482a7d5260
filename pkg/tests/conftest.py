import numpy as np
import pytest

from mvedit.geometry import DepthTestTolerance
from mvedit.synth import (
    ArcSpec,
    CorruptionSpec,
    DiskSpec,
    SceneSpec,
    SphereSpec,
    render_scene,
)


def iou(a, b):
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    union = (a | b).sum()
    return (a & b).sum() / union if union else 1.0


@pytest.fixture(scope="session")
def tol():
    return DepthTestTolerance()


@pytest.fixture(scope="session")
def plane_disk_spec():
    """Textured plane with a disk decal as the object; 8-camera arc."""
    return SceneSpec(
        width=128,
        height=128,
        sphere=None,
        disk=DiskSpec(center=(0, 0, 0), radius=1.0),
        mask_object="disk",
        cameras=ArcSpec(count=8, radius=4.0, look_at=(0, 0, 0), span_deg=60),
    )


@pytest.fixture(scope="session")
def plane_disk_views(plane_disk_spec):
    return render_scene(plane_disk_spec)


@pytest.fixture(scope="session")
def sphere_spec():
    """Floating sphere over the plane; the sphere is the object."""
    return SceneSpec(
        width=160,
        height=160,
        sphere=SphereSpec(center=(0, 0, 1.2), radius=1.0),
        cameras=ArcSpec(count=8, radius=4.0, look_at=(0, 0, 1.2), span_deg=75),
    )


@pytest.fixture(scope="session")
def sphere_views(sphere_spec):
    return render_scene(sphere_spec)


@pytest.fixture(scope="session")
def occluder_spec():
    """Disk object on the plane, partly hidden behind a floating sphere."""
    return SceneSpec(
        width=128,
        height=128,
        sphere=SphereSpec(center=(0, -1.2, 1.0), radius=0.45),
        disk=DiskSpec(center=(0, 0, 0), radius=1.0),
        mask_object="disk",
        cameras=ArcSpec(count=8, radius=4.0, look_at=(0, 0, 0), span_deg=60, elevation_deg=30),
    )


@pytest.fixture(scope="session")
def occluder_views(occluder_spec):
    return render_scene(occluder_spec)


@pytest.fixture(scope="session")
def occlusion_accept_spec():
    """Small silhouette relative to the image, for visibility-oracle tests."""
    return SceneSpec(
        width=256,
        height=256,
        sphere=SphereSpec(center=(0, 0, 1.5), radius=0.22),
        cameras=ArcSpec(count=8, radius=5.0, look_at=(0, 0, 0.8), span_deg=50),
    )


@pytest.fixture(scope="session")
def robustness_spec():
    """10 views with 3 corrupted (dilated, eroded, dropped): 70% correct."""
    return SceneSpec(
        width=160,
        height=160,
        sphere=SphereSpec(center=(0, 0, 1.2), radius=1.0),
        cameras=ArcSpec(count=10, radius=4.0, look_at=(0, 0, 1.2), span_deg=75),
        corruption=CorruptionSpec(dilate=((1, 10),), erode=((4, 10),), drop=(7,)),
    )
