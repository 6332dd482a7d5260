"""Depth-aware multi-view image editing toolkit."""

__version__ = "0.1.0"

from .errors import (
    BackendError,
    ConfigurationError,
    DataError,
    MVEditError,
    ProtocolError,
    TransportError,
)
from .geometry import (
    CameraModel,
    CameraView,
    DepthTestTolerance,
    depth_to_disparity,
    distance_to_depth,
    project,
    quantize_u8,
    reproject_view,
    unproject,
)

__all__ = [
    "BackendError",
    "CameraModel",
    "CameraView",
    "ConfigurationError",
    "DataError",
    "DepthTestTolerance",
    "MVEditError",
    "ProtocolError",
    "TransportError",
    "depth_to_disparity",
    "distance_to_depth",
    "project",
    "quantize_u8",
    "reproject_view",
    "unproject",
]
