"""File codecs: PFM float rasters, 8-bit PNG images/masks, ASCII PLY point
clouds, and camera JSON records.

PFM files are written grayscale ("Pf"), 32-bit float, scale header -1.0
(little-endian), rows bottom-to-top per the format definition.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np
from PIL import Image

from .errors import DataError
from .geometry import CameraModel


def write_pfm(path, values: np.ndarray):
    values = np.asarray(values, dtype=np.float32)
    if values.ndim != 2:
        raise DataError(f"PFM writer expects a 2D raster, got shape {values.shape}")
    h, w = values.shape
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{w} {h}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        fh.write(np.flipud(values).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline().rstrip()
        if header == b"Pf":
            channels = 1
        elif header == b"PF":
            channels = 3
        else:
            raise DataError(f"{path}: bad PFM header {header!r}")
        dims = fh.readline().split()
        if len(dims) != 2:
            raise DataError(f"{path}: bad PFM dimension line")
        try:
            w, h = int(dims[0]), int(dims[1])
            scale = float(fh.readline())
        except ValueError as exc:
            raise DataError(f"{path}: bad PFM header field: {exc}") from exc
        if w <= 0 or h <= 0 or scale == 0:
            raise DataError(f"{path}: bad PFM header values (w={w}, h={h}, scale={scale})")
        dtype = "<f4" if scale < 0 else ">f4"
        count = w * h * channels
        data = np.frombuffer(fh.read(count * 4), dtype=dtype)
        if data.size != count:
            raise DataError(f"{path}: truncated PFM payload")
    shape = (h, w) if channels == 1 else (h, w, 3)
    return np.flipud(data.reshape(shape)).astype(np.float32)


def write_image(path, image: np.ndarray):
    image = np.asarray(image)
    if image.dtype != np.uint8:
        raise DataError(f"image writer expects uint8, got {image.dtype}")
    Image.fromarray(image).save(path)


def read_image(path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: cannot decode image: {exc}") from exc


def write_mask(path, mask: np.ndarray):
    mask = np.asarray(mask)
    if mask.dtype == bool:
        mask = mask.astype(np.uint8) * 255
    Image.fromarray(mask, mode="L").save(path)


def read_mask(path) -> np.ndarray:
    """Load an 8-bit grayscale mask as bool (>127 means object)."""
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("L")) > 127
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: cannot decode mask: {exc}") from exc


def write_ply(path, points, scores, source_views):
    """ASCII PLY with x, y, z, score, source_view per vertex."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    source_views = np.asarray(source_views, dtype=np.int64).reshape(-1)
    if not (len(points) == len(scores) == len(source_views)):
        raise DataError("PLY writer: mismatched point/score/view lengths")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {len(points)}\n")
        fh.write("property float x\nproperty float y\nproperty float z\n")
        fh.write("property float score\nproperty int source_view\n")
        fh.write("end_header\n")
        for p, s, sv in zip(points, scores, source_views):
            fh.write(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g} {s:.9g} {sv}\n")


def read_ply(path):
    """Read back the ASCII PLY layout produced by :func:`write_ply`."""
    with open(path, "r", encoding="ascii") as fh:
        if fh.readline().strip() != "ply":
            raise DataError(f"{path}: not a PLY file")
        n = None
        for line in fh:
            line = line.strip()
            if line.startswith("element vertex"):
                n = int(line.split()[-1])
            elif line == "end_header":
                break
        else:
            raise DataError(f"{path}: missing end_header")
        if n is None:
            raise DataError(f"{path}: missing vertex element")
        rows = [fh.readline().split() for _ in range(n)]
    data = np.array(rows, dtype=np.float64).reshape(n, 5) if n else np.zeros((0, 5))
    return data[:, :3], data[:, 3], data[:, 4].astype(np.int64)


def camera_to_json(camera: CameraModel) -> dict:
    return {
        "width": camera.width,
        "height": camera.height,
        "fx": camera.fx,
        "fy": camera.fy,
        "cx": camera.cx,
        "cy": camera.cy,
        "world_to_camera": [float(x) for x in camera.world_to_camera().reshape(-1)],
    }


def camera_from_json(record: dict) -> CameraModel:
    try:
        w2c = np.asarray(record["world_to_camera"], dtype=np.float64)
        if w2c.size != 12:
            raise DataError(f"world_to_camera must have 12 numbers, got {w2c.size}")
        w2c = w2c.reshape(3, 4)
        return CameraModel(
            fx=float(record["fx"]),
            fy=float(record["fy"]),
            cx=float(record["cx"]),
            cy=float(record["cy"]),
            width=int(record["width"]),
            height=int(record["height"]),
            rotation=w2c[:, :3],
            translation=w2c[:, 3],
        )
    except KeyError as exc:
        raise DataError(f"camera record missing field {exc}") from exc


def write_cameras_json(path, cameras: dict[int, CameraModel]):
    """JSON array of {id, width, height, fx, fy, cx, cy, world_to_camera}."""
    records = [{"id": vid, **camera_to_json(cam)} for vid, cam in sorted(cameras.items())]
    write_json_atomic(path, records)


def read_cameras_json(path) -> dict[int, CameraModel]:
    with open(path, "r", encoding="utf-8") as fh:
        records = json.load(fh)
    return {int(rec["id"]): camera_from_json(rec) for rec in records}


def write_json_atomic(path, payload):
    """Serialize deterministically (sorted keys) and rename into place."""
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
