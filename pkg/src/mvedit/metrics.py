"""Consistency metrics: embedding-space direction scores behind a pluggable
provider, and a geometric masked reprojection error.

Zero-vector cosine policy (used by both embedding scores): if both vectors
of a comparison are zero the score is 1, if exactly one is zero it is 0.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .geometry import CameraView, DepthTestTolerance, warp_into


class SurrogateEmbeddingProvider:
    """Desk-scale stand-in for a vision-language encoder.

    Images embed as mean RGB over a grid (grid² * 3 dims); text embeds as a
    hash-expanded pseudo-vector of the same dimensionality.  The metric
    formulas are what is under test, not the encoder.
    """

    def __init__(self, grid: int = 8):
        self.grid = grid
        self.provider_id = f"surrogate-grid{grid}"
        self.dim = grid * grid * 3

    def embed_image(self, image: np.ndarray) -> np.ndarray:
        image = np.asarray(image, dtype=np.float64)
        if image.ndim != 3 or image.shape[2] != 3:
            raise ConfigurationError("surrogate provider expects (H, W, 3) images")
        h, w = image.shape[:2]
        idx = np.arange(self.grid)
        # cells never go empty: images smaller than the grid repeat pixels
        y0 = idx * h // self.grid
        y1 = np.maximum((idx + 1) * h // self.grid, y0 + 1)
        x0 = idx * w // self.grid
        x1 = np.maximum((idx + 1) * w // self.grid, x0 + 1)
        cells = [
            image[y0[i] : y1[i], x0[j] : x1[j]].reshape(-1, 3).mean(axis=0)
            for i in range(self.grid)
            for j in range(self.grid)
        ]
        return np.concatenate(cells) / 255.0

    def embed_text(self, text: str) -> np.ndarray:
        values = []
        payload = text.encode("utf-8")
        counter = 0
        while len(values) < self.dim:
            digest = hashlib.blake2b(
                payload + counter.to_bytes(4, "big"), digest_size=64
            ).digest()
            chunk = np.frombuffer(digest, dtype=">u8").astype(np.float64)
            values.extend((chunk / 2.0**63 - 1.0).tolist())
            counter += 1
        return np.asarray(values[: self.dim])


def _cosine_with_policy(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 and nb == 0.0:
        return 1.0
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b / (na * nb))


def direction_consistency(orig_frames, edited_frames, provider) -> dict:
    """Cosine between consecutive frames' (edited - original) embedding deltas.

    Returns per-pair scores and their mean.
    """
    if len(orig_frames) != len(edited_frames):
        raise ValueError(
            f"frame sequences must align: {len(orig_frames)} vs {len(edited_frames)}"
        )
    if len(orig_frames) < 2:
        raise ValueError("need at least two frames for direction consistency")
    deltas = [
        provider.embed_image(e) - provider.embed_image(o)
        for o, e in zip(orig_frames, edited_frames)
    ]
    pairs = [
        _cosine_with_policy(deltas[i], deltas[i + 1]) for i in range(len(deltas) - 1)
    ]
    return {"per_pair": pairs, "mean": float(np.mean(pairs))}


def text_image_direction_similarity(
    orig_frames, edited_frames, source_text: str, target_text: str, provider
) -> dict:
    """Mean cosine between per-frame image deltas and the text-prompt delta."""
    if len(orig_frames) != len(edited_frames):
        raise ValueError(
            f"frame sequences must align: {len(orig_frames)} vs {len(edited_frames)}"
        )
    if not hasattr(provider, "embed_text"):
        raise ConfigurationError(
            f"provider {getattr(provider, 'provider_id', provider)!r} lacks a text encoder"
        )
    text_delta = provider.embed_text(target_text) - provider.embed_text(source_text)
    per_frame = [
        _cosine_with_policy(
            provider.embed_image(e) - provider.embed_image(o), text_delta
        )
        for o, e in zip(orig_frames, edited_frames)
    ]
    return {"per_frame": per_frame, "mean": float(np.mean(per_frame))}


@dataclass
class ReprojectionErrorReport:
    per_pair: list[dict]
    mean: float | None          # unweighted mean of pair means
    pooled_mean: float | None   # pixel-weighted mean over all pairs


def masked_reprojection_error(
    views: list[CameraView],
    tol: DepthTestTolerance = DepthTestTolerance(),
    pairs: list[tuple[int, int]] | None = None,
) -> ReprojectionErrorReport:
    """Mean per-pixel |Δ| (8-bit levels) between each view and its neighbors
    warped onto it, averaged over mask ∧ visibility.

    ``views`` carry the (edited) images, distance maps, and object masks.
    By default both directions of each consecutive pair are measured.
    Pairs with empty overlap report None and are excluded from the means.
    """
    if pairs is None:
        pairs = []
        for i in range(len(views) - 1):
            pairs.append((i, i + 1))
            pairs.append((i + 1, i))
    per_pair = []
    total_abs = 0.0
    total_px = 0
    for dst_idx, src_idx in pairs:
        dst, src = views[dst_idx], views[src_idx]
        result = warp_into(src, dst.camera, dst.distance, tol)
        region = result.visibility
        if dst.mask is not None:
            region = region & dst.mask
        count = int(region.sum())
        record = {
            "dst": int(dst.view_id),
            "src": int(src.view_id),
            "pixels": count,
            "mean_abs": None,
        }
        if count:
            diff = np.abs(
                result.warped[region] - dst.image.astype(np.float64)[region]
            )
            record["mean_abs"] = float(diff.mean())
            total_abs += float(diff.sum())
            total_px += diff.size
        per_pair.append(record)
    valid = [r["mean_abs"] for r in per_pair if r["mean_abs"] is not None]
    return ReprojectionErrorReport(
        per_pair=per_pair,
        mean=float(np.mean(valid)) if valid else None,
        pooled_mean=(total_abs / total_px) if total_px else None,
    )
