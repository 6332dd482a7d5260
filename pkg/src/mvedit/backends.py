"""Editor backends: the edit contract, a deterministic procedural mock, and
an HTTP client for remote diffusion services.

The contract every backend must honor: the response image equals the init
image wherever no schedule entry's mask covers the pixel.  Content under
the masks is backend-defined.

Wire protocol (HTTP POST /edit, JSON):
  {version: "1", prompt, negative_prompt, guidance, control_scale, seed,
   steps, noise_strength: [lo, hi], init_png: base64, disparity_pfm: base64,
   schedule: [{lo, hi, mask_png: base64}]}
  -> 200 {image_png: base64, steps_run, seed_used, warnings: [...]}
  errors: 4xx/5xx {error: {code, message, field?}}
Health: GET /healthz -> {status: "ok", backend_id}.
"""

from __future__ import annotations

import base64
import hashlib
import io
import math
import struct
import time
from dataclasses import dataclass, field

import numpy as np
import requests
from PIL import Image
from scipy import ndimage

from .errors import ConfigurationError, ProtocolError, TransportError
from .geometry import quantize_u8
from .schedule import MaskSchedule

PROTOCOL_VERSION = "1"
DEFAULT_GUIDANCE = 7.5
DEFAULT_CONTROL_SCALE = 0.5
DEFAULT_NOISE_STRENGTH = (0.8, 0.98)


@dataclass
class EditRequest:
    init_image: np.ndarray       # (H, W, 3) uint8
    disparity: np.ndarray        # (H, W) float, normalized [0, 1]
    schedule: MaskSchedule
    prompt: str
    negative_prompt: str = ""
    guidance: float = DEFAULT_GUIDANCE
    control_scale: float = DEFAULT_CONTROL_SCALE
    seed: int = 0
    steps: int | None = None     # defaults to schedule.total_steps
    noise_strength: tuple[float, float] = DEFAULT_NOISE_STRENGTH

    def __post_init__(self):
        self.init_image = np.asarray(self.init_image)
        self.disparity = np.asarray(self.disparity, dtype=np.float64)
        if self.init_image.dtype != np.uint8 or self.init_image.ndim != 3:
            raise ConfigurationError("init image must be (H, W, 3) uint8")
        if self.steps is None:
            self.steps = self.schedule.total_steps
        if self.steps != self.schedule.total_steps:
            raise ConfigurationError(
                f"steps ({self.steps}) must equal schedule total_steps "
                f"({self.schedule.total_steps})"
            )
        if not self.guidance > 0:
            raise ConfigurationError(f"guidance must be positive, got {self.guidance}")
        shape = self.init_image.shape[:2]
        if self.disparity.shape != shape:
            raise ConfigurationError(
                f"disparity shape {self.disparity.shape} does not match init {shape}"
            )
        if self.schedule.mask_shape() != shape:
            raise ConfigurationError(
                f"schedule mask shape {self.schedule.mask_shape()} does not match init {shape}"
            )


@dataclass
class EditResponse:
    image: np.ndarray            # (H, W, 3) uint8
    backend_id: str
    steps_run: int
    seed_used: int
    warnings: list[str] = field(default_factory=list)


def conforms_outside_masks(request: EditRequest, response_image: np.ndarray) -> bool:
    """True iff the response equals init everywhere no schedule mask covers."""
    outside = ~request.schedule.union_mask()
    return bool(np.array_equal(response_image[outside], request.init_image[outside]))


def procedural_params(prompt: str, seed: int, channel: int) -> tuple[float, float]:
    """Stable (frequency, phase) pair for one channel of the mock target.

    Derived from a 64-bit BLAKE2b hash of (prompt, seed, channel), split into
    two 32-bit halves: frequency in [1, 8), phase in [0, 1).
    """
    prompt_bytes = prompt.encode("utf-8")
    payload = (
        struct.pack(">Q", len(prompt_bytes))
        + prompt_bytes
        + struct.pack(">Q", seed & 0xFFFFFFFFFFFFFFFF)
        + bytes([channel & 0xFF])
    )
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    value = int.from_bytes(digest, "big")
    hi, lo = value >> 32, value & 0xFFFFFFFF
    return 1.0 + 7.0 * (hi / 2.0**32), lo / 2.0**32


def procedural_target(prompt: str, seed: int, disparity: np.ndarray) -> np.ndarray:
    """The mock's target image P on the [0, 255] scale, shape (H, W, 3)."""
    disparity = np.asarray(disparity, dtype=np.float64)
    channels = []
    for c in range(3):
        freq, phase = procedural_params(prompt, seed, c)
        channels.append(0.5 + 0.5 * np.sin(2.0 * math.pi * (freq * disparity + phase)))
    return 255.0 * np.stack(channels, axis=-1)


def blend_by_step_count(
    init_image: np.ndarray, target: np.ndarray, counts: np.ndarray, total_steps: int
) -> np.ndarray:
    """Pre-quantization mock output: affine in counts / total_steps."""
    weight = (counts.astype(np.float64) / float(total_steps))[..., None]
    return (1.0 - weight) * init_image.astype(np.float64) + weight * target


class MockEditorBackend:
    """Deterministic stand-in realizing the schedule semantics.

    A pixel active for k of T steps blends init and a prompt-seeded
    procedural target as (1 - k/T) * init + (k/T) * P, quantized half-up.
    Not an image-quality surrogate; it exists to make schedule behavior
    exactly assertable.
    """

    backend_id = "mock"

    def edit(self, request: EditRequest) -> EditResponse:
        counts = request.schedule.active_step_count()
        target = procedural_target(request.prompt, request.seed, request.disparity)
        blended = blend_by_step_count(request.init_image, target, counts, request.steps)
        # k = 0 pixels pass through bit-exactly: integers survive the float
        # blend and round-half-up quantization unchanged.
        image = quantize_u8(blended)
        return EditResponse(
            image=image,
            backend_id=self.backend_id,
            steps_run=request.steps,
            seed_used=request.seed,
            warnings=[],
        )


def _b64_png(array: np.ndarray, mode: str) -> str:
    buf = io.BytesIO()
    Image.fromarray(array, mode=mode).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _b64_pfm(values: np.ndarray) -> str:
    values = np.asarray(values, dtype=np.float32)
    h, w = values.shape
    header = b"Pf\n" + f"{w} {h}\n".encode("ascii") + b"-1.0\n"
    return base64.b64encode(header + np.flipud(values).astype("<f4").tobytes()).decode("ascii")


def _decode_b64_png(payload: str, field_path: str) -> np.ndarray:
    try:
        raw = base64.b64decode(payload, validate=True)
        with Image.open(io.BytesIO(raw)) as img:
            return np.asarray(img.convert("RGB"))
    except Exception as exc:
        raise ProtocolError(f"cannot decode PNG payload: {exc}", field=field_path) from exc


def encode_request(request: EditRequest) -> dict:
    return {
        "version": PROTOCOL_VERSION,
        "prompt": request.prompt,
        "negative_prompt": request.negative_prompt,
        "guidance": float(request.guidance),
        "control_scale": float(request.control_scale),
        "seed": int(request.seed),
        "steps": int(request.steps),
        "noise_strength": [float(request.noise_strength[0]), float(request.noise_strength[1])],
        "init_png": _b64_png(request.init_image, "RGB"),
        "disparity_pfm": _b64_pfm(request.disparity),
        "schedule": [
            {
                "lo": int(entry.step_lo),
                "hi": int(entry.step_hi),
                "mask_png": _b64_png(entry.mask.astype(np.uint8) * 255, "L"),
            }
            for entry in request.schedule.entries
        ],
    }


class RemoteEditorBackend:
    """HTTP client for diffusion services speaking the wire protocol.

    Retries timeouts and connection failures up to ``retries`` extra
    attempts; validates the response schema with field-path errors; clamps
    contract violations outside the mask union (allowing a configurable
    few pixels of mask-edge bleed) back to the init image with a warning.
    """

    def __init__(
        self,
        endpoint: str,
        timeout: float = 30.0,
        retries: int = 2,
        max_pixels: int = 4096 * 4096,
        mask_edge_tolerance_px: int = 2,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.max_pixels = max_pixels
        self.mask_edge_tolerance_px = mask_edge_tolerance_px
        self.backend_id = f"remote:{self.endpoint}"
        self._session = session or requests.Session()

    def healthz(self) -> dict:
        try:
            resp = self._session.get(f"{self.endpoint}/healthz", timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"health check failed: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(f"health check returned HTTP {resp.status_code}")
        return resp.json()

    def edit(self, request: EditRequest) -> EditResponse:
        h, w = request.init_image.shape[:2]
        if h * w > self.max_pixels:
            raise ConfigurationError(
                f"image {w}x{h} exceeds the configured limit of {self.max_pixels} pixels; "
                "not transmitted"
            )
        payload = encode_request(request)
        body = self._post_with_retries(payload)
        return self._validate_response(request, body)

    def _post_with_retries(self, payload: dict) -> dict:
        last_exc = None
        for attempt in range(self.retries + 1):
            try:
                resp = self._session.post(
                    f"{self.endpoint}/edit", json=payload, timeout=self.timeout
                )
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_exc = exc
                if attempt < self.retries:
                    time.sleep(min(0.1 * 2**attempt, 1.0))
                continue
            except requests.RequestException as exc:
                raise TransportError(f"request failed: {exc}") from exc
            return self._parse_http(resp)
        raise TransportError(
            f"backend unreachable after {self.retries + 1} attempts: {last_exc}"
        )

    @staticmethod
    def _parse_http(resp: requests.Response) -> dict:
        try:
            body = resp.json()
        except ValueError as exc:
            raise ProtocolError(f"backend returned non-JSON body (HTTP {resp.status_code})") from exc
        if resp.status_code == 200:
            return body
        error = body.get("error", {}) if isinstance(body, dict) else {}
        message = error.get("message", "unknown error")
        code = error.get("code", str(resp.status_code))
        if 400 <= resp.status_code < 500:
            raise ProtocolError(
                f"backend rejected the request ({code}): {message}", field=error.get("field")
            )
        raise TransportError(f"backend failure HTTP {resp.status_code} ({code}): {message}")

    def _validate_response(self, request: EditRequest, body: dict) -> EditResponse:
        for key in ("image_png", "steps_run", "seed_used", "warnings"):
            if key not in body:
                raise ProtocolError(f"response missing field {key!r}", field=key)
        if not isinstance(body["steps_run"], int):
            raise ProtocolError("steps_run must be an integer", field="steps_run")
        if not isinstance(body["seed_used"], int):
            raise ProtocolError("seed_used must be an integer", field="seed_used")
        if not isinstance(body["warnings"], list) or not all(
            isinstance(x, str) for x in body["warnings"]
        ):
            raise ProtocolError("warnings must be a list of strings", field="warnings")
        image = _decode_b64_png(body["image_png"], "image_png")
        if image.shape != request.init_image.shape:
            raise ProtocolError(
                f"response image shape {image.shape} does not match request "
                f"{request.init_image.shape}",
                field="image_png",
            )
        warnings = list(body["warnings"])
        image, clamped = self._clamp_outside_masks(request, image)
        if clamped:
            warnings.append(
                f"backend violated the outside-mask contract on {clamped} pixels; clamped to init"
            )
        return EditResponse(
            image=image,
            backend_id=self.backend_id,
            steps_run=body["steps_run"],
            seed_used=body["seed_used"],
            warnings=warnings,
        )

    def _clamp_outside_masks(self, request: EditRequest, image: np.ndarray) -> tuple[np.ndarray, int]:
        union = request.schedule.union_mask()
        allowed = union
        if self.mask_edge_tolerance_px > 0:
            size = 2 * self.mask_edge_tolerance_px + 1
            allowed = ndimage.binary_dilation(union, structure=np.ones((size, size), bool))
        differs = np.any(image != request.init_image, axis=-1)
        violations = differs & ~allowed
        count = int(violations.sum())
        if count:
            image = image.copy()
            image[violations] = request.init_image[violations]
        return image, count
