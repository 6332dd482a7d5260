"""Wire-protocol validation and codecs for the bridge side.

Requests are checked first against the shared JSON schema (field paths come
from the validator), then semantically: payloads must decode, dimensions
must agree, and the schedule must partition [0, steps).
"""

from __future__ import annotations

import base64
import io
import json
from dataclasses import dataclass
from importlib import resources

import jsonschema
import numpy as np
from PIL import Image


class RequestError(Exception):
    """Maps to a 4xx {error: {code, message, field}} response."""

    def __init__(self, message, field=None, code="invalid_request", status=400):
        super().__init__(message)
        self.field = field
        self.code = code
        self.status = status

    def body(self) -> dict:
        error = {"code": self.code, "message": str(self)}
        if self.field is not None:
            error["field"] = self.field
        return {"error": error}


def load_schema() -> dict:
    return json.loads(
        resources.files("mvedit_bridge").joinpath("data/edit_v1.schema.json").read_text()
    )


_SCHEMA = load_schema()
_REQUEST_VALIDATOR = jsonschema.Draft7Validator(
    {"$ref": "#/$defs/edit_request", "$defs": _SCHEMA["$defs"]}
)
_RESPONSE_VALIDATOR = jsonschema.Draft7Validator(
    {"$ref": "#/$defs/edit_response", "$defs": _SCHEMA["$defs"]}
)


def validate_request_schema(payload):
    if not isinstance(payload, dict):
        raise RequestError("request body must be a JSON object", code="schema")
    errors = sorted(_REQUEST_VALIDATOR.iter_errors(payload), key=lambda e: list(e.absolute_path))
    if errors:
        first = errors[0]
        path = "/".join(str(p) for p in first.absolute_path)
        raise RequestError(first.message, field=path or None, code="schema")


def validate_response_schema(payload: dict):
    """Used by tests and the service's own self-check."""
    _RESPONSE_VALIDATOR.validate(payload)


def decode_png(b64: str, field: str, mode: str) -> np.ndarray:
    try:
        raw = base64.b64decode(b64, validate=True)
        with Image.open(io.BytesIO(raw)) as img:
            return np.asarray(img.convert(mode))
    except Exception as exc:
        raise RequestError(f"cannot decode PNG: {exc}", field=field, code="payload") from exc


def decode_pfm(b64: str, field: str) -> np.ndarray:
    try:
        raw = base64.b64decode(b64, validate=True)
        buf = io.BytesIO(raw)
        header = buf.readline().rstrip()
        if header != b"Pf":
            raise ValueError(f"bad PFM header {header!r}")
        w, h = (int(x) for x in buf.readline().split())
        scale = float(buf.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(buf.read(w * h * 4), dtype=dtype)
        if data.size != w * h:
            raise ValueError("truncated PFM payload")
        return np.flipud(data.reshape(h, w)).astype(np.float32)
    except RequestError:
        raise
    except Exception as exc:
        raise RequestError(f"cannot decode PFM: {exc}", field=field, code="payload") from exc


def encode_png(array: np.ndarray, mode: str = "RGB") -> str:
    buf = io.BytesIO()
    Image.fromarray(array, mode=mode).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


@dataclass
class DecodedRequest:
    payload: dict                      # raw JSON request
    init_image: np.ndarray             # (H, W, 3) uint8
    disparity: np.ndarray              # (H, W) float32
    masks: list[np.ndarray]            # bool, aligned with payload["schedule"]
    prompt: str
    negative_prompt: str
    guidance: float
    control_scale: float
    seed: int
    steps: int
    noise_strength: tuple[float, float]


def decode_request(payload: dict, max_side: int) -> DecodedRequest:
    validate_request_schema(payload)
    init = decode_png(payload["init_png"], "init_png", "RGB")
    h, w = init.shape[:2]
    if max(h, w) > max_side:
        raise RequestError(
            f"image {w}x{h} exceeds the configured limit of {max_side} px per side",
            field="init_png",
            code="too_large",
        )
    disparity = decode_pfm(payload["disparity_pfm"], "disparity_pfm")
    if disparity.shape != (h, w):
        raise RequestError(
            f"disparity shape {disparity.shape} does not match init {h}x{w}",
            field="disparity_pfm",
            code="dimensions",
        )
    steps = payload["steps"]
    masks = []
    cursor = 0
    for i, entry in enumerate(payload["schedule"]):
        if entry["lo"] != cursor or entry["hi"] <= entry["lo"]:
            raise RequestError(
                f"schedule must partition [0, {steps}) in order; "
                f"entry {i} covers [{entry['lo']}, {entry['hi']})",
                field=f"schedule/{i}/lo",
                code="schedule",
            )
        cursor = entry["hi"]
        mask = decode_png(entry["mask_png"], f"schedule/{i}/mask_png", "L") > 127
        if mask.shape != (h, w):
            raise RequestError(
                f"mask shape {mask.shape} does not match init {h}x{w}",
                field=f"schedule/{i}/mask_png",
                code="dimensions",
            )
        masks.append(mask)
    if cursor != steps:
        raise RequestError(
            f"schedule covers [0, {cursor}) but steps is {steps}",
            field="schedule",
            code="schedule",
        )
    lo, hi = payload["noise_strength"]
    if lo > hi:
        raise RequestError(
            "noise_strength range is empty", field="noise_strength", code="invalid_request"
        )
    return DecodedRequest(
        payload=payload,
        init_image=init,
        disparity=disparity,
        masks=masks,
        prompt=payload["prompt"],
        negative_prompt=payload["negative_prompt"],
        guidance=payload["guidance"],
        control_scale=payload["control_scale"],
        seed=payload["seed"],
        steps=steps,
        noise_strength=(lo, hi),
    )
