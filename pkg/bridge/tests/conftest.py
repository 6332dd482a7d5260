import base64
import io

import numpy as np
import pytest
from PIL import Image

from mvedit_bridge.config import BridgeConfig
from mvedit_bridge.service import create_app


def png_b64(array, mode="RGB"):
    buf = io.BytesIO()
    Image.fromarray(array, mode=mode).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def pfm_b64(values):
    values = np.asarray(values, dtype=np.float32)
    h, w = values.shape
    payload = b"Pf\n" + f"{w} {h}\n".encode() + b"-1.0\n" + np.flipud(values).astype("<f4").tobytes()
    return base64.b64encode(payload).decode("ascii")


def make_payload(shape=(24, 24), steps=20, mask=None, seed=11):
    rng = np.random.default_rng(0)
    init = rng.integers(0, 256, (*shape, 3), dtype=np.uint8)
    if mask is None:
        ys, xs = np.mgrid[0 : shape[0], 0 : shape[1]]
        mask = (ys - shape[0] / 2) ** 2 + (xs - shape[1] / 2) ** 2 <= (shape[0] / 4) ** 2
    disparity = np.linspace(0, 1, shape[0] * shape[1]).reshape(shape).astype(np.float32)
    return {
        "version": "1",
        "prompt": "an oak table",
        "negative_prompt": "",
        "guidance": 7.5,
        "control_scale": 0.5,
        "seed": seed,
        "steps": steps,
        "noise_strength": [0.8, 0.98],
        "init_png": png_b64(init),
        "disparity_pfm": pfm_b64(disparity),
        "schedule": [
            {"lo": 0, "hi": steps, "mask_png": png_b64(mask.astype(np.uint8) * 255, mode="L")}
        ],
    }, init


@pytest.fixture()
def echo_app():
    return create_app(BridgeConfig(mode="echo"))


@pytest.fixture()
def client(echo_app):
    from fastapi.testclient import TestClient

    return TestClient(echo_app)
