"""Minimal HTTP embedding provider client.

Wire format (invented here; no established one exists for this contract):
  POST /embed_image  {"image_png": base64} -> {"embedding": [float, ...]}
  POST /embed_text   {"text": str}         -> {"embedding": [float, ...]}
  GET  /healthz -> {"status": "ok", "provider_id": str}
"""

from __future__ import annotations

import base64
import io

import numpy as np
import requests
from PIL import Image

from .errors import ProtocolError, TransportError


class RemoteEmbeddingProvider:
    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.provider_id = f"remote:{self.endpoint}"

    def _post(self, path: str, payload: dict) -> np.ndarray:
        try:
            resp = requests.post(f"{self.endpoint}{path}", json=payload, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"embedding provider unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(f"embedding provider returned HTTP {resp.status_code}")
        body = resp.json()
        if "embedding" not in body:
            raise ProtocolError("embedding response missing 'embedding'", field="embedding")
        return np.asarray(body["embedding"], dtype=np.float64)

    def embed_image(self, image: np.ndarray) -> np.ndarray:
        buf = io.BytesIO()
        Image.fromarray(np.asarray(image, dtype=np.uint8)).save(buf, format="PNG")
        return self._post(
            "/embed_image", {"image_png": base64.b64encode(buf.getvalue()).decode("ascii")}
        )

    def embed_text(self, text: str) -> np.ndarray:
        return self._post("/embed_text", {"text": text})
