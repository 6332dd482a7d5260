"""FastAPI application implementing the edit wire protocol.

One request is processed at a time (GPU exclusivity); beyond one pending
request the service answers 429.  Echo mode returns the init payload
verbatim and needs no model assets; diffusion mode runs the
schedule-switched blended denoiser.
"""

from __future__ import annotations

import logging
import threading
import time

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from starlette.concurrency import run_in_threadpool

from .config import BridgeConfig
from .protocol import RequestError, decode_request, encode_png

logger = logging.getLogger("mvedit_bridge")


class SlotLimiter:
    """Admission control: one running request plus a bounded queue."""

    def __init__(self, max_pending: int):
        self._lock = threading.Lock()
        self._slots = 1 + max_pending
        self._active = 0
        self.work = threading.Lock()

    def try_enter(self) -> bool:
        with self._lock:
            if self._active >= self._slots:
                return False
            self._active += 1
            return True

    def leave(self):
        with self._lock:
            self._active -= 1


def create_app(config: BridgeConfig) -> FastAPI:
    app = FastAPI(title="mvedit bridge", docs_url=None, redoc_url=None)
    limiter = SlotLimiter(config.max_pending)
    engine = None
    engine_error = None

    if config.mode == "diffusion":
        from .diffusion import DiffusionEngine, ModelUnavailable

        try:
            engine = DiffusionEngine(config)
        except ModelUnavailable as exc:
            engine_error = str(exc)
            logger.error("diffusion engine unavailable: %s", engine_error)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "backend_id": config.backend_id}

    @app.post("/edit")
    async def edit(request: Request):
        # parse the body ourselves so every schema violation surfaces as the
        # protocol's 400 {error: {code, message, field}} shape
        try:
            payload = await request.json()
        except Exception:
            return JSONResponse(
                status_code=400,
                content={"error": {"code": "schema", "message": "body is not valid JSON"}},
            )
        if not limiter.try_enter():
            return JSONResponse(
                status_code=429,
                content={"error": {"code": "busy", "message": "queue is full; retry later"}},
            )
        try:
            return await run_in_threadpool(_process, payload)
        finally:
            limiter.leave()

    def _process(payload):
        with limiter.work:
            if config.simulate_latency_s > 0:
                time.sleep(config.simulate_latency_s)
            return _handle_edit(payload)

    def _handle_edit(payload):
        try:
            decoded = decode_request(payload, max_side=config.max_side)
        except RequestError as exc:
            return JSONResponse(status_code=exc.status, content=exc.body())

        if config.mode == "echo":
            # byte-identical round trip: the init payload goes back verbatim
            return {
                "image_png": decoded.payload["init_png"],
                "steps_run": 0,
                "seed_used": decoded.seed,
                "warnings": ["echo mode: init returned unchanged"],
            }

        if engine is None:
            return JSONResponse(
                status_code=503,
                content={
                    "error": {
                        "code": "model_unavailable",
                        "message": engine_error or "diffusion engine not loaded",
                    }
                },
            )
        try:
            image, steps_run = engine.run(decoded)
        except Exception as exc:  # noqa: BLE001 - surfaced as a 503 by contract
            logger.exception("diffusion run failed")
            return JSONResponse(
                status_code=503,
                content={"error": {"code": "generation_failed", "message": str(exc)}},
            )
        return {
            "image_png": encode_png(image),
            "steps_run": steps_run,
            "seed_used": decoded.seed,
            "warnings": [],
        }

    return app
