"""Bridge configuration."""

from __future__ import annotations

import os
from dataclasses import dataclass


@dataclass(frozen=True)
class BridgeConfig:
    mode: str = "echo"                     # "echo" | "diffusion"
    host: str = "127.0.0.1"
    port: int = 8060
    max_side: int = 2048                   # reject larger rasters
    max_pending: int = 1                   # queued requests beyond the running one
    backend_id: str = ""

    # diffusion mode only
    model_id: str = ""                     # inpainting-capable SD checkpoint
    controlnet_id: str = ""                # depth ControlNet weights
    device: str = "cuda"
    upsample_2x: bool = False              # generate at 2x and downsample back
    noise_strength: tuple[float, float] = (0.8, 0.98)

    # test hook: artificial per-request latency so queueing is observable
    simulate_latency_s: float = 0.0

    def __post_init__(self):
        if self.mode not in ("echo", "diffusion"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.backend_id:
            object.__setattr__(self, "backend_id", f"bridge-{self.mode}")

    @classmethod
    def from_env(cls, **overrides) -> "BridgeConfig":
        """Environment variables fill anything not overridden."""
        env = {
            "model_id": os.environ.get("MVEDIT_BRIDGE_MODEL", ""),
            "controlnet_id": os.environ.get("MVEDIT_BRIDGE_CONTROLNET", ""),
            "device": os.environ.get("MVEDIT_BRIDGE_DEVICE", "cuda"),
        }
        env.update(overrides)
        return cls(**env)
