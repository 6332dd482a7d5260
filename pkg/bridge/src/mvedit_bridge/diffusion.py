"""Depth-conditioned inpainting with per-step mask switching.

The denoising loop applies blended-diffusion semantics: after every step the
latents outside the step's active mask are replaced by the noised input
latents, and the active mask swaps at the request's schedule boundaries.
Masks are nearest-neighbor downscaled to the latent grid; the resulting
couple of pixels of image-space bleed is within the client's clamp
tolerance.

Model weights are loaded lazily; without resolvable assets the service
answers 503 (see service.py).
"""

from __future__ import annotations

import numpy as np

from .config import BridgeConfig
from .protocol import DecodedRequest


class ModelUnavailable(Exception):
    """Raised when diffusion dependencies or weights cannot be loaded."""


class DiffusionEngine:
    """Owns the pipeline components; one engine per process."""

    def __init__(self, config: BridgeConfig):
        self.config = config
        if not config.model_id or not config.controlnet_id:
            raise ModelUnavailable(
                "diffusion mode needs MVEDIT_BRIDGE_MODEL and MVEDIT_BRIDGE_CONTROLNET"
            )
        try:
            import torch
            from diffusers import (
                AutoencoderKL,
                ControlNetModel,
                DDIMScheduler,
                UNet2DConditionModel,
            )
            from transformers import CLIPTextModel, CLIPTokenizer
        except ImportError as exc:
            raise ModelUnavailable(f"diffusion dependencies missing: {exc}") from exc

        self.torch = torch
        device = config.device
        try:
            self.vae = AutoencoderKL.from_pretrained(config.model_id, subfolder="vae").to(device)
            self.unet = UNet2DConditionModel.from_pretrained(
                config.model_id, subfolder="unet"
            ).to(device)
            self.text_encoder = CLIPTextModel.from_pretrained(
                config.model_id, subfolder="text_encoder"
            ).to(device)
            self.tokenizer = CLIPTokenizer.from_pretrained(
                config.model_id, subfolder="tokenizer"
            )
            self.controlnet = ControlNetModel.from_pretrained(config.controlnet_id).to(device)
            self.scheduler = DDIMScheduler.from_pretrained(
                config.model_id, subfolder="scheduler"
            )
        except Exception as exc:
            raise ModelUnavailable(f"cannot load model assets: {exc}") from exc
        self.device = device

    def _encode_prompt(self, prompt: str, negative: str):
        torch = self.torch

        def embed(text):
            tokens = self.tokenizer(
                text, padding="max_length", max_length=self.tokenizer.model_max_length,
                truncation=True, return_tensors="pt",
            ).input_ids.to(self.device)
            with torch.no_grad():
                return self.text_encoder(tokens)[0]

        return torch.cat([embed(negative), embed(prompt)])

    def _to_latents(self, image_u8: np.ndarray, generator):
        torch = self.torch
        image = torch.from_numpy(image_u8.astype(np.float32) / 127.5 - 1.0)
        image = image.permute(2, 0, 1)[None].to(self.device)
        with torch.no_grad():
            posterior = self.vae.encode(image).latent_dist
        return posterior.sample(generator=generator) * self.vae.config.scaling_factor

    def _from_latents(self, latents) -> np.ndarray:
        torch = self.torch
        with torch.no_grad():
            image = self.vae.decode(latents / self.vae.config.scaling_factor).sample
        image = ((image / 2 + 0.5).clamp(0, 1) * 255).round()
        return image[0].permute(1, 2, 0).to("cpu", torch.uint8).numpy()

    def _latent_masks(self, masks, latent_hw):
        """Nearest-neighbor downscale of each schedule mask to the latent grid."""
        torch = self.torch
        lh, lw = latent_hw
        out = []
        for mask in masks:
            ys = (np.arange(lh) * mask.shape[0] / lh).astype(int)
            xs = (np.arange(lw) * mask.shape[1] / lw).astype(int)
            small = mask[np.ix_(ys, xs)]
            out.append(torch.from_numpy(small.astype(np.float32))[None, None].to(self.device))
        return out

    def run(self, request: DecodedRequest) -> tuple[np.ndarray, int]:
        """Returns (edited image uint8, steps actually run)."""
        torch = self.torch
        config = self.config
        image = request.init_image
        disparity = request.disparity
        if config.upsample_2x:
            from PIL import Image

            h, w = image.shape[:2]
            image = np.asarray(
                Image.fromarray(image).resize((2 * w, 2 * h), Image.BILINEAR)
            )
            disparity = np.asarray(
                Image.fromarray(disparity).resize((2 * w, 2 * h), Image.BILINEAR)
            )

        generator = torch.Generator(self.device).manual_seed(request.seed & 0x7FFFFFFFFFFFFFFF)
        embeddings = self._encode_prompt(request.prompt, request.negative_prompt)
        init_latents = self._to_latents(image, generator)

        control = np.repeat(disparity[None], 3, axis=0).astype(np.float32)
        control_t = torch.from_numpy(control)[None].to(self.device)

        # noise strength drawn from the request's range decides how much of
        # the trajectory actually runs, per img2img convention
        lo, hi = request.noise_strength
        strength = lo + (hi - lo) * torch.rand(1, generator=generator, device=self.device).item()
        total = request.steps
        self.scheduler.set_timesteps(total, device=self.device)
        steps_run = max(1, min(total, int(round(total * strength))))
        start_index = total - steps_run
        timesteps = self.scheduler.timesteps[start_index:]

        latent_masks = self._latent_masks(request.masks, init_latents.shape[-2:])
        schedule = request.payload["schedule"]

        noise = torch.randn(init_latents.shape, generator=generator, device=self.device,
                            dtype=init_latents.dtype)
        latents = self.scheduler.add_noise(init_latents, noise, timesteps[:1])

        for offset, t in enumerate(timesteps):
            step_index = start_index + offset
            active = None
            for entry, mask in zip(schedule, latent_masks):
                if entry["lo"] <= step_index < entry["hi"]:
                    active = mask
                    break
            model_input = torch.cat([latents] * 2)
            with torch.no_grad():
                down, mid = self.controlnet(
                    model_input, t, encoder_hidden_states=embeddings,
                    controlnet_cond=torch.cat([control_t] * 2),
                    conditioning_scale=request.control_scale, return_dict=False,
                )
                noise_pred = self.unet(
                    model_input, t, encoder_hidden_states=embeddings,
                    down_block_additional_residuals=down,
                    mid_block_additional_residual=mid,
                ).sample
            uncond, cond = noise_pred.chunk(2)
            guided = uncond + request.guidance * (cond - uncond)
            latents = self.scheduler.step(guided, t, latents).prev_sample

            # blended diffusion: keep the noised input outside the active mask
            if active is not None and offset + 1 < len(timesteps):
                t_next = timesteps[offset + 1]
                noised_input = self.scheduler.add_noise(init_latents, noise, t_next[None])
                latents = active * latents + (1 - active) * noised_input
            elif active is not None:
                latents = active * latents + (1 - active) * init_latents

        out = self._from_latents(latents)
        if config.upsample_2x:
            from PIL import Image

            h, w = request.init_image.shape[:2]
            out = np.asarray(Image.fromarray(out).resize((w, h), Image.BILINEAR))
        return out, steps_run
