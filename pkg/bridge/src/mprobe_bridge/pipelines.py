"""Pipeline adapters: latent vector in, flattened float32 tensor out.

The stub pipeline is a seeded two-layer float32 map, deterministic across
processes, so conformance and integration tests need no model weights. The
diffusers adapter wraps a locally available text-to-image pipeline and runs
the sampler from the supplied initial latent under the configured condition.
"""

from __future__ import annotations

import numpy as np

from .config import ServerConfig


class StubPipeline:
    """Deterministic stand-in: float32 tanh features under seeded weights.

    All arithmetic stays in float32 so a reference reimplementation built
    from the same config reproduces the response payloads bit-exactly.
    """

    def __init__(self, config: ServerConfig):
        self.latent_dim = config.latent_dim
        self.output_shape = tuple(config.output_shape)
        out_size = int(np.prod(self.output_shape))
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(
            (config.pipeline_seed, 1))))
        self.w_in = rng.standard_normal(
            (config.stub_hidden, config.latent_dim)).astype("<f4")
        self.w_out = rng.standard_normal(
            (out_size, config.stub_hidden)).astype("<f4")

    def __call__(self, latent: np.ndarray) -> np.ndarray:
        z = np.asarray(latent, dtype="<f4").ravel()
        hidden = np.tanh(self.w_in @ z)
        return (self.w_out @ hidden).astype("<f4")


class DiffusersPipeline:
    """Wraps a diffusers text-to-image pipeline behind the same interface.

    Requires model weights available locally. The incoming vector seeds the
    sampler's initial latent; the response is the predicted final latent or
    the decoded pixels, per the config switch.
    """

    def __init__(self, config: ServerConfig):
        import torch  # deferred: heavyweight and optional
        from diffusers import AutoPipelineForText2Image

        self._torch = torch
        self.config = config
        self.latent_dim = config.latent_dim
        self.output_shape = tuple(config.output_shape)
        self.pipe = AutoPipelineForText2Image.from_pretrained(config.model)
        self.pipe.to(config.device)
        shape = config.extra.get("latent_shape")
        if shape is None:
            raise ValueError("diffusers pipeline config needs extra.latent_shape")
        self.latent_shape = tuple(int(v) for v in shape)
        if int(np.prod(self.latent_shape)) != config.latent_dim:
            raise ValueError("latent_shape does not flatten to latent_dim")

    def __call__(self, latent: np.ndarray) -> np.ndarray:
        torch = self._torch
        cfg = self.config
        initial = torch.from_numpy(
            np.asarray(latent, dtype=np.float32).reshape(self.latent_shape)
        )[None].to(cfg.device)
        output_type = "latent" if cfg.response == "x0_latent" else "np"
        generator = torch.Generator(device=cfg.device).manual_seed(cfg.pipeline_seed)
        with torch.no_grad():
            result = self.pipe(
                prompt=cfg.prompt,
                negative_prompt=cfg.negative_prompt or None,
                guidance_scale=cfg.guidance_scale,
                num_inference_steps=cfg.steps,
                latents=initial,
                generator=generator,
                output_type=output_type,
            )
        if cfg.response == "x0_latent":
            out = result.images if hasattr(result, "images") else result[0]
            array = out[0].detach().cpu().numpy()
        else:
            array = np.asarray(result.images[0]).transpose(2, 0, 1)
        return np.asarray(array, dtype="<f4").ravel()


def build_pipeline(config: ServerConfig):
    """Construct the configured pipeline and verify its declared shape."""
    if config.pipeline == "stub":
        pipeline = StubPipeline(config)
    else:
        pipeline = DiffusersPipeline(config)
    probe = pipeline(np.zeros(config.latent_dim, dtype="<f4"))
    declared = int(np.prod(config.output_shape))
    if probe.size != declared:
        raise ValueError(
            f"pipeline produces {probe.size} values but the declared shape "
            f"{config.output_shape} flattens to {declared}"
        )
    return pipeline
