"""Server configuration: one condition per process."""

from __future__ import annotations

import json
from dataclasses import dataclass, field


@dataclass
class ServerConfig:
    condition: str = "normal"
    prompt: str = ""
    negative_prompt: str = ""
    guidance_scale: float = 7.0
    steps: int = 50
    device: str = "cpu"
    listen: str = "tcp://127.0.0.1:0"  # or "stdio"
    latent_dim: int = 16
    output_shape: tuple[int, int, int] = (4, 8, 8)
    pipeline: str = "stub"  # "stub" | "diffusers"
    response: str = "x0_latent"  # "x0_latent" | "decoded_pixels"
    model: str = ""
    pipeline_seed: int = 0
    concurrent: bool = False
    stub_hidden: int = 32
    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if any(v < 1 for v in self.output_shape):
            raise ValueError("output_shape entries must be >= 1")
        if self.pipeline not in ("stub", "diffusers"):
            raise ValueError(f"unknown pipeline {self.pipeline!r}")
        if self.response not in ("x0_latent", "decoded_pixels"):
            raise ValueError(f"unknown response kind {self.response!r}")
        if not (self.listen == "stdio" or self.listen.startswith("tcp://")):
            raise ValueError("listen must be 'stdio' or tcp://host:port")

    @classmethod
    def from_dict(cls, payload: dict) -> "ServerConfig":
        known = {f for f in cls.__dataclass_fields__ if f != "extra"}
        kwargs = {k: payload[k] for k in payload if k in known}
        if "output_shape" in kwargs:
            kwargs["output_shape"] = tuple(int(v) for v in kwargs["output_shape"])
        extra = {k: v for k, v in payload.items() if k not in known}
        cfg = cls(**kwargs, extra=extra)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ServerConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "prompt": self.prompt,
            "negative_prompt": self.negative_prompt,
            "guidance_scale": self.guidance_scale,
            "steps": self.steps,
            "device": self.device,
            "listen": self.listen,
            "latent_dim": self.latent_dim,
            "output_shape": list(self.output_shape),
            "pipeline": self.pipeline,
            "response": self.response,
            "model": self.model,
            "pipeline_seed": self.pipeline_seed,
            "concurrent": self.concurrent,
            "stub_hidden": self.stub_hidden,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
