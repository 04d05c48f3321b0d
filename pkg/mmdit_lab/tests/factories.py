from __future__ import annotations

import torch

from mmdit_lab.mmdit.codec import encode_image
from mmdit_lab.mmdit.config import ModelConfig
from mmdit_lab.mmdit.sampler import RunMode, RunSpec
from mmdit_lab.mmdit.tokens import tokenize


def make_config(**overrides) -> ModelConfig:
    # 4 double + 8 single blocks at a width that keeps CPU runs fast
    options = {"d_model": 32, "n_heads": 4, "text_len": 8, "latent_grid": (4, 4), "n_steps": 2}
    options.update(overrides)
    return ModelConfig(**options)


def make_pixels(config: ModelConfig, seed: int):
    generator = torch.Generator().manual_seed(seed)
    return torch.randint(0, 256, config.pixel_shape, generator=generator, dtype=torch.uint8).numpy()


def make_i2i(config: ModelConfig, seed: int, prompt: str = "paint it blue", run_id: str = "") -> RunSpec:
    return RunSpec(
        mode=RunMode.I2I,
        prompt=tokenize(config, prompt),
        reference=encode_image(config, make_pixels(config, 10_000 + seed)),
        seed=seed,
        run_id=run_id or f"i2i-{seed}",
    )

