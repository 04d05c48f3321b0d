from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import torch

from ..exceptions import ShapeMismatch
from .config import ModelConfig
from .rng import gaussian


class Provenance(str, Enum):
    NOISE = "noise"
    ENCODED = "encoded"
    GENERATED = "generated"


@dataclass
class LatentImage:
    grid: torch.Tensor  # [height_patches, width_patches, d_model]
    provenance: Provenance = Provenance.GENERATED

    def check(self, config: ModelConfig) -> None:
        expected = (*config.latent_grid, config.d_model)
        if tuple(self.grid.shape) != expected:
            raise ShapeMismatch(f"latent grid {tuple(self.grid.shape)} != {expected}")


def initial_noise(config: ModelConfig, seed: int) -> LatentImage:
    grid = gaussian((*config.latent_grid, config.d_model), config.rng, seed)
    return LatentImage(grid=grid, provenance=Provenance.NOISE)


def encode_image(config: ModelConfig, pixels) -> LatentImage:
    """
    Lossless linear patchify: each p x p x C patch, scaled by 1/255, fills the first
    ``patch_dim`` channels of its latent token; the rest stay zero.
    """
    arr = np.asarray(pixels)
    if arr.ndim == 2 and config.channels == 1:
        arr = arr[..., None]
    if tuple(arr.shape) != config.pixel_shape:
        raise ShapeMismatch(f"pixel grid {tuple(arr.shape)} != {config.pixel_shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise ShapeMismatch(f"pixel grid must be integers, got {arr.dtype}")
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise ShapeMismatch(f"pixel values must lie in [0, 255], got [{arr.min()}, {arr.max()}]")
    h, w = config.latent_grid
    p, c = config.patch_size, config.channels
    x = torch.from_numpy(arr.astype(np.float64)) / 255.0
    patches = x.reshape(h, p, w, p, c).permute(0, 2, 1, 3, 4).reshape(h, w, p * p * c)
    grid = torch.zeros((h, w, config.d_model), dtype=torch.float64)
    grid[..., : config.patch_dim] = patches
    return LatentImage(grid=grid, provenance=Provenance.ENCODED)


def decode_image(config: ModelConfig, latents: LatentImage) -> np.ndarray:
    latents.check(config)
    h, w = config.latent_grid
    p, c = config.patch_size, config.channels
    values = latents.grid[..., : config.patch_dim].reshape(h, w, p, p, c)
    values = values.permute(0, 2, 1, 3, 4).reshape(h * p, w * p, c)
    pixels = torch.round(values * 255.0).clamp(0, 255).to(torch.uint8)
    return pixels.numpy()
