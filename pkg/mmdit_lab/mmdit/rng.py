from __future__ import annotations

import hashlib

import torch

from ..exceptions import ConfigError

SUPPORTED_RNGS = ("torch.mt19937",)
MAX_SEED = 2**64 - 1


def derive_seed(*parts: object) -> int:
    """Stable 64-bit seed from arbitrary labelled parts (independent of PYTHONHASHSEED)."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_generator(rng: str, seed: int) -> torch.Generator:
    if rng not in SUPPORTED_RNGS:
        raise ConfigError(f"unsupported rng scheme {rng!r}; expected one of {SUPPORTED_RNGS}")
    if not 0 <= seed <= MAX_SEED:
        raise ConfigError(f"seed {seed} is not a 64-bit unsigned integer")
    generator = torch.Generator(device="cpu")
    generator.manual_seed(seed)
    return generator


def gaussian(shape: tuple[int, ...], rng: str, seed: int) -> torch.Tensor:
    """float32 draws widened to float64, so stored float32 copies are exact."""
    generator = make_generator(rng, seed)
    return torch.randn(shape, generator=generator, dtype=torch.float32).to(torch.float64)
