"""
ModelConfig and its TOML file format.

Schema (all keys optional, defaults are the desk-scale profile)::

    d_model = 64            # embedding width, divisible by n_heads
    n_heads = 4
    n_double_blocks = 4
    n_single_blocks = 8
    text_len = 32           # content + padding rows
    latent_grid = [16, 16]  # (height_patches, width_patches)
    n_steps = 4             # Euler steps from t=1 to t=0
    patch_size = 2          # pixels per patch side
    channels = 3            # pixel channels (RGB)
    mlp_ratio = 4.0
    vocab_size = 32768      # size of the hashed word vocabulary
    rng = "torch.mt19937"
    seed = 0                # 64-bit weight / embedding seed
    weights = "desk.mmdl"   # optional MMDL file, relative to the config file
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass
from pathlib import Path

from ..exceptions import ConfigError
from .rng import MAX_SEED, SUPPORTED_RNGS


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 64
    n_heads: int = 4
    n_double_blocks: int = 4
    n_single_blocks: int = 8
    text_len: int = 32
    latent_grid: tuple[int, int] = (16, 16)
    n_steps: int = 4
    patch_size: int = 2
    channels: int = 3
    mlp_ratio: float = 4.0
    vocab_size: int = 32768
    rng: str = "torch.mt19937"
    seed: int = 0
    weights: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "latent_grid", tuple(int(v) for v in self.latent_grid))
        positive = ("d_model", "n_heads", "text_len", "n_steps", "patch_size", "channels", "vocab_size")
        for name in positive:
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.n_double_blocks < 0 or self.n_single_blocks < 0:
            raise ConfigError("block counts must be non-negative")
        if self.total_blocks < 2:
            raise ConfigError("n_double_blocks + n_single_blocks must be >= 2")
        if len(self.latent_grid) != 2 or min(self.latent_grid) < 1:
            raise ConfigError("latent_grid must be two positive integers")
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.head_dim % 2:
            raise ConfigError("head dimension must be even for rotary positions")
        if self.head_dim < 6:
            # each of the three rotary axes needs at least one (even, odd) pair
            raise ConfigError(f"head dimension {self.head_dim} is below 6; image rows and columns would carry no position")
        if self.d_model < self.patch_dim:
            raise ConfigError(
                f"d_model={self.d_model} cannot hold a {self.patch_size}x{self.patch_size}x{self.channels} patch"
            )
        if self.mlp_ratio <= 0:
            raise ConfigError("mlp_ratio must be positive")
        if self.rng not in SUPPORTED_RNGS:
            raise ConfigError(f"unsupported rng {self.rng!r}")
        if not 0 <= self.seed <= MAX_SEED:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    # ----------------------------
    # Derived sizes
    # ----------------------------

    @property
    def total_blocks(self) -> int:
        return self.n_double_blocks + self.n_single_blocks

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.channels

    @property
    def n_image_tokens(self) -> int:
        return self.latent_grid[0] * self.latent_grid[1]

    @property
    def pixel_shape(self) -> tuple[int, int, int]:
        h, w = self.latent_grid
        return (h * self.patch_size, w * self.patch_size, self.channels)

    @property
    def rope_axes(self) -> tuple[int, int, int]:
        # (segment tag, row, col); every axis even
        side = 2 * ((self.head_dim // 3) // 2)
        return (self.head_dim - 2 * side, side, side)

    # ----------------------------
    # Identity
    # ----------------------------

    def architecture(self) -> dict:
        data = dataclasses.asdict(self)
        data.pop("weights")
        data["latent_grid"] = list(self.latent_grid)
        return data

    def fingerprint(self) -> bytes:
        """32-byte sha256 over everything except the weights path."""
        canonical = json.dumps(self.architecture(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).digest()

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name for f in dataclasses.fields(ModelConfig)}


def config_from_mapping(data: dict) -> ModelConfig:
    unknown = set(data) - _FIELDS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return ModelConfig(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: Path | str) -> ModelConfig:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_mapping(data)


def dump_config(config: ModelConfig) -> str:
    lines = []
    for field in dataclasses.fields(ModelConfig):
        value = getattr(config, field.name)
        if value is None:
            continue
        if isinstance(value, tuple):
            value = list(value)
        # JSON scalars and int lists are valid TOML values
        lines.append(f"{field.name} = {json.dumps(value)}")
    return "\n".join(lines) + "\n"


def save_config(config: ModelConfig, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_config(config), encoding="utf-8")
    return path
