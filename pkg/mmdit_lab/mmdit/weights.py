"""
MMDL tensor container.

Layout (little-endian)::

    b"MMDL" | version u16
    repeated until EOF:
        name_len u16 | name utf-8 | rank u8 | dims u64 * rank | float32 row-major payload
"""
from __future__ import annotations

import logging
import struct
from pathlib import Path
from typing import Mapping

import numpy as np
import torch

from ..exceptions import ConfigError, SerializationError
from .config import ModelConfig, load_config
from .model import MMDiT

logger = logging.getLogger(__name__)

MAGIC = b"MMDL"
VERSION = 1


def write_tensors(path: Path | str, tensors: Mapping[str, torch.Tensor]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        for name, tensor in tensors.items():
            encoded = name.encode("utf-8")
            array = tensor.detach().cpu().numpy().astype("<f4", copy=False)
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", array.ndim))
            fh.write(struct.pack(f"<{array.ndim}Q", *array.shape))
            fh.write(np.ascontiguousarray(array).tobytes())
    return path


def read_tensors(path: Path | str) -> dict[str, torch.Tensor]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise SerializationError(f"{path}: not an MMDL file")
    if len(data) < 6:
        raise SerializationError(f"{path}: truncated header")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != VERSION:
        raise SerializationError(f"{path}: unsupported MMDL version {version}")

    tensors: dict[str, torch.Tensor] = {}
    offset = 6
    try:
        while offset < len(data):
            (name_len,) = struct.unpack_from("<H", data, offset)
            offset += 2
            name = data[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<B", data, offset)
            offset += 1
            dims = struct.unpack_from(f"<{rank}Q", data, offset)
            offset += 8 * rank
            count = int(np.prod(dims, dtype=np.int64)) if rank else 1
            end = offset + 4 * count
            if end > len(data):
                raise SerializationError(f"{path}: truncated payload for {name!r}")
            array = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(dims)
            tensors[name] = torch.from_numpy(array.astype(np.float64))
            offset = end
    except (struct.error, UnicodeDecodeError) as exc:
        raise SerializationError(f"{path}: corrupt record at byte {offset}") from exc
    return tensors


def save_weights(model: MMDiT, path: Path | str) -> Path:
    return write_tensors(path, model.state_dict())


def load_weights(model: MMDiT, path: Path | str) -> MMDiT:
    tensors = read_tensors(path)
    expected = model.state_dict()
    missing = sorted(set(expected) - set(tensors))
    unexpected = sorted(set(tensors) - set(expected))
    if missing or unexpected:
        raise ConfigError(f"{path}: missing={missing[:4]} unexpected={unexpected[:4]}")
    for name, tensor in tensors.items():
        if tensor.shape != expected[name].shape:
            raise ConfigError(f"{path}: {name} has shape {tuple(tensor.shape)}, model expects {tuple(expected[name].shape)}")
    model.load_state_dict(tensors)
    return model


def build_model(config: ModelConfig, base_dir: Path | None = None) -> MMDiT:
    model = MMDiT(config)
    if config.weights:
        weights_path = Path(config.weights)
        if base_dir is not None and not weights_path.is_absolute():
            weights_path = base_dir / weights_path
        load_weights(model, weights_path)
        logger.info("loaded weights", extra={"weights": str(weights_path)})
    return model


def load_model(config_path: Path | str) -> MMDiT:
    """ModelConfig TOML -> MMDiT, with ``weights`` resolved next to the config file."""
    config_path = Path(config_path)
    return build_model(load_config(config_path), base_dir=config_path.parent)
