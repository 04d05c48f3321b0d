"""
ActivationTrace and its TRCE file.

Layout (little-endian)::

    b"TRCE" | version u16 | config fingerprint (32 bytes) | entry count u32
    per entry: layer kind u8 | layer index u16 | step u16 | float32 [text_len x d_model]

Matrix dims are not stored; they come from the ModelConfig the trace is loaded against.
The source run id and prompt content length live in a JSON sidecar (``<name>.trce.json``).
Traces are float64 in memory and float32 on disk.
"""
from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

import numpy as np
import torch

from ..exceptions import FingerprintMismatch, MissingTraceEntry, SerializationError, ShapeMismatch
from ..mmdit.config import ModelConfig
from ..mmdit.tokens import LayerId, LayerKind

MAGIC = b"TRCE"
VERSION = 1

logger = logging.getLogger(__name__)

_KIND_CODES = {LayerKind.INPUT_EMBEDDING: 0, LayerKind.DOUBLE: 1, LayerKind.SINGLE: 2}
_CODE_KINDS = {code: kind for kind, code in _KIND_CODES.items()}


@dataclass(frozen=True, eq=False)
class ActivationTrace:
    """Text rows of the residual stream keyed by (layer, step). Immutable after capture."""

    entries: Mapping[tuple[LayerId, int], torch.Tensor]
    source_run_id: str
    config_fingerprint: bytes
    content_length: int
    text_len: int
    d_model: int

    def __post_init__(self):
        entries = dict(self.entries)
        for key, matrix in entries.items():
            if tuple(matrix.shape) != (self.text_len, self.d_model):
                raise ShapeMismatch(f"trace entry {key} has shape {tuple(matrix.shape)}")
        object.__setattr__(self, "entries", MappingProxyType(entries))

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key) -> bool:
        return key in self.entries

    def get(self, layer: LayerId, step: int) -> torch.Tensor:
        try:
            return self.entries[(layer, step)]
        except KeyError:
            raise MissingTraceEntry(f"trace {self.source_run_id!r} has no entry for ({layer}, step {step})") from None

    def layers(self) -> set[LayerId]:
        return {layer for layer, _ in self.entries}

    def steps(self, layer: LayerId) -> list[int]:
        return sorted(step for entry_layer, step in self.entries if entry_layer == layer)

    def check_fingerprint(self, config: ModelConfig) -> None:
        if self.config_fingerprint != config.fingerprint():
            raise FingerprintMismatch(f"trace {self.source_run_id!r} was captured on a different model config")

    def restricted(self, layers) -> "ActivationTrace":
        keep = set(layers)
        return ActivationTrace(
            entries={k: v for k, v in self.entries.items() if k[0] in keep},
            source_run_id=self.source_run_id,
            config_fingerprint=self.config_fingerprint,
            content_length=self.content_length,
            text_len=self.text_len,
            d_model=self.d_model,
        )


def sidecar_path(path: Path | str) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def save_trace(trace: ActivationTrace, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if len(trace.config_fingerprint) != 32:
        raise SerializationError("config fingerprint must be 32 bytes")
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(trace.config_fingerprint)
        fh.write(struct.pack("<I", len(trace)))
        for (layer, step), matrix in sorted(trace.entries.items(), key=lambda item: (item[0][0], item[0][1])):
            fh.write(struct.pack("<BHH", _KIND_CODES[layer.kind], layer.index, step))
            fh.write(matrix.detach().cpu().numpy().astype("<f4").tobytes())
    meta = {"source_run_id": trace.source_run_id, "content_length": trace.content_length}
    sidecar_path(path).write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _read_sidecar(path: Path, text_len: int) -> tuple[str, int]:
    sidecar = sidecar_path(path)
    if not sidecar.exists():
        # a bare TRCE file: every text row counts as content
        logger.warning("trace has no sidecar", extra={"trace": str(path)})
        return path.stem, text_len
    try:
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
        run_id, content_length = str(meta["source_run_id"]), int(meta["content_length"])
    except (ValueError, KeyError, TypeError) as exc:
        raise SerializationError(f"{sidecar}: corrupt trace sidecar") from exc
    if not 0 <= content_length <= text_len:
        raise SerializationError(f"{sidecar}: content_length {content_length} outside [0, {text_len}]")
    return run_id, content_length


def load_trace(path: Path | str, config: ModelConfig) -> ActivationTrace:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != MAGIC:
        raise SerializationError(f"{path}: not a TRCE file")
    try:
        (version,) = struct.unpack_from("<H", data, 4)
        if version != VERSION:
            raise SerializationError(f"{path}: unsupported TRCE version {version}")
        fingerprint = data[6:38]
        (count,) = struct.unpack_from("<I", data, 38)
        offset = 42
        rows, cols = config.text_len, config.d_model
        payload = 4 * rows * cols
        entries = {}
        for _ in range(count):
            code, index, step = struct.unpack_from("<BHH", data, offset)
            offset += 5
            if offset + payload > len(data):
                raise SerializationError(f"{path}: truncated entry payload")
            matrix = np.frombuffer(data, dtype="<f4", count=rows * cols, offset=offset).reshape(rows, cols)
            offset += payload
            entries[(LayerId(_CODE_KINDS[code], index), step)] = torch.from_numpy(matrix.astype(np.float64))
    except (struct.error, KeyError) as exc:
        raise SerializationError(f"{path}: corrupt trace") from exc
    if offset != len(data):
        raise SerializationError(f"{path}: {len(data) - offset} trailing bytes")
    run_id, content_length = _read_sidecar(path, rows)
    trace = ActivationTrace(
        entries=entries,
        source_run_id=run_id,
        config_fingerprint=fingerprint,
        content_length=content_length,
        text_len=rows,
        d_model=cols,
    )
    trace.check_fingerprint(config)
    return trace
