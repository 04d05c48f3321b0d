from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from ..conf import lab_settings
from ..exceptions import SerializationError
from ..interventions.engine import GridManifest
from ..taskgen.fixtures import load_png

logger = logging.getLogger(__name__)

LABEL_HEIGHT = 14
PADDING = 4
MARKER_COLOR = (220, 30, 30)
BACKGROUND = (255, 255, 255)


def _normalize(images: Sequence[np.ndarray]) -> list[Image.Image]:
    first = Image.fromarray(np.asarray(images[0], dtype=np.uint8)).convert("RGB")
    tiles = [first]
    for i, pixels in enumerate(images[1:], start=1):
        tile = Image.fromarray(np.asarray(pixels, dtype=np.uint8)).convert("RGB")
        if tile.size != first.size:
            logger.warning(
                "resizing grid cell", extra={"cell": i, "size": list(tile.size), "target": list(first.size)}
            )
            tile = tile.resize(first.size, Image.Resampling.BILINEAR)
        tiles.append(tile)
    return tiles


def compose_grid(images: Sequence[np.ndarray], labels: Sequence[str], marker: int | None = None,
                 scale: int | None = None) -> Image.Image:
    """Row-major tiling, ``ceil(sqrt(n))`` columns; ``marker`` indexes the cell to circle."""
    if not images:
        raise ValueError("a grid needs at least one image")
    scale = max(1, int(scale or lab_settings.GRID_CELL_SCALE))
    tiles = [t.resize((t.width * scale, t.height * scale), Image.Resampling.NEAREST) for t in _normalize(images)]
    n = len(tiles)
    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    cell_w, cell_h = tiles[0].size
    pitch_x, pitch_y = cell_w + PADDING, cell_h + LABEL_HEIGHT + PADDING
    canvas = Image.new("RGB", (cols * pitch_x + PADDING, rows * pitch_y + PADDING), BACKGROUND)
    draw = ImageDraw.Draw(canvas)
    font = ImageFont.load_default()
    for i, (tile, label) in enumerate(zip(tiles, labels)):
        x = PADDING + (i % cols) * pitch_x
        y = PADDING + (i // cols) * pitch_y
        canvas.paste(tile, (x, y))
        draw.text((x, y + cell_h + 1), label, fill=(0, 0, 0), font=font)
        if marker is not None and i == marker:
            draw.ellipse([x - 2, y - 2, x + cell_w + 1, y + cell_h + 1], outline=MARKER_COLOR, width=2)
    return canvas


def emit_grid(images: Sequence[np.ndarray], manifest: GridManifest, out_path: Path | str) -> tuple[Path, Path]:
    """Write the composite PNG and a caption text file next to it."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    labels = [entry.label for entry in manifest.entries]
    marked = None
    if manifest.marker is not None:
        marked = next((i for i, e in enumerate(manifest.entries) if e.ordinal == manifest.marker), None)
    compose_grid(images, labels, marked).save(out_path, format="PNG")
    caption = out_path.with_suffix(".txt")
    lines = [manifest.caption] if manifest.caption else []
    lines += [f"{e.ordinal}: {e.label}" + (" (marked)" if i == marked else "") for i, e in enumerate(manifest.entries)]
    caption.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("wrote grid", extra={"path": str(out_path), "cells": len(images)})
    return out_path, caption


def grid_from_manifest(manifest_path: Path | str, out_path: Path | str | None = None) -> tuple[Path, Path]:
    """Render a saved GridManifest; entry image paths resolve against the manifest directory."""
    manifest_path = Path(manifest_path)
    manifest = GridManifest.load(manifest_path)
    missing = [entry.ordinal for entry in manifest.entries if not entry.image]
    if missing:
        raise SerializationError(f"{manifest_path}: no image recorded for ordinals {missing}")
    images = [load_png(manifest_path.parent / entry.image) for entry in manifest.entries]
    return emit_grid(images, manifest, out_path or manifest_path.with_name("grid.png"))
