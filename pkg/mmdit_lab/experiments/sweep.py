from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

from ..exceptions import ConfigError
from ..interventions.engine import SweepOp, SweepResult, layer_sweep
from ..mmdit.codec import encode_image
from ..mmdit.model import MMDiT
from ..mmdit.weights import load_model
from ..taskgen.fixtures import save_png
from ..taskgen.manifests import read_task_manifest
from .grid import emit_grid
from .manifest import ExperimentKind, ExperimentManifest
from .runner import RunContext, lens_variant_for

logger = logging.getLogger(__name__)


@dataclass
class SweepOutcome:
    result: SweepResult
    manifest_path: Path
    grid_path: Path
    caption_path: Path


def run_sweep(manifest: ExperimentManifest, *, model: MMDiT | None = None) -> SweepOutcome:
    """
    Sweep one task over block ordinals (lens) or cutoffs (reference drop) and write
    ``sweep/<ordinal>.png``, ``sweep/grid.json`` and the composite ``sweep/grid.png``.
    """
    if manifest.kind is not ExperimentKind.LAYER_SWEEP:
        raise ConfigError(f"{manifest.kind.value} is not a sweep manifest")
    model = model or load_model(manifest.model_config)
    config = model.config
    manifest.check(config)
    settings = manifest.sweep
    task = next((t for t in read_task_manifest(manifest.task_manifest) if t.task_id == settings.task_id), None)
    if task is None:
        raise ConfigError(f"task {settings.task_id!r} not in {manifest.task_manifest}")

    ctx = RunContext(manifest, model, Path(manifest.output_dir))
    base = ctx.base_run(task, encode_image(config, ctx.reference_pixels(task)))
    if settings.ordinals:
        ordinals = list(settings.ordinals)
    elif settings.op is SweepOp.REFERENCE_DROP:
        ordinals = list(range(config.total_blocks + 1))
    else:
        ordinals = list(range(config.total_blocks))
    marker = settings.marker
    if marker is None:
        binding = manifest.layer_for(task.family).ordinal(config)
        marker = binding + 1 if settings.op is SweepOp.REFERENCE_DROP else binding

    result = layer_sweep(
        model, base, settings.op, ordinals,
        lens_seed=manifest.lens_seed, variant=lens_variant_for(task.family), marker=marker,
    )
    sweep_dir = Path(manifest.output_dir) / "sweep"
    for entry, run in zip(result.manifest.entries, result.results):
        entry.image = save_png(run.pixels, sweep_dir / f"{entry.ordinal:02d}.png").name
    result.manifest.caption = f"{task.task_id}: {result.manifest.caption}"
    manifest_path = result.manifest.save(sweep_dir / "grid.json")
    grid_path, caption_path = emit_grid([run.pixels for run in result.results], result.manifest, sweep_dir / "grid.png")
    logger.info("sweep written", extra={"task_id": task.task_id, "op": settings.op.value, "cells": len(ordinals)})
    return SweepOutcome(result, manifest_path, grid_path, caption_path)
