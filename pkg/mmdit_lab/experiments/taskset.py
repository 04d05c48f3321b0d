"""``gen-tasks`` stage: families, fixture PNGs, task and pair manifests."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from ..exceptions import TaskGenError
from ..taskgen.families import build_all
from ..taskgen.fixtures import fixture_images, save_png
from ..taskgen.manifests import reference_file, write_pair_manifest, write_task_manifest
from ..taskgen.pairs import PAIRED_FAMILIES, build_patch_pairs
from ..taskgen.tasks import FAMILY_ORDER, FamilyKind

logger = logging.getLogger(__name__)


@dataclass
class TaskSet:
    out_dir: Path
    task_manifest: Path
    pair_manifest: Path
    task_counts: dict[str, int]
    pair_counts: dict[str, int]


def generate_task_set(out_dir: Path | str, *, size: tuple[int, int], scale: int = 1, seed: int = 0,
                      families=FAMILY_ORDER) -> TaskSet:
    """
    Write ``references/<family>/<name>.png`` at ``size`` pixels, ``tasks.csv``,
    ``pairs.csv`` and ``stage.json`` under ``out_dir``. Each used family draws its
    full fixture set; only the referenced images are written to disk.
    """
    out = Path(out_dir)
    built = build_all(scale, families)
    tasks = [task for kind in FAMILY_ORDER if kind in built for task in built[kind]]

    needed: dict[FamilyKind, set[str]] = {}
    for task in tasks:
        needed.setdefault(task.family, set()).add(task.reference)
    for kind, references in needed.items():
        images = fixture_images(kind, size, seed)
        for reference in sorted(references):
            save_png(images[reference], out / reference_file(reference))

    pairs = []
    pair_counts = {}
    for kind in PAIRED_FAMILIES:
        if kind not in built:
            continue
        try:
            family_pairs = build_patch_pairs(built[kind])
        except TaskGenError as exc:
            # scaled builds may leave a family without a valid pair
            logger.warning("no patch pairs", extra={"family": kind.value, "error": str(exc)})
            family_pairs = []
        pairs.extend(family_pairs)
        pair_counts[kind.value] = len(family_pairs)

    task_manifest = write_task_manifest(tasks, out / "tasks.csv")
    pair_manifest = write_pair_manifest(pairs, out / "pairs.csv")
    task_counts = {kind.value: len(built[kind]) for kind in FAMILY_ORDER if kind in built}
    stage = {
        "stage": "gen-tasks",
        "scale": scale,
        "seed": seed,
        "size": list(size),
        "tasks": task_manifest.name,
        "pairs": pair_manifest.name,
        "task_counts": task_counts,
        "pair_counts": pair_counts,
    }
    (out / "stage.json").write_text(json.dumps(stage, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("generated task set", extra={"tasks": len(tasks), "pairs": len(pairs), "dir": str(out)})
    return TaskSet(out, task_manifest, pair_manifest, task_counts, pair_counts)
