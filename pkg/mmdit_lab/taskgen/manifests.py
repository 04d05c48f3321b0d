from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Iterable

from ..exceptions import SerializationError
from .tasks import EditTask, FamilyKind, PatchPair, PropertyUnderTest, StyleArm

logger = logging.getLogger(__name__)

TASK_FIELDS = ("task_id", "family", "instruction", "reference_path", "seed", "property", "arm", "subject")
PAIR_FIELDS = ("pair_id", "family", "source_task_id", "target_task_id", "shared_instruction")


def reference_file(reference: str) -> str:
    """Fixture PNG location relative to the manifest directory."""
    return f"references/{reference}.png"


def reference_path(task: EditTask) -> str:
    return reference_file(task.reference)


def write_task_manifest(tasks: Iterable[EditTask], path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=TASK_FIELDS, lineterminator="\n")
        writer.writeheader()
        for task in tasks:
            writer.writerow({
                "task_id": task.task_id,
                "family": task.family.value,
                "instruction": task.instruction,
                "reference_path": reference_path(task),
                "seed": task.seed,
                "property": task.property.value,
                "arm": task.arm.value if task.arm else "",
                "subject": task.subject,
            })
            count += 1
    logger.info("wrote task manifest", extra={"path": str(path), "tasks": count})
    return path


def read_task_manifest(path: Path | str) -> list[EditTask]:
    path = Path(path)
    tasks = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(TASK_FIELDS[:6]) - set(reader.fieldnames or ())
        if missing:
            raise SerializationError(f"{path}: missing columns {sorted(missing)}")
        for line, row in enumerate(reader, start=2):
            try:
                reference = row["reference_path"]
                if reference.startswith("references/") and reference.endswith(".png"):
                    reference = reference[len("references/"):-len(".png")]
                tasks.append(EditTask(
                    task_id=row["task_id"],
                    family=FamilyKind(row["family"]),
                    instruction=row["instruction"],
                    reference=reference,
                    seed=int(row["seed"]),
                    property=PropertyUnderTest(row["property"]),
                    arm=StyleArm(row["arm"]) if row.get("arm") else None,
                    subject=row.get("subject") or "",
                ))
            except (KeyError, ValueError) as exc:
                raise SerializationError(f"{path}:{line}: {exc}") from exc
    return tasks


def write_pair_manifest(pairs: Iterable[PatchPair], path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=PAIR_FIELDS, lineterminator="\n")
        writer.writeheader()
        for pair in pairs:
            writer.writerow({
                "pair_id": pair.pair_id,
                "family": pair.family.value,
                "source_task_id": pair.source.task_id,
                "target_task_id": pair.target.task_id,
                "shared_instruction": pair.shared_instruction,
            })
    return path


def read_pair_manifest(path: Path | str, tasks: Iterable[EditTask]) -> list[PatchPair]:
    """Rebuild pairs against an already-loaded task list."""
    path = Path(path)
    by_id = {task.task_id: task for task in tasks}
    pairs = []
    with path.open(newline="", encoding="utf-8") as fh:
        for line, row in enumerate(csv.DictReader(fh), start=2):
            try:
                pairs.append(PatchPair(
                    by_id[row["source_task_id"]], by_id[row["target_task_id"]], row["shared_instruction"],
                ))
            except KeyError as exc:
                raise SerializationError(f"{path}:{line}: unknown task {exc}") from exc
    return pairs
