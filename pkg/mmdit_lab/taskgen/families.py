from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from ..exceptions import EmptyParameterList, ProtocolViolation
from ..mmdit.rng import derive_seed
from .denylist import data_json
from .fixtures import scene_catalog
from .instructions import (
    addition_instruction,
    check_instruction,
    fixture_human_prompts,
    fixture_scene_objects,
    fixture_style_prompts,
    removal_instruction,
)
from .tasks import FAMILY_ORDER, FAMILY_PROPERTY, EditTask, FamilyKind, StyleArm

logger = logging.getLogger(__name__)

DEFAULT_SEEDS = (0, 1, 2, 3, 4)


@dataclass(frozen=True)
class TaskFamily:
    """
    One family and its parameter lists. Keys per kind:

    - color_transfer: ``colors``, ``objects``, ``seeds``
    - style_transfer: ``subjects`` (slug -> noun), ``instructions`` (slug -> list), ``seeds``, ``arms``
    - human_customization: ``subjects``, ``individualized`` (subject -> list), ``shared``, ``seeds``
    - object_addition / object_removal: ``items`` ((scene, noun) pairs), ``seeds``
    """

    kind: FamilyKind
    parameters: Mapping[str, Any] = field(default_factory=dict)

    def scaled(self, divisor: int) -> "TaskFamily":
        """Shrink every list by ``divisor`` keeping the cross-product shape and >= 2 references."""
        if divisor <= 1:
            return self
        reference_keys = {"colors", "subjects", "items"}
        fixed_keys = {"arms"}

        def shrink(values: Sequence, key: str) -> list:
            keep = max(1, math.ceil(len(values) / divisor))
            if key in reference_keys:
                keep = max(keep, min(2, len(values)))
            return list(values)[:keep]

        scaled: dict[str, Any] = {}
        for key, value in self.parameters.items():
            if isinstance(value, Mapping):
                scaled[key] = {k: shrink(v, key) for k, v in value.items()}
            elif isinstance(value, (list, tuple)) and key not in fixed_keys:
                scaled[key] = shrink(value, key)
            else:
                scaled[key] = value
        # per-subject maps follow the kept subjects
        if "subjects" in scaled:
            names = scaled["subjects"] if not isinstance(scaled["subjects"], Mapping) else list(scaled["subjects"])
            for key in ("instructions", "individualized"):
                if key in scaled:
                    scaled[key] = {k: v for k, v in scaled[key].items() if k in names}
        return TaskFamily(self.kind, scaled)


def _task_seed(kind: FamilyKind, reference: str, instruction: str, seed: int) -> int:
    return derive_seed(kind.value, reference, instruction, seed)


def _require(parameters: Mapping[str, Any], *keys: str) -> None:
    for key in keys:
        values = parameters.get(key)
        if not values:
            raise EmptyParameterList(f"parameter list {key!r} is empty")


# ----------------------------
# Builders
# ----------------------------

def _color_tasks(p) -> list[EditTask]:
    _require(p, "colors", "objects", "seeds")
    template = p.get("template", "draw a {object} in this color")
    tasks = []
    for color in p["colors"]:
        for obj in p["objects"]:
            instruction = template.format(object=obj)
            for seed in p["seeds"]:
                reference = f"color/{color}"
                tasks.append(EditTask(
                    task_id=f"color-{color}-{obj.replace(' ', '_')}-s{seed}",
                    family=FamilyKind.COLOR_TRANSFER,
                    instruction=instruction,
                    reference=reference,
                    seed=_task_seed(FamilyKind.COLOR_TRANSFER, reference, instruction, seed),
                    property=FAMILY_PROPERTY[FamilyKind.COLOR_TRANSFER],
                    subject=color,
                ))
    return tasks


def _style_tasks(p) -> list[EditTask]:
    _require(p, "subjects", "instructions", "seeds")
    arms = [StyleArm(a) for a in p.get("arms", (StyleArm.FICTIONAL, StyleArm.REALISTIC))]
    tasks = []
    for slug in p["subjects"]:
        prompts = p["instructions"].get(slug)
        if not prompts:
            raise EmptyParameterList(f"no instructions for style subject {slug!r}")
        for arm in arms:
            reference = f"style/{slug}_{arm.value}"
            for i, instruction in enumerate(prompts):
                for seed in p["seeds"]:
                    tasks.append(EditTask(
                        task_id=f"style-{slug}-{arm.value}-i{i}-s{seed}",
                        family=FamilyKind.STYLE_TRANSFER,
                        instruction=instruction,
                        reference=reference,
                        seed=_task_seed(FamilyKind.STYLE_TRANSFER, reference, instruction, seed),
                        property=FAMILY_PROPERTY[FamilyKind.STYLE_TRANSFER],
                        arm=arm,
                        subject=slug,
                    ))
    return tasks


def _human_tasks(p) -> list[EditTask]:
    _require(p, "subjects", "shared", "seeds")
    tasks = []
    for human in p["subjects"]:
        reference = f"human/{human}"
        prompts = [("ind", i, text) for i, text in enumerate(p.get("individualized", {}).get(human, []))]
        prompts += [("shared", i, text) for i, text in enumerate(p["shared"])]
        for tag, i, instruction in prompts:
            for seed in p["seeds"]:
                tasks.append(EditTask(
                    task_id=f"human-{human}-{tag}{i}-s{seed}",
                    family=FamilyKind.HUMAN_CUSTOMIZATION,
                    instruction=instruction,
                    reference=reference,
                    seed=_task_seed(FamilyKind.HUMAN_CUSTOMIZATION, reference, instruction, seed),
                    property=FAMILY_PROPERTY[FamilyKind.HUMAN_CUSTOMIZATION],
                    subject=human,
                ))
    return tasks


def _scene_tasks(kind: FamilyKind, p) -> list[EditTask]:
    _require(p, "items", "seeds")
    prefix, render = ("add", addition_instruction) if kind is FamilyKind.OBJECT_ADDITION else ("remove", removal_instruction)
    tasks = []
    for scene, noun in p["items"]:
        reference = f"scene/{scene}"
        instruction = render(noun)
        for seed in p["seeds"]:
            tasks.append(EditTask(
                task_id=f"{prefix}-{scene}-s{seed}",
                family=kind,
                instruction=instruction,
                reference=reference,
                seed=_task_seed(kind, reference, instruction, seed),
                property=FAMILY_PROPERTY[kind],
                subject=scene,
            ))
    return tasks


def build_family(kind: FamilyKind, parameters: Mapping[str, Any]) -> list[EditTask]:
    """Full cross-product of the parameter lists; ids are stable for equal parameters."""
    kind = FamilyKind(kind)
    if kind is FamilyKind.COLOR_TRANSFER:
        tasks = _color_tasks(parameters)
    elif kind is FamilyKind.STYLE_TRANSFER:
        tasks = _style_tasks(parameters)
    elif kind is FamilyKind.HUMAN_CUSTOMIZATION:
        tasks = _human_tasks(parameters)
    else:
        tasks = _scene_tasks(kind, parameters)
    seen = set()
    for task in tasks:
        if task.task_id in seen:
            raise ProtocolViolation(f"duplicate task id {task.task_id}")
        seen.add(task.task_id)
        check_instruction(kind, task.instruction, task.subject if kind is FamilyKind.HUMAN_CUSTOMIZATION else "")
    logger.debug("built family", extra={"family": kind.value, "tasks": len(tasks)})
    return tasks


# ----------------------------
# Defaults (fixture mode)
# ----------------------------

def default_family(kind: FamilyKind) -> TaskFamily:
    kind = FamilyKind(kind)
    if kind is FamilyKind.COLOR_TRANSFER:
        meta = data_json("instructions", "colors.json")
        return TaskFamily(kind, {
            "colors": [c["name"] for c in meta["colors"]],
            "objects": list(meta["objects"]),
            "seeds": list(DEFAULT_SEEDS),
            "template": meta["template"],
        })
    if kind is FamilyKind.STYLE_TRANSFER:
        subjects = [s["slug"] for s in data_json("instructions", "style.json")["subjects"]]
        return TaskFamily(kind, {
            "subjects": subjects,
            "instructions": fixture_style_prompts(),
            "seeds": list(DEFAULT_SEEDS),
            "arms": [StyleArm.FICTIONAL.value, StyleArm.REALISTIC.value],
        })
    if kind is FamilyKind.HUMAN_CUSTOMIZATION:
        individualized, shared = fixture_human_prompts()
        return TaskFamily(kind, {
            "subjects": list(individualized),
            "individualized": individualized,
            "shared": shared,
            "seeds": [0],
        })
    proposals = fixture_scene_objects()
    field_name = "add_object" if kind is FamilyKind.OBJECT_ADDITION else "remove_object"
    items = [
        (scene.name, getattr(proposals[scene.name], field_name))
        for scene in scene_catalog()
        if getattr(proposals[scene.name], field_name) is not None
    ]
    return TaskFamily(kind, {"items": items, "seeds": [0]})


def build_all(scale: int = 1, families: Sequence[FamilyKind] = FAMILY_ORDER) -> dict[FamilyKind, list[EditTask]]:
    return {
        FamilyKind(kind): build_family(kind, default_family(kind).scaled(scale).parameters)
        for kind in families
    }
