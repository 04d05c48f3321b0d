from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class FamilyKind(str, Enum):
    OBJECT_ADDITION = "object_addition"
    OBJECT_REMOVAL = "object_removal"
    HUMAN_CUSTOMIZATION = "human_customization"
    COLOR_TRANSFER = "color_transfer"
    STYLE_TRANSFER = "style_transfer"

    @property
    def label(self) -> str:
        return self.value.replace("_", " ").title()


class PropertyUnderTest(str, Enum):
    COLOR = "color"
    STYLE = "style"
    HUMAN_IDENTITY = "human_identity"
    SCENE_CONTENT = "scene_content"


FAMILY_PROPERTY = {
    FamilyKind.OBJECT_ADDITION: PropertyUnderTest.SCENE_CONTENT,
    FamilyKind.OBJECT_REMOVAL: PropertyUnderTest.SCENE_CONTENT,
    FamilyKind.HUMAN_CUSTOMIZATION: PropertyUnderTest.HUMAN_IDENTITY,
    FamilyKind.COLOR_TRANSFER: PropertyUnderTest.COLOR,
    FamilyKind.STYLE_TRANSFER: PropertyUnderTest.STYLE,
}

# table column order
FAMILY_ORDER = (
    FamilyKind.OBJECT_ADDITION,
    FamilyKind.OBJECT_REMOVAL,
    FamilyKind.HUMAN_CUSTOMIZATION,
    FamilyKind.COLOR_TRANSFER,
    FamilyKind.STYLE_TRANSFER,
)


class StyleArm(str, Enum):
    REALISTIC = "realistic"
    FICTIONAL = "fictional"


@dataclass(frozen=True)
class EditTask:
    task_id: str
    family: FamilyKind
    instruction: str
    reference: str  # fixture name, e.g. "color/red"
    seed: int
    property: PropertyUnderTest
    arm: StyleArm | None = None
    # color name / style slug / human id / scene name
    subject: str = ""

    def __str__(self) -> str:
        return self.task_id


@dataclass(frozen=True)
class PatchPair:
    source: EditTask
    target: EditTask
    shared_instruction: str

    @property
    def pair_id(self) -> str:
        return f"{self.source.task_id}__{self.target.task_id}"

    @property
    def family(self) -> FamilyKind:
        return self.source.family
