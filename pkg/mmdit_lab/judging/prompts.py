"""
Judge wording.

The system prompt and the question texts are fixed strings; a request selects one
by (experiment, family, variant). Knockout questions come in two polarities:
``ref->text`` rows ask whether the property was LOST, ``ref->image`` asks whether it
is still PRESERVED. The padding/content rows reuse the ``ref->text`` question with
the parenthetical swapped.
"""
from __future__ import annotations

from enum import Enum

from ..exceptions import UnknownExperimentFamilyCombo
from ..taskgen.tasks import FamilyKind

SYSTEM_PROMPT = (
    "You are a strict visual judge for an image-editing interpretability experiment. You will be shown "
    "several labeled images and asked one yes/no question about whether a stated prediction is satisfied.\n"
    "Respond ONLY with a single JSON object on one line, no markdown, no preamble:\n"
    '{"pass": 0 or 1, "reason": "<one short sentence, <=25 words>"}\n'
    'The "pass" field is 1 if the prediction is satisfied, 0 otherwise. If the question cannot be answered '
    'from the images, reply with {"pass": 0, "reason": "cannot determine"}.'
)

CANNOT_DETERMINE = "cannot determine"


class JudgeExperiment(str, Enum):
    T2I_LENS = "t2i_lens"
    KNOCKOUT = "knockout"
    REFERENCE_DROP = "reference_drop"
    I2I_PATCH = "i2i_patch"

    @property
    def image_count(self) -> int:
        return 4 if self is JudgeExperiment.I2I_PATCH else 3


# knockout table rows, in report order
KNOCKOUT_VARIANTS = ("ref->text", "ref->text[padding]", "ref->text[content]", "ref->image")

_SCENE_QUESTION = (
    "Compared to Image 2, does Image 3 contain ANY visible information drawn from Image 1 - things like "
    "colors, textures, layout, style, distinctive shapes, or specific subject features? Reply 1 if you can "
    "point to anything in Image 3 that came from Image 1 and was not in Image 2."
)

LENS_QUESTIONS = {
    FamilyKind.COLOR_TRANSFER: (
        "Compared to Image 2, does Image 3 take on the predominant solid color of Image 1? Reply 1 if the color "
        "of Image 1 is now visibly present in Image 3 (and was not in Image 2)."
    ),
    FamilyKind.STYLE_TRANSFER: (
        "Compared to Image 2, does Image 3 adopt a clipart / cartoon / illustrated / unrealistic style similar "
        "to Image 1? Look at the subject and the background / rest of the image - clipart-y style anywhere in "
        "the image counts as evidence. Reply 1 if Image 3 looks more clipart-like / less photographic than Image 2."
    ),
    FamilyKind.HUMAN_CUSTOMIZATION: (
        "Focus on the person in Image 3. Is the person in Image 3 a recognizably DIFFERENT individual "
        "(different face, hair, build, identity) from the person in Image 1? Reply 1 if a viewer would say it is "
        "a different person; reply 0 only if it is the same person."
    ),
    FamilyKind.OBJECT_ADDITION: _SCENE_QUESTION,
    FamilyKind.OBJECT_REMOVAL: _SCENE_QUESTION,
}

KNOCKOUT_LOST_QUESTIONS = {
    FamilyKind.COLOR_TRANSFER: (
        "Compared to Image 2, has Image 3 LOST the predominant solid color of Image 1? Reply 1 if the color is "
        "significantly removed (color depended on ref->text)."
    ),
    FamilyKind.STYLE_TRANSFER: (
        "Compared to Image 2, has Image 3 LOST the clipart / cartoon style of Image 1 and become more "
        "photographic / realistic? Reply 1 if Image 3 became more realistic when ref->text was blocked."
    ),
    FamilyKind.HUMAN_CUSTOMIZATION: (
        "Focus on the person in Image 3. Compared to Image 2, has Image 3 LOST the identity of the person in "
        "Image 1 - i.e. does the person in Image 3 look like a recognizably DIFFERENT individual (different face, "
        "hair, build) from the person in Image 1? Reply 1 if blocking ref->text destroyed the reference identity; "
        "reply 0 if Image 3 still looks like the same person as Image 1."
    ),
}

KNOCKOUT_PRESERVED_QUESTIONS = {
    FamilyKind.COLOR_TRANSFER: (
        "Compared to Image 2, does Image 3 still show the predominant solid color of Image 1? Reply 1 if the "
        "color is still clearly present (color survived blocking ref->image)."
    ),
    FamilyKind.STYLE_TRANSFER: (
        "Compared to Image 2, does Image 3 still keep the clipart / cartoon style of Image 1 rather than becoming "
        "photographic / realistic? Reply 1 if Image 3 still looks clipart-like when ref->image was blocked."
    ),
    FamilyKind.HUMAN_CUSTOMIZATION: (
        "Focus on the person in Image 3. Compared to Image 2, does the person in Image 3 still look like the same "
        "individual as the person in Image 1? Reply 1 if the reference identity survived blocking ref->image; "
        "reply 0 if Image 3 shows a recognizably DIFFERENT individual."
    ),
}

PATCH_QUESTIONS = {
    FamilyKind.COLOR_TRANSFER: (
        "Compared to Image 3 (which should show the color of Image 2), does Image 4 take on the color of Image 1 "
        "(the source) instead? Reply 1 if Image 4 is more like Image 1's color than Image 2's."
    ),
    FamilyKind.STYLE_TRANSFER: (
        "Compared to Image 3, has Image 4 become MORE clipart / cartoon / unrealistic in style (matching Image 1)? "
        "Look at the subject and the background / rest of the image - clipart-y style anywhere in the image counts "
        "as evidence. Reply 1 if Image 4 looks more clipart-like than Image 3."
    ),
    FamilyKind.HUMAN_CUSTOMIZATION: (
        "Focus on the person in Image 4. Does the person in Image 4 look more like person A (Image 1, the source) "
        "than like person B (Image 2, the target)? Reply 1 if A's identity transferred over."
    ),
}


def question_for(experiment: JudgeExperiment, family: FamilyKind, variant: str = "") -> str:
    experiment = JudgeExperiment(experiment)
    family = FamilyKind(family)
    table = {
        JudgeExperiment.T2I_LENS: LENS_QUESTIONS,
        JudgeExperiment.I2I_PATCH: PATCH_QUESTIONS,
        JudgeExperiment.REFERENCE_DROP: KNOCKOUT_PRESERVED_QUESTIONS,
    }.get(experiment)
    if experiment is JudgeExperiment.KNOCKOUT:
        if variant not in KNOCKOUT_VARIANTS:
            raise UnknownExperimentFamilyCombo(f"unknown knockout variant {variant!r}")
        table = KNOCKOUT_PRESERVED_QUESTIONS if variant == "ref->image" else KNOCKOUT_LOST_QUESTIONS
    question = table.get(family)
    if question is None:
        raise UnknownExperimentFamilyCombo(f"no {experiment.value} question for {family.value}")
    if experiment is JudgeExperiment.KNOCKOUT and variant != "ref->text" and variant != "ref->image":
        question = question.replace("ref->text", variant)
    elif experiment is JudgeExperiment.REFERENCE_DROP:
        question = question.replace("blocking ref->image", "dropping the reference")
    return question
