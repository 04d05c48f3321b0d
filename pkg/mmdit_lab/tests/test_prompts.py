from __future__ import annotations

import pytest

from mmdit_lab.exceptions import UnknownExperimentFamilyCombo
from mmdit_lab.judging.prompts import (
    KNOCKOUT_LOST_QUESTIONS,
    KNOCKOUT_PRESERVED_QUESTIONS,
    LENS_QUESTIONS,
    SYSTEM_PROMPT,
    JudgeExperiment,
    question_for,
)
from mmdit_lab.taskgen.tasks import FamilyKind


def test_system_prompt_fixes_the_reply_format():
    assert '{"pass": 0 or 1' in SYSTEM_PROMPT
    assert "cannot determine" in SYSTEM_PROMPT


def test_image_counts():
    assert JudgeExperiment.I2I_PATCH.image_count == 4
    assert JudgeExperiment.T2I_LENS.image_count == 3


def test_scene_lens_questions_are_shared():
    addition = question_for(JudgeExperiment.T2I_LENS, FamilyKind.OBJECT_ADDITION)
    assert addition == question_for(JudgeExperiment.T2I_LENS, FamilyKind.OBJECT_REMOVAL)
    assert addition == LENS_QUESTIONS[FamilyKind.OBJECT_ADDITION]


def test_knockout_polarity():
    lost = question_for(JudgeExperiment.KNOCKOUT, FamilyKind.COLOR_TRANSFER, "ref->text")
    kept = question_for(JudgeExperiment.KNOCKOUT, FamilyKind.COLOR_TRANSFER, "ref->image")
    assert lost == KNOCKOUT_LOST_QUESTIONS[FamilyKind.COLOR_TRANSFER]
    assert kept == KNOCKOUT_PRESERVED_QUESTIONS[FamilyKind.COLOR_TRANSFER]
    assert "LOST" in lost and "still" in kept


def test_text_subset_rows_name_the_subset():
    question = question_for(JudgeExperiment.KNOCKOUT, FamilyKind.STYLE_TRANSFER, "ref->text[padding]")
    assert "ref->text[padding] was blocked" in question


def test_reference_drop_wording():
    question = question_for(JudgeExperiment.REFERENCE_DROP, FamilyKind.HUMAN_CUSTOMIZATION)
    assert "dropping the reference" in question
    assert "blocking ref->image" not in question


@pytest.mark.parametrize(("experiment", "family", "variant"), [
    (JudgeExperiment.KNOCKOUT, FamilyKind.COLOR_TRANSFER, "ref->everything"),
    (JudgeExperiment.KNOCKOUT, FamilyKind.COLOR_TRANSFER, ""),
    (JudgeExperiment.KNOCKOUT, FamilyKind.OBJECT_ADDITION, "ref->text"),
    (JudgeExperiment.I2I_PATCH, FamilyKind.OBJECT_REMOVAL, ""),
    (JudgeExperiment.REFERENCE_DROP, FamilyKind.OBJECT_ADDITION, ""),
])
def test_unknown_combinations(experiment, family, variant):
    with pytest.raises(UnknownExperimentFamilyCombo):
        question_for(experiment, family, variant)
