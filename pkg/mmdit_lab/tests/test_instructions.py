from __future__ import annotations

import json

import pytest

from mmdit_lab.exceptions import DenylistViolation, MalformedInstructionJson, ProtocolViolation
from mmdit_lab.taskgen.denylist import find_term, head_noun, load_denylist
from mmdit_lab.taskgen.fixtures import SceneInfo, scene_catalog
from mmdit_lab.taskgen.instructions import (
    ObjectProposal,
    check_instruction,
    check_object_phrase,
    fixture_scene_objects,
    generate_instructions,
    parse_object_reply,
    parse_subject_reply,
    subject_sentence,
)
from mmdit_lab.taskgen.tasks import FamilyKind

KITCHEN = SceneInfo(name="scene_000_a", category="kitchen_000", place="kitchen")


class FakeClient:
    def __init__(self, *replies: str):
        self.replies = list(replies)
        self.requests = []

    def complete(self, request):
        self.requests.append(request)
        return self.replies.pop(0)


def subject_reply(subject: str, phrases: list[str]) -> str:
    return json.dumps([
        {"slug": f"p{i}", "prompt": subject_sentence(subject, phrase) + "."} for i, phrase in enumerate(phrases)
    ])


# ----------------------------
# Denylists
# ----------------------------

def test_find_term_matches_whole_words():
    assert find_term("a scarlet boat", ("red",)) is None
    assert find_term("paint it Red!", ("red",)) == "red"
    assert find_term("in clip-art form", ("clip-art",)) == "clip-art"


def test_head_noun_is_the_last_word():
    assert head_noun("small wooden chair") == "chair"
    assert head_noun("") == ""


def test_denylists_are_loaded_lowercase_without_comments():
    for name in ("color", "style", "human", "scene"):
        terms = load_denylist(name)
        assert terms
        assert all(t == t.lower() and not t.startswith("#") for t in terms)


@pytest.mark.parametrize(("family", "instruction"), [
    (FamilyKind.COLOR_TRANSFER, "draw a red chair"),
    (FamilyKind.STYLE_TRANSFER, "make a cartoon of the dog"),
    (FamilyKind.HUMAN_CUSTOMIZATION, "a photograph of the man reading"),
    (FamilyKind.OBJECT_ADDITION, "add a dog"),
    (FamilyKind.OBJECT_REMOVAL, "remove the bottles"),
])
def test_instruction_naming_the_property(family, instruction):
    with pytest.raises(DenylistViolation):
        check_instruction(family, instruction)


def test_human_instruction_may_not_name_the_subject():
    check_instruction(FamilyKind.HUMAN_CUSTOMIZATION, "the person in this image sings", "")
    with pytest.raises(DenylistViolation) as info:
        check_instruction(FamilyKind.HUMAN_CUSTOMIZATION, "human_03 sings", "human_03")
    assert info.value.term == "human_03"


def test_object_phrases():
    check_object_phrase("wooden chair")
    check_object_phrase("kite", KITCHEN)
    with pytest.raises(DenylistViolation):
        check_object_phrase("small dogs")
    with pytest.raises(DenylistViolation):
        check_object_phrase("kitchen towel", KITCHEN)
    with pytest.raises(ProtocolViolation):
        check_object_phrase("A Chair")
    with pytest.raises(ProtocolViolation):
        check_object_phrase("one two three four five")


# ----------------------------
# Reply parsing
# ----------------------------

def test_object_reply_with_fences_and_nulls():
    reply = '```json\n{"add_object": "lamp", "remove_object": null}\n```'
    assert parse_object_reply(reply, KITCHEN) == ObjectProposal("lamp", None)


@pytest.mark.parametrize(("reply", "error"), [
    ("not json", MalformedInstructionJson),
    ('["lamp"]', MalformedInstructionJson),
    ('{"add_object": "lamp"}', MalformedInstructionJson),
    ('{"add_object": "lamp", "remove_object": "mug", "note": ""}', MalformedInstructionJson),
    ('{"add_object": 3, "remove_object": "mug"}', MalformedInstructionJson),
    ('{"add_object": "lamp", "remove_object": "lamp"}', ProtocolViolation),
    ('{"add_object": "dog", "remove_object": "mug"}', DenylistViolation),
    ('{"add_object": "kitchen stool", "remove_object": "mug"}', DenylistViolation),
])
def test_object_reply_errors(reply, error):
    with pytest.raises(error):
        parse_object_reply(reply, KITCHEN)


def test_subject_reply():
    reply = subject_reply("robot", ["reading a book", "riding a bus", "eating soup", "flying a kite"])
    prompts = parse_subject_reply(reply, "robot")
    assert [p.slug for p in prompts] == ["p0", "p1", "p2", "p3"]
    assert prompts[0].prompt == "A photograph of the robot in this image reading a book"


def test_subject_reply_errors():
    with pytest.raises(MalformedInstructionJson):
        parse_subject_reply(subject_reply("robot", ["reading"]), "robot")
    with pytest.raises(MalformedInstructionJson):
        parse_subject_reply('[{"slug": 1, "prompt": "x"}, {}, {}, {}]', "robot")
    wrong = json.dumps([{"slug": "a", "prompt": "A robot is reading"}] * 4)
    with pytest.raises(ProtocolViolation):
        parse_subject_reply(wrong, "robot")


# ----------------------------
# Generation
# ----------------------------

def test_fixture_scene_objects_counts():
    proposals = fixture_scene_objects()
    assert len(proposals) == len(scene_catalog()) == 794
    assert sum(p.add_object is not None for p in proposals.values()) == 789
    assert sum(p.remove_object is not None for p in proposals.values()) == 726
    for scene in scene_catalog()[:50]:
        proposal = proposals[scene.name]
        assert proposal.add_object != proposal.remove_object


def test_fixture_mode_instructions():
    colors = generate_instructions(FamilyKind.COLOR_TRANSFER)
    assert colors[0] == "draw a chair in this color"
    shared = generate_instructions(FamilyKind.HUMAN_CUSTOMIZATION)
    assert len(shared) == 5
    assert len(generate_instructions(FamilyKind.HUMAN_CUSTOMIZATION, {"human_id": "human_00"})) == 9
    assert len(generate_instructions(FamilyKind.STYLE_TRANSFER, {"slug": "man_crossword"})) == 5


def test_endpoint_mode_scene_objects():
    client = FakeClient('{"add_object": "lamp", "remove_object": "mug"}', '{"add_object": "lamp", "remove_object": "mug"}')
    context = {"scene": KITCHEN, "image": b"\x89PNG"}
    assert generate_instructions(FamilyKind.OBJECT_ADDITION, context, client=client, mode="endpoint") == ["add a lamp"]
    assert generate_instructions(FamilyKind.OBJECT_REMOVAL, context, client=client, mode="endpoint") == ["remove the mug"]
    assert len(client.requests[0].images) == 1


def test_endpoint_mode_subject_prompts():
    client = FakeClient(subject_reply("robot", ["reading a book", "riding a bus", "eating soup", "flying a kite"]))
    context = {"subject": "robot", "slug": "robot_reading", "existing_prompt": subject_sentence("robot", "sweeping the floor")}
    prompts = generate_instructions(FamilyKind.STYLE_TRANSFER, context, client=client, mode="endpoint")
    assert len(prompts) == 5
    assert prompts[0].endswith("sweeping the floor")
    assert "robot" in client.requests[0].text


def test_endpoint_mode_rejects_bad_setups():
    with pytest.raises(ProtocolViolation):
        generate_instructions(FamilyKind.STYLE_TRANSFER, {"subject": "robot"}, mode="endpoint")
    with pytest.raises(ProtocolViolation):
        generate_instructions(FamilyKind.COLOR_TRANSFER, client=FakeClient(), mode="endpoint")
    with pytest.raises(ProtocolViolation):
        generate_instructions(FamilyKind.COLOR_TRANSFER, mode="oracle")
