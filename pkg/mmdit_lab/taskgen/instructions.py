"""
Instruction text for the task families.

Two modes: ``fixture`` returns the bundled deterministic lists under
``data/instructions``; ``endpoint`` asks a chat-with-images endpoint with the
instruction-generation prompts below and validates what comes back. Every
instruction leaving this module has passed its family's denylist.
"""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from typing import Any

from ..exceptions import MalformedInstructionJson, ProtocolViolation
from ..judging.transport import ChatRequest, ImageAttachment
from ..mmdit.rng import derive_seed
from .denylist import check_head_noun, check_text, data_json, find_term, load_denylist
from .fixtures import SceneInfo, scene_catalog
from .tasks import FamilyKind

logger = logging.getLogger(__name__)

SCENE_OBJECT_PROMPT = """You design test cases for an image-editing experiment. Given ONE image,
propose two short object names:

1. ADD: a single object NOT currently in the image but plausibly fits
   the scene. If no scene-agnostic addition fits, set "add_object": null.
2. REMOVE: a single object IS visible and could be plausibly removed
   (not the entire subject; the scene would still read coherently
   without it). If nothing meets that bar, set "remove_object": null.

SCENE-AGNOSTIC RULE: the proposed object names must NOT reveal the
specific scene/location depicted. For a volcano photo, "lava plume" or
"volcanic crater" is forbidden -- those give away the scene. Prefer
generic objects that could plausibly fit many different scenes. If no
scene-agnostic object fits a given field, set it to null.

FORBIDDEN OBJECTS: do NOT propose any of these (or any phrase
containing one of these words as the head noun): bird, backpack,
person, bicycle, bench, bottle, plant, dog. They are over-represented
in our existing dataset. Pick a different scene-agnostic object, or
set the field to null if nothing else fits.

Return ONLY a single JSON object on one line, no markdown:
{"add_object": "<noun>" | null,
 "remove_object": "<noun>" | null}

Rules:
- Object phrases: 1-4 words, lowercase, no punctuation, singular.
- All non-null object names must be pairwise distinct.
- No proper nouns, no named people.
- All non-null object names must obey the SCENE-AGNOSTIC RULE.
- All non-null object names must NOT be in the FORBIDDEN OBJECTS list."""

SUBJECT_PROMPT_SYSTEM = (
    'You write short action/scene prompts for image-customization tasks. Each prompt MUST follow the exact '
    'template: "A photograph of the {subject} in this image {verb_phrase}." The verb phrase should describe a '
    'single concrete action, scene, or interaction (5 to 15 words). Make each prompt clearly distinct from the '
    'others and from the example. No metaphor, no abstract concepts, no body-part close-ups.'
)

SUBJECT_PROMPT_USER = """Subject: {subject}
Existing prompt (slug={slug}): {existing_prompt}

Write 4 NEW prompts following the same template, each describing a different action or scene from the existing one. Output them as a JSON array of 4 objects, each with fields "slug" (a short snake_case verb-phrase identifier, e.g. "playing_chess") and "prompt" (the full sentence). No prose around the JSON."""

SHARED_HUMAN_SUBJECT = "person"

_FENCE = re.compile(r"^\s*```[a-zA-Z]*\s*|\s*```\s*$")
_OBJECT_PHRASE = re.compile(r"^[a-z]+( [a-z]+){0,3}$")


@dataclass(frozen=True)
class ObjectProposal:
    add_object: str | None
    remove_object: str | None


@dataclass(frozen=True)
class SubjectPrompt:
    slug: str
    prompt: str


def addition_instruction(noun: str) -> str:
    return f"add a {noun}"


def removal_instruction(noun: str) -> str:
    return f"remove the {noun}"


def subject_sentence(subject: str, verb_phrase: str) -> str:
    return f"A photograph of the {subject} in this image {verb_phrase}"


def _strip_fences(text: str) -> str:
    return _FENCE.sub("", text.strip())


def _load_json(text: str) -> Any:
    try:
        return json.loads(_strip_fences(text))
    except (json.JSONDecodeError, TypeError) as exc:
        raise MalformedInstructionJson(f"reply is not JSON: {str(text)[:120]!r}") from exc


# ----------------------------
# Validation
# ----------------------------

def check_object_phrase(phrase: str, scene: SceneInfo | None = None) -> None:
    if not _OBJECT_PHRASE.match(phrase):
        raise ProtocolViolation(f"object phrase {phrase!r} must be 1-4 lowercase words without punctuation")
    check_head_noun(phrase, load_denylist("scene"))
    if scene is not None:
        # scene-agnostic rule: the phrase may not name the depicted place
        check_text(phrase, (scene.place,))


def check_instruction(family: FamilyKind, instruction: str, subject: str = "") -> None:
    """Raises DenylistViolation if the instruction names the property the family studies."""
    family = FamilyKind(family)
    if family is FamilyKind.COLOR_TRANSFER:
        check_text(instruction, load_denylist("color"))
    elif family is FamilyKind.STYLE_TRANSFER:
        check_text(instruction, load_denylist("style"))
    elif family is FamilyKind.HUMAN_CUSTOMIZATION:
        check_text(instruction, load_denylist("human") + ((subject,) if subject else ()))
    else:
        noun = re.sub(r"^(add a|add an|remove the)\s+", "", instruction.strip().lower())
        check_head_noun(noun, load_denylist("scene"))


def parse_object_reply(text: str, scene: SceneInfo | None = None) -> ObjectProposal:
    data = _load_json(text)
    if not isinstance(data, dict) or set(data) != {"add_object", "remove_object"}:
        raise MalformedInstructionJson(f"expected add_object/remove_object, got {str(data)[:120]}")
    values = []
    for key in ("add_object", "remove_object"):
        value = data[key]
        if value is not None and not isinstance(value, str):
            raise MalformedInstructionJson(f"{key} must be a string or null")
        if value is not None:
            value = value.strip()
            check_object_phrase(value, scene)
        values.append(value)
    if values[0] is not None and values[0] == values[1]:
        raise ProtocolViolation("add_object and remove_object must differ")
    return ObjectProposal(*values)


def parse_subject_reply(text: str, subject: str, expected: int = 4) -> list[SubjectPrompt]:
    data = _load_json(text)
    if not isinstance(data, list) or len(data) != expected:
        raise MalformedInstructionJson(f"expected a JSON array of {expected} objects")
    prompts = []
    prefix = subject_sentence(subject, "").rstrip()
    for item in data:
        if not isinstance(item, dict) or not isinstance(item.get("slug"), str) or not isinstance(item.get("prompt"), str):
            raise MalformedInstructionJson(f"bad prompt object: {str(item)[:120]}")
        sentence = item["prompt"].strip().rstrip(".")
        if not sentence.startswith(prefix + " "):
            raise ProtocolViolation(f"prompt does not follow the subject template: {sentence!r}")
        prompts.append(SubjectPrompt(item["slug"].strip(), sentence))
    return prompts


# ----------------------------
# Fixture mode
# ----------------------------

def _verb_phrases() -> list[dict]:
    return data_json("instructions", "activities.json")["verb_phrases"]


def fixture_subject_prompts(subject: str, offset: int, count: int) -> list[SubjectPrompt]:
    """``count`` distinct sentences from the bundled activity pool, starting at ``offset``."""
    pool = _verb_phrases()
    picked = [pool[(offset + j) % len(pool)] for j in range(count)]
    return [SubjectPrompt(p["slug"], subject_sentence(subject, p["phrase"])) for p in picked]


def fixture_style_prompts() -> dict[str, list[str]]:
    meta = data_json("instructions", "style.json")
    count = meta["prompts_per_subject"]
    out = {}
    for index, item in enumerate(meta["subjects"]):
        prompts = fixture_subject_prompts(item["subject"], index * count, count)
        out[item["slug"]] = [p.prompt for p in prompts]
    return out


def fixture_human_prompts() -> tuple[dict[str, list[str]], list[str]]:
    meta = data_json("instructions", "humans.json")
    count = meta["individualized_per_subject"]
    individualized = {
        name: [p.prompt for p in fixture_subject_prompts(SHARED_HUMAN_SUBJECT, index * 3, count)]
        for index, name in enumerate(meta["subjects"])
    }
    return individualized, list(meta["shared"])


def _spread(n: int, k: int) -> set[int]:
    """k indices spread evenly over range(n)."""
    return {i for i in range(n) if (i * k) // n != ((i + 1) * k) // n}


def fixture_scene_objects() -> dict[str, ObjectProposal]:
    """One add/remove proposal per scene; a fixed number of scenes get null fields."""
    meta = data_json("instructions", "scenes.json")
    catalog = scene_catalog()
    no_add = _spread(len(catalog), meta["no_addition"])
    no_remove = _spread(len(catalog), meta["no_removal"])
    pool = meta["objects"]
    out = {}
    for index, scene in enumerate(catalog):
        usable = [o for o in pool if find_term(o, (scene.place,)) is None]
        start = derive_seed("scene-objects", scene.name) % len(usable)
        add = usable[start]
        remove = usable[(start + 1 + derive_seed("scene-remove", scene.name) % (len(usable) - 1)) % len(usable)]
        out[scene.name] = ObjectProposal(
            add_object=None if index in no_add else add,
            remove_object=None if index in no_remove else remove,
        )
    return out


# ----------------------------
# Entry point
# ----------------------------

def generate_instructions(family: FamilyKind, context: dict | None = None, *, client=None,
                          mode: str = "fixture") -> list[str]:
    """
    Instruction list for one family context.

    ``context`` keys by family: scenes take ``scene`` (a SceneInfo) and optionally
    ``image`` (PNG bytes); style takes ``subject``, ``slug``, ``existing_prompt``;
    humans take ``human_id`` for the individualized list (fixture mode) or
    ``subject`` (endpoint mode); without either the shared person prompts are used.
    """
    family = FamilyKind(family)
    context = context or {}
    if mode == "fixture":
        instructions = _fixture_instructions(family, context)
    elif mode == "endpoint":
        if client is None:
            raise ProtocolViolation("endpoint mode needs a chat client")
        instructions = _endpoint_instructions(family, context, client)
    else:
        raise ProtocolViolation(f"unknown instruction mode {mode!r}")
    for instruction in instructions:
        check_instruction(family, instruction, context.get("human_id", ""))
    return instructions


def _fixture_instructions(family: FamilyKind, context: dict) -> list[str]:
    if family in (FamilyKind.OBJECT_ADDITION, FamilyKind.OBJECT_REMOVAL):
        proposal = fixture_scene_objects()[context["scene"].name]
        return _scene_instructions(family, proposal)
    if family is FamilyKind.STYLE_TRANSFER:
        return fixture_style_prompts()[context["slug"]]
    if family is FamilyKind.HUMAN_CUSTOMIZATION:
        individualized, shared = fixture_human_prompts()
        human_id = context.get("human_id")
        return individualized[human_id] if human_id else shared
    meta = data_json("instructions", "colors.json")
    return [meta["template"].format(object=o) for o in meta["objects"]]


def _scene_instructions(family: FamilyKind, proposal: ObjectProposal) -> list[str]:
    if family is FamilyKind.OBJECT_ADDITION:
        return [addition_instruction(proposal.add_object)] if proposal.add_object else []
    return [removal_instruction(proposal.remove_object)] if proposal.remove_object else []


def _endpoint_instructions(family: FamilyKind, context: dict, client) -> list[str]:
    if family in (FamilyKind.OBJECT_ADDITION, FamilyKind.OBJECT_REMOVAL):
        images = (ImageAttachment("Image 1", context["image"]),) if context.get("image") else ()
        reply = client.complete(ChatRequest(system="", text=SCENE_OBJECT_PROMPT, images=images))
        return _scene_instructions(family, parse_object_reply(reply, context.get("scene")))
    if family in (FamilyKind.STYLE_TRANSFER, FamilyKind.HUMAN_CUSTOMIZATION):
        subject = context.get("subject", SHARED_HUMAN_SUBJECT)
        existing = context.get("existing_prompt") or subject_sentence(subject, _verb_phrases()[0]["phrase"])
        user = SUBJECT_PROMPT_USER.format(subject=subject, slug=context.get("slug", "example"), existing_prompt=existing)
        reply = client.complete(ChatRequest(system=SUBJECT_PROMPT_SYSTEM, text=user))
        generated = parse_subject_reply(reply, subject)
        logger.info("generated subject prompts", extra={"subject": subject, "count": len(generated)})
        return [existing.rstrip(".")] + [p.prompt for p in generated]
    raise ProtocolViolation("color transfer instructions are templated, not generated")

