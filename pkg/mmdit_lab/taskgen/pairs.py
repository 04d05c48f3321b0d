"""
Patch-pair combinatorics for cross-image patching.

A pair shares one instruction between a source and a target that differ in
reference image and in noise seed. Only the three property families pair up;
scene add/remove tasks have no property to transfer.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from itertools import permutations
from typing import Iterable

from ..exceptions import InsufficientVariety, ProtocolViolation
from .tasks import EditTask, FamilyKind, PatchPair, StyleArm

logger = logging.getLogger(__name__)

PAIRED_FAMILIES = (FamilyKind.COLOR_TRANSFER, FamilyKind.STYLE_TRANSFER, FamilyKind.HUMAN_CUSTOMIZATION)


def _seed_index(task: EditTask) -> int:
    return int(task.task_id.rsplit("-s", 1)[1])


def _by(tasks: Iterable[EditTask], *keys) -> dict[tuple, list[EditTask]]:
    grouped: dict[tuple, list[EditTask]] = defaultdict(list)
    for task in tasks:
        grouped[tuple(key(task) for key in keys)].append(task)
    for bucket in grouped.values():
        bucket.sort(key=_seed_index)
    return grouped


def _check(pair: PatchPair) -> PatchPair:
    s, t = pair.source, pair.target
    if s.instruction != t.instruction or pair.shared_instruction != s.instruction:
        raise ProtocolViolation(f"{pair.pair_id}: instructions differ")
    if s.reference == t.reference:
        raise ProtocolViolation(f"{pair.pair_id}: same reference")
    if s.seed == t.seed:
        raise ProtocolViolation(f"{pair.pair_id}: same noise seed")
    return pair


def _color_pairs(tasks: list[EditTask]) -> list[PatchPair]:
    # one pair per ordered (source color, target color, object); source takes the
    # first seed, target the second, so noise differs even before seed derivation
    cells = _by(tasks, lambda t: t.subject, lambda t: t.instruction)
    colors = list(dict.fromkeys(t.subject for t in tasks))
    instructions = list(dict.fromkeys(t.instruction for t in tasks))
    pairs = []
    for src, dst in permutations(colors, 2):
        for instruction in instructions:
            sources, targets = cells.get((src, instruction)), cells.get((dst, instruction))
            if not sources or not targets:
                continue
            target = targets[1 % len(targets)]
            pairs.append(PatchPair(sources[0], target, instruction))
    return pairs


def _style_pairs(tasks: list[EditTask]) -> list[PatchPair]:
    # fictional arm is the source, the realistic analog the target; seeds are
    # rotated by one position
    cells = _by(tasks, lambda t: t.subject, lambda t: t.arm, lambda t: t.instruction)
    pairs = []
    for (slug, arm, instruction), sources in cells.items():
        if arm is not StyleArm.FICTIONAL:
            continue
        targets = cells.get((slug, StyleArm.REALISTIC, instruction), [])
        if not targets:
            continue
        for p, source in enumerate(sources):
            pairs.append(PatchPair(source, targets[(p + 1) % len(targets)], instruction))
    return pairs


def _human_pairs(tasks: list[EditTask]) -> list[PatchPair]:
    shared = [t for t in tasks if "-shared" in t.task_id]
    cells = _by(shared, lambda t: t.subject, lambda t: t.instruction)
    subjects = list(dict.fromkeys(t.subject for t in shared))
    instructions = list(dict.fromkeys(t.instruction for t in shared))
    pairs = []
    for src, dst in permutations(subjects, 2):
        for instruction in instructions:
            sources, targets = cells.get((src, instruction)), cells.get((dst, instruction))
            if sources and targets:
                pairs.append(PatchPair(sources[0], targets[0], instruction))
    return pairs


def build_patch_pairs(tasks: Iterable[EditTask]) -> list[PatchPair]:
    """Enumerate patch pairs for the tasks of one family."""
    tasks = list(tasks)
    families = {t.family for t in tasks}
    if len(families) > 1:
        raise ProtocolViolation(f"patch pairs mix families: {sorted(f.value for f in families)}")
    if len({t.reference for t in tasks}) < 2:
        raise InsufficientVariety("patch pairs need at least two distinct references")
    family = families.pop()
    if family is FamilyKind.COLOR_TRANSFER:
        pairs = _color_pairs(tasks)
    elif family is FamilyKind.STYLE_TRANSFER:
        pairs = _style_pairs(tasks)
    elif family is FamilyKind.HUMAN_CUSTOMIZATION:
        pairs = _human_pairs(tasks)
    else:
        raise ProtocolViolation(f"{family.value} tasks have no transferable property to patch")
    if not pairs:
        raise InsufficientVariety(f"no {family.value} pair shares an instruction across references")
    logger.debug("built patch pairs", extra={"family": family.value, "pairs": len(pairs)})
    return [_check(pair) for pair in pairs]
