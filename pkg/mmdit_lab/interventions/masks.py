"""
Segment-level attention edges and their per-layer boolean masks.

An edge ``(source, target)`` means target queries may not read source keys.
``mask[i, j]`` is True when query i may attend to key j.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import torch

from ..exceptions import InvalidRunSpec, SegmentAbsent
from ..mmdit.config import ModelConfig
from ..mmdit.tokens import SegmentKind, SequenceLayout


class SegmentRole(str, Enum):
    TEXT = "text"
    REFERENCE = "reference"
    IMAGE = "image"


Edge = tuple[SegmentRole, SegmentRole]

REF_TO_IMAGE: Edge = (SegmentRole.REFERENCE, SegmentRole.IMAGE)
REF_TO_TEXT: Edge = (SegmentRole.REFERENCE, SegmentRole.TEXT)
IMAGE_TO_REF: Edge = (SegmentRole.IMAGE, SegmentRole.REFERENCE)
TEXT_TO_REF: Edge = (SegmentRole.TEXT, SegmentRole.REFERENCE)
REFERENCE_EDGES = frozenset({REF_TO_IMAGE, REF_TO_TEXT, IMAGE_TO_REF, TEXT_TO_REF})


def edge_label(edge: Edge) -> str:
    short = {SegmentRole.TEXT: "text", SegmentRole.REFERENCE: "ref", SegmentRole.IMAGE: "image"}
    return f"{short[edge[0]]}->{short[edge[1]]}"


def parse_edge(text: str) -> Edge:
    names = {"text": SegmentRole.TEXT, "ref": SegmentRole.REFERENCE, "reference": SegmentRole.REFERENCE,
             "image": SegmentRole.IMAGE}
    source, sep, target = text.strip().lower().partition("->")
    if not sep or source not in names or target not in names:
        raise InvalidRunSpec(f"cannot parse edge {text!r}")
    return (names[source], names[target])


class TokenSubset(str, Enum):
    ALL_TEXT = "all_text"
    PADDING_ONLY = "padding_only"
    CONTENT_ONLY = "content_only"

    def indices(self, content_length: int, text_len: int) -> range:
        if self is TokenSubset.PADDING_ONLY:
            return range(content_length, text_len)
        if self is TokenSubset.CONTENT_ONLY:
            return range(0, content_length)
        return range(0, text_len)


@dataclass(frozen=True)
class EdgeMaskSpec:
    blocked_edges: frozenset[Edge]
    start: int = 0
    # None runs to the last block
    stop: int | None = None
    text_subset: TokenSubset = TokenSubset.ALL_TEXT

    def __post_init__(self):
        object.__setattr__(self, "blocked_edges", frozenset(tuple(SegmentRole(r) for r in e) for e in self.blocked_edges))
        object.__setattr__(self, "text_subset", TokenSubset(self.text_subset))

    def interval(self, config: ModelConfig) -> tuple[int, int]:
        stop = config.total_blocks if self.stop is None else self.stop
        if not 0 <= self.start < stop <= config.total_blocks:
            raise InvalidRunSpec(f"layer interval [{self.start}, {stop}) outside [0, {config.total_blocks}]")
        return self.start, stop

    @property
    def touches_reference(self) -> bool:
        return any(SegmentRole.REFERENCE in edge for edge in self.blocked_edges)

    def describe(self) -> dict:
        return {
            "edges": sorted(edge_label(e) for e in self.blocked_edges),
            "start": self.start,
            "stop": self.stop,
            "text_subset": self.text_subset.value,
        }


def role_indices(role: SegmentRole, layout: SequenceLayout, subset: TokenSubset = TokenSubset.ALL_TEXT) -> list[int]:
    """Token indices of a segment role; ``subset`` only narrows the text side."""
    if role is SegmentRole.TEXT:
        return list(subset.indices(layout.content_length, layout.text_len))
    kind = SegmentKind.REFERENCE if role is SegmentRole.REFERENCE else SegmentKind.IMAGE
    segment = layout.get(kind)
    if segment is None:
        raise SegmentAbsent(f"the run has no {kind.value} segment")
    return list(segment.indices)


def block_mask(spec: EdgeMaskSpec, layout: SequenceLayout) -> torch.Tensor:
    """The [n_tokens, n_tokens] mask used for every layer inside the interval."""
    mask = torch.ones((layout.n_tokens, layout.n_tokens), dtype=torch.bool)
    for source, target in sorted(spec.blocked_edges):
        keys = role_indices(source, layout, spec.text_subset)
        queries = role_indices(target, layout, spec.text_subset)
        if keys and queries:
            mask[torch.tensor(queries)[:, None], torch.tensor(keys)[None, :]] = False
    return mask


def compile_masks(spec: EdgeMaskSpec, layout: SequenceLayout, config: ModelConfig) -> list[torch.Tensor]:
    """One boolean matrix per block ordinal: blocked cells inside the interval, all-true outside."""
    start, stop = spec.interval(config)
    allowed = torch.ones((layout.n_tokens, layout.n_tokens), dtype=torch.bool)
    blocked = block_mask(spec, layout)
    return [blocked if start <= ordinal < stop else allowed for ordinal in range(config.total_blocks)]
