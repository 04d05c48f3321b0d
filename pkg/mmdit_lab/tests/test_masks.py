from __future__ import annotations

import pytest
import torch

from mmdit_lab.exceptions import InvalidRunSpec, SegmentAbsent
from mmdit_lab.interventions.engine import knockout_edges
from mmdit_lab.interventions.masks import (
    IMAGE_TO_REF,
    REF_TO_IMAGE,
    REF_TO_TEXT,
    REFERENCE_EDGES,
    EdgeMaskSpec,
    SegmentRole,
    TokenSubset,
    block_mask,
    compile_masks,
    parse_edge,
)
from mmdit_lab.mmdit.codec import encode_image, initial_noise
from mmdit_lab.mmdit.tokens import SegmentKind, assemble_sequence, embed_prompt, tokenize

from .factories import make_pixels


def make_layout(config, with_reference=True, prompt="paint it blue"):
    reference = encode_image(config, make_pixels(config, 0)) if with_reference else None
    text = embed_prompt(config, tokenize(config, prompt))
    return assemble_sequence(config, text, reference, initial_noise(config, 0)).layout


def test_edge_parsing():
    assert parse_edge("ref->image") == REF_TO_IMAGE
    assert parse_edge(" Reference->Text ") == REF_TO_TEXT
    with pytest.raises(InvalidRunSpec):
        parse_edge("ref=>image")


def test_ref_to_image_blocks_only_image_queries_on_reference_keys(config):
    layout = make_layout(config)
    mask = block_mask(EdgeMaskSpec(frozenset({REF_TO_IMAGE})), layout)
    ref, image = layout.get(SegmentKind.REFERENCE), layout.get(SegmentKind.IMAGE)
    assert not mask[image.start:image.stop, ref.start:ref.stop].any()
    assert mask[:config.text_len].all()
    assert mask[ref.start:ref.stop].all()
    assert int((~mask).sum()) == len(image) * len(ref)


def test_text_subset_narrows_the_text_side(config):
    layout = make_layout(config)
    mask = block_mask(EdgeMaskSpec(frozenset({REF_TO_TEXT}), text_subset=TokenSubset.PADDING_ONLY), layout)
    ref = layout.get(SegmentKind.REFERENCE)
    assert mask[:3, ref.start:ref.stop].all()
    assert not mask[3:config.text_len, ref.start:ref.stop].any()


@pytest.mark.parametrize("subset, expected", [
    (TokenSubset.ALL_TEXT, range(0, 8)),
    (TokenSubset.PADDING_ONLY, range(3, 8)),
    (TokenSubset.CONTENT_ONLY, range(0, 3)),
])
def test_subset_indices(subset, expected):
    assert subset.indices(3, 8) == expected


def test_interval_leaves_other_layers_open(config):
    layout = make_layout(config)
    masks = compile_masks(EdgeMaskSpec(REFERENCE_EDGES, start=2, stop=5), layout, config)
    assert len(masks) == config.total_blocks
    open_layers = [k for k, m in enumerate(masks) if bool(m.all())]
    assert open_layers == [0, 1] + list(range(5, config.total_blocks))


@pytest.mark.parametrize("start, stop", [(3, 3), (-1, 2), (0, 13)])
def test_bad_intervals(config, start, stop):
    with pytest.raises(InvalidRunSpec):
        compile_masks(EdgeMaskSpec(REFERENCE_EDGES, start, stop), make_layout(config), config)


def test_reference_edges_need_a_reference(config):
    with pytest.raises(SegmentAbsent):
        block_mask(EdgeMaskSpec(frozenset({IMAGE_TO_REF})), make_layout(config, with_reference=False))


def test_full_isolation_never_empties_a_row(config):
    layout = make_layout(config, prompt="")
    mask = block_mask(EdgeMaskSpec(REFERENCE_EDGES), layout)
    assert bool(mask.any(dim=-1).all())


@pytest.mark.parametrize("row, subset", [
    ("ref->text", TokenSubset.ALL_TEXT),
    ("ref->text[padding]", TokenSubset.PADDING_ONLY),
    ("ref->text[content]", TokenSubset.CONTENT_ONLY),
])
def test_knockout_rows_map_to_edges(row, subset):
    edges, parsed = knockout_edges(row)
    assert edges == frozenset({(SegmentRole.REFERENCE, SegmentRole.TEXT)})
    assert parsed is subset


def test_unknown_knockout_row():
    with pytest.raises(InvalidRunSpec):
        knockout_edges("ref->text[middle]")
