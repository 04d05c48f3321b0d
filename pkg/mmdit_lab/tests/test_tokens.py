from __future__ import annotations

import numpy as np
import pytest
import torch

from mmdit_lab.exceptions import InvalidRunSpec, PromptTooLong, ShapeMismatch
from mmdit_lab.mmdit.codec import Provenance, decode_image, encode_image, initial_noise
from mmdit_lab.mmdit.tokens import SegmentKind, assemble_sequence, embed_prompt, tokenize

from .factories import make_pixels


def test_tokenize_is_stable_and_case_insensitive(config):
    assert tokenize(config, "Paint it BLUE") == tokenize(config, "paint it blue")
    assert len(tokenize(config, "paint it blue")) == 3
    assert all(0 <= t < config.vocab_size for t in tokenize(config, "a b c"))


def test_prompt_fills_content_then_padding(config):
    text = embed_prompt(config, tokenize(config, "paint it blue"))
    assert text.n_tokens == config.text_len
    assert len(text.segment(SegmentKind.TEXT_CONTENT)) == 3
    assert len(text.segment(SegmentKind.TEXT_PADDING)) == config.text_len - 3
    padding = text.rows(SegmentKind.TEXT_PADDING)
    assert torch.equal(padding[0], padding[-1])


def test_empty_prompt_is_all_padding(config):
    text = embed_prompt(config, ())
    assert text.layout.content_length == 0
    assert len(text.segment(SegmentKind.TEXT_PADDING)) == config.text_len


def test_prompt_longer_than_text_len(config):
    with pytest.raises(PromptTooLong):
        embed_prompt(config, tuple(range(config.text_len + 1)))


def test_sequence_order_text_reference_image(config):
    text = embed_prompt(config, tokenize(config, "paint it blue"))
    reference = encode_image(config, make_pixels(config, 1))
    sequence = assemble_sequence(config, text, reference, initial_noise(config, 0))
    kinds = [seg.kind for seg in sequence.segments]
    assert kinds == [SegmentKind.TEXT_CONTENT, SegmentKind.TEXT_PADDING, SegmentKind.REFERENCE, SegmentKind.IMAGE]
    assert sequence.n_tokens == config.text_len + 2 * config.n_image_tokens


def test_image_positions_do_not_depend_on_reference(config):
    text = embed_prompt(config, ())
    noise = initial_noise(config, 0)
    with_ref = assemble_sequence(config, text, encode_image(config, make_pixels(config, 1)), noise)
    without_ref = assemble_sequence(config, text, None, noise)
    image_a = with_ref.segment(SegmentKind.IMAGE)
    image_b = without_ref.segment(SegmentKind.IMAGE)
    assert torch.equal(with_ref.positions[image_a.start:image_a.stop], without_ref.positions[image_b.start:image_b.stop])


def test_image_segment_is_required(config):
    with pytest.raises(InvalidRunSpec):
        assemble_sequence(config, embed_prompt(config, ()), None, None)


def test_codec_round_trips_pixels(config):
    pixels = make_pixels(config, 3)
    latents = encode_image(config, pixels)
    assert latents.provenance is Provenance.ENCODED
    assert np.array_equal(decode_image(config, latents), pixels)


def test_codec_rejects_wrong_pixel_shape(config):
    with pytest.raises(ShapeMismatch):
        encode_image(config, np.zeros((3, 3, 3), dtype=np.uint8))


@pytest.mark.parametrize("value, dtype", [(300, np.int64), (-7, np.int64), (1000, np.uint16)])
def test_codec_rejects_pixels_outside_a_byte(config, value, dtype):
    with pytest.raises(ShapeMismatch):
        encode_image(config, np.full(config.pixel_shape, value, dtype=dtype))


def test_codec_accepts_wide_integer_dtypes_in_range(config):
    pixels = make_pixels(config, 3).astype(np.uint16)
    assert np.array_equal(decode_image(config, encode_image(config, pixels)), pixels)


def test_noise_depends_only_on_seed(config):
    assert torch.equal(initial_noise(config, 5).grid, initial_noise(config, 5).grid)
    assert not torch.equal(initial_noise(config, 5).grid, initial_noise(config, 6).grid)
