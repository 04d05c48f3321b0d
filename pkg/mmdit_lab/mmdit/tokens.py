from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import torch

from ..exceptions import InvalidRunSpec, PromptTooLong, ShapeMismatch, UnknownLayer
from .config import ModelConfig
from .rng import derive_seed, gaussian


class SegmentKind(str, Enum):
    TEXT_CONTENT = "text_content"
    TEXT_PADDING = "text_padding"
    REFERENCE = "reference"
    IMAGE = "image"


# rotary tag on the first position axis; non-reference tags never depend on
# whether a reference segment is present
SEGMENT_TAGS = {
    SegmentKind.TEXT_CONTENT: 0,
    SegmentKind.TEXT_PADDING: 0,
    SegmentKind.REFERENCE: 1,
    SegmentKind.IMAGE: 2,
}

TEXT_KINDS = (SegmentKind.TEXT_CONTENT, SegmentKind.TEXT_PADDING)


@dataclass(frozen=True)
class Segment:
    kind: SegmentKind
    start: int
    stop: int

    def __len__(self) -> int:
        return self.stop - self.start

    @property
    def indices(self) -> range:
        return range(self.start, self.stop)


@dataclass(frozen=True)
class SequenceLayout:
    """Segment bookkeeping of a TokenSequence, without the tensors."""

    segments: tuple[Segment, ...]

    def __post_init__(self):
        cursor = 0
        for seg in self.segments:
            if seg.start != cursor or seg.stop < seg.start:
                raise ShapeMismatch(f"segments are not contiguous at {seg}")
            cursor = seg.stop
        kinds = [seg.kind for seg in self.segments]
        for kind in (SegmentKind.TEXT_CONTENT, SegmentKind.TEXT_PADDING):
            if kinds.count(kind) != 1:
                raise ShapeMismatch(f"expected exactly one {kind.value} segment")
        if kinds.count(SegmentKind.IMAGE) > 1 or kinds.count(SegmentKind.REFERENCE) > 1:
            raise ShapeMismatch("at most one image and one reference segment")

    @property
    def n_tokens(self) -> int:
        return self.segments[-1].stop if self.segments else 0

    def get(self, kind: SegmentKind) -> Segment | None:
        for seg in self.segments:
            if seg.kind is kind:
                return seg
        return None

    @property
    def text_len(self) -> int:
        return len(self.get(SegmentKind.TEXT_CONTENT)) + len(self.get(SegmentKind.TEXT_PADDING))

    @property
    def content_length(self) -> int:
        return len(self.get(SegmentKind.TEXT_CONTENT))

    @property
    def has_reference(self) -> bool:
        return self.get(SegmentKind.REFERENCE) is not None


@dataclass
class TokenSequence:
    embeddings: torch.Tensor  # [n_tokens, d_model]
    segments: tuple[Segment, ...]
    positions: torch.Tensor  # [n_tokens, 3] (segment tag, row, col)
    layout: SequenceLayout = field(init=False, repr=False)

    def __post_init__(self):
        self.segments = tuple(self.segments)
        self.layout = SequenceLayout(self.segments)
        n = self.layout.n_tokens
        if self.embeddings.ndim != 2 or self.embeddings.shape[0] != n:
            raise ShapeMismatch(f"embeddings {tuple(self.embeddings.shape)} do not cover {n} tokens")
        if tuple(self.positions.shape) != (n, 3):
            raise ShapeMismatch(f"positions {tuple(self.positions.shape)} do not cover {n} tokens")

    @property
    def n_tokens(self) -> int:
        return self.layout.n_tokens

    def segment(self, kind: SegmentKind) -> Segment | None:
        return self.layout.get(kind)

    def rows(self, kind: SegmentKind) -> torch.Tensor:
        seg = self.segment(kind)
        if seg is None:
            return self.embeddings[:0]
        return self.embeddings[seg.start:seg.stop]

    def with_embeddings(self, embeddings: torch.Tensor) -> "TokenSequence":
        return TokenSequence(embeddings=embeddings, segments=self.segments, positions=self.positions)


# ----------------------------
# Layers
# ----------------------------

class LayerKind(str, Enum):
    INPUT_EMBEDDING = "input"
    DOUBLE = "double"
    SINGLE = "single"


@dataclass(frozen=True, order=True)
class LayerId:
    kind: LayerKind
    index: int = 0

    @classmethod
    def input_embedding(cls) -> "LayerId":
        return cls(LayerKind.INPUT_EMBEDDING, 0)

    @classmethod
    def double(cls, index: int) -> "LayerId":
        return cls(LayerKind.DOUBLE, index)

    @classmethod
    def single(cls, index: int) -> "LayerId":
        return cls(LayerKind.SINGLE, index)

    @classmethod
    def parse(cls, text: str) -> "LayerId":
        """``double:8`` / ``single:10`` use the 1-based numbering of reports; ``input`` is the embedding."""
        text = text.strip().lower()
        if text in ("input", "input_embedding", "embedding"):
            return cls.input_embedding()
        kind, _, number = text.partition(":")
        try:
            layer_kind = LayerKind(kind)
            index = int(number) - 1
        except ValueError as exc:
            raise UnknownLayer(f"cannot parse layer {text!r}") from exc
        if layer_kind is LayerKind.INPUT_EMBEDDING or index < 0:
            raise UnknownLayer(f"cannot parse layer {text!r}")
        return cls(layer_kind, index)

    @classmethod
    def from_ordinal(cls, config: ModelConfig, ordinal: int) -> "LayerId":
        if not 0 <= ordinal < config.total_blocks:
            raise UnknownLayer(f"block ordinal {ordinal} outside [0, {config.total_blocks})")
        if ordinal < config.n_double_blocks:
            return cls.double(ordinal)
        return cls.single(ordinal - config.n_double_blocks)

    def ordinal(self, config: ModelConfig) -> int:
        """Position in the flattened block order; the input embedding sits before block 0."""
        self.validate(config)
        if self.kind is LayerKind.INPUT_EMBEDDING:
            return -1
        if self.kind is LayerKind.DOUBLE:
            return self.index
        return config.n_double_blocks + self.index

    def validate(self, config: ModelConfig) -> None:
        limit = {
            LayerKind.INPUT_EMBEDDING: 1,
            LayerKind.DOUBLE: config.n_double_blocks,
            LayerKind.SINGLE: config.n_single_blocks,
        }[self.kind]
        if not 0 <= self.index < limit:
            raise UnknownLayer(f"{self} does not exist in a {config.n_double_blocks}+{config.n_single_blocks} model")

    @property
    def label(self) -> str:
        if self.kind is LayerKind.INPUT_EMBEDDING:
            return "input"
        return f"{self.kind.value}:{self.index + 1}"

    def __str__(self) -> str:
        if self.kind is LayerKind.INPUT_EMBEDDING:
            return "InputEmbedding"
        return f"{self.kind.value.capitalize()}#{self.index + 1}"


# ----------------------------
# Text side
# ----------------------------

_WORD = re.compile(r"[a-z0-9']+")


def tokenize(config: ModelConfig, text: str) -> tuple[int, ...]:
    """Hashed word ids; stands in for the external text encoder's tokenizer."""
    return tuple(derive_seed("word", w) % config.vocab_size for w in _WORD.findall(text.lower()))


def token_vector(config: ModelConfig, token_id: int) -> torch.Tensor:
    return gaussian((config.d_model,), config.rng, derive_seed(config.seed, "token", token_id))


def pad_vector(config: ModelConfig) -> torch.Tensor:
    return gaussian((config.d_model,), config.rng, derive_seed(config.seed, "pad"))


def text_positions(text_len: int) -> torch.Tensor:
    pos = torch.zeros((text_len, 3), dtype=torch.long)
    pos[:, 1] = torch.arange(text_len)
    return pos


def embed_prompt(config: ModelConfig, prompt: Sequence[int]) -> TokenSequence:
    prompt = [int(t) for t in prompt]
    if len(prompt) > config.text_len:
        raise PromptTooLong(f"prompt has {len(prompt)} tokens, text_len is {config.text_len}")
    rows = [token_vector(config, t) for t in prompt]
    pad = pad_vector(config)
    rows.extend(pad for _ in range(config.text_len - len(prompt)))
    embeddings = torch.stack(rows) if rows else torch.zeros((0, config.d_model), dtype=torch.float64)
    segments = (
        Segment(SegmentKind.TEXT_CONTENT, 0, len(prompt)),
        Segment(SegmentKind.TEXT_PADDING, len(prompt), config.text_len),
    )
    return TokenSequence(embeddings=embeddings, segments=segments, positions=text_positions(config.text_len))


# ----------------------------
# Full sequence
# ----------------------------

def grid_positions(tag: int, height: int, width: int) -> torch.Tensor:
    rows, cols = torch.meshgrid(torch.arange(height), torch.arange(width), indexing="ij")
    pos = torch.stack([torch.full_like(rows, tag), rows, cols], dim=-1)
    return pos.reshape(height * width, 3)


def assemble_sequence(config: ModelConfig, text: TokenSequence, reference, image) -> TokenSequence:
    """
    Concatenate Text(content, padding) | Reference | Image into one sequence.

    ``reference`` and ``image`` are LatentImage instances; their grid rows are the tokens.
    """
    if text.layout.text_len != config.text_len or text.n_tokens != config.text_len:
        raise ShapeMismatch("text sequence does not match config.text_len")
    parts = [text.embeddings]
    positions = [text.positions]
    segments = list(text.segments)
    cursor = text.n_tokens
    h, w = config.latent_grid
    for kind, latent in ((SegmentKind.REFERENCE, reference), (SegmentKind.IMAGE, image)):
        if latent is None:
            if kind is SegmentKind.IMAGE:
                raise InvalidRunSpec("an image segment is required")
            continue
        latent.check(config)
        parts.append(latent.grid.reshape(h * w, config.d_model))
        positions.append(grid_positions(SEGMENT_TAGS[kind], h, w))
        segments.append(Segment(kind, cursor, cursor + h * w))
        cursor += h * w
    return TokenSequence(
        embeddings=torch.cat(parts, dim=0),
        segments=tuple(segments),
        positions=torch.cat(positions, dim=0),
    )
