from __future__ import annotations

import math
from typing import Callable, Iterator, Sequence

import torch
import torch.nn as nn

from ..exceptions import ShapeMismatch
from .attention import rope_tables
from .blocks import DoubleStreamBlock, FinalLayer, RMSNorm, SingleStreamBlock, TimestepEmbedder
from .config import ModelConfig
from .rng import derive_seed, make_generator
from .tokens import LayerId, LayerKind, SegmentKind, TokenSequence

# (layer just finished, hidden state) -> hidden state
BoundaryHook = Callable[[LayerId, torch.Tensor], torch.Tensor]

OUTPUT_PROJECTION_SUFFIXES = ("attn_out", "mlp.fc2", "final.linear")


class MMDiT(nn.Module):
    """
    Compact MM-DiT: ``n_double_blocks`` double-stream blocks followed by
    ``n_single_blocks`` single-stream blocks, predicting a flow-matching velocity for
    the Image rows. Computes in float64; parameters are float32-representable.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.time_in = TimestepEmbedder(config.d_model)
        self.double_blocks = nn.ModuleList(DoubleStreamBlock(config) for _ in range(config.n_double_blocks))
        self.single_blocks = nn.ModuleList(SingleStreamBlock(config) for _ in range(config.n_single_blocks))
        self.final = FinalLayer(config)
        self.init_weights()
        self.requires_grad_(False)
        self.eval()

    @torch.no_grad()
    def init_weights(self) -> None:
        """Seeded init from ``config.seed``; the module-default init is fully overwritten."""
        generator = make_generator(self.config.rng, derive_seed(self.config.seed, "weights"))
        depth = self.config.total_blocks
        for name, module in self.named_modules():
            if isinstance(module, RMSNorm):
                module.weight.data = torch.ones(module.weight.shape, dtype=torch.float64)
            elif isinstance(module, nn.Linear):
                std = 1.0 / math.sqrt(module.in_features)
                if name.endswith(("attn_out", "mlp.fc2")):
                    std /= math.sqrt(depth)
                weight = std * torch.randn(module.weight.shape, generator=generator, dtype=torch.float32)
                module.weight.data = weight.to(torch.float64)
                if module.bias is not None:
                    bias = 0.02 * torch.randn(module.bias.shape, generator=generator, dtype=torch.float32)
                    module.bias.data = bias.to(torch.float64)

    # ----------------------------
    # Layer bookkeeping
    # ----------------------------

    def iter_blocks(self) -> Iterator[tuple[LayerId, nn.Module]]:
        for i, block in enumerate(self.double_blocks):
            yield LayerId.double(i), block
        for i, block in enumerate(self.single_blocks):
            yield LayerId.single(i), block

    def block(self, layer: LayerId) -> nn.Module:
        layer.validate(self.config)
        if layer.kind is LayerKind.DOUBLE:
            return self.double_blocks[layer.index]
        if layer.kind is LayerKind.SINGLE:
            return self.single_blocks[layer.index]
        raise ShapeMismatch("the input embedding is not a block")

    def timestep_embedding(self, t: float | torch.Tensor) -> torch.Tensor:
        return self.time_in(torch.as_tensor(t, dtype=torch.float64).reshape(1))[0]

    # ----------------------------
    # Forward
    # ----------------------------

    @torch.no_grad()
    def forward_block(
        self,
        state: TokenSequence,
        layer: LayerId,
        timestep_embedding: torch.Tensor,
        mask: torch.Tensor | None = None,
    ) -> TokenSequence:
        block = self.block(layer)
        cos, sin = rope_tables(state.positions, self.config.rope_axes)
        return state.with_embeddings(block(state.embeddings, timestep_embedding, cos, sin, mask))

    @torch.no_grad()
    def velocity(
        self,
        sequence: TokenSequence,
        t: float | torch.Tensor,
        masks: Sequence[torch.Tensor | None] | None = None,
        hook: BoundaryHook | None = None,
    ) -> torch.Tensor:
        """Velocity for the Image rows, shape [n_image_tokens, d_model]."""
        vec = self.timestep_embedding(t)
        cos, sin = rope_tables(sequence.positions, self.config.rope_axes)
        x = sequence.embeddings
        if hook is not None:
            x = hook(LayerId.input_embedding(), x)
        for ordinal, (layer, block) in enumerate(self.iter_blocks()):
            mask = masks[ordinal] if masks is not None else None
            x = block(x, vec, cos, sin, mask)
            if hook is not None:
                x = hook(layer, x)
        image = sequence.segment(SegmentKind.IMAGE)
        return self.final(x[image.start:image.stop], vec)


@torch.no_grad()
def zero_output_projections(model: MMDiT) -> MMDiT:
    """Zero every residual-writing projection and the velocity head; blocks become identities."""
    for name, module in model.named_modules():
        if name.endswith(OUTPUT_PROJECTION_SUFFIXES):
            module.weight.zero_()
            if module.bias is not None:
                module.bias.zero_()
    return model
