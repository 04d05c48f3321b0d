"""
Intervention specs consumed by ``mmdit_lab.mmdit.sampler.sample``.

Each spec answers three questions for the sampler: is it legal for this run
(``validate``), which attention edges does it block (``edge_masks``), and how does
it rewrite the residual stream at a block boundary (``patch``).
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import torch

from ..exceptions import ConfigMismatch, FingerprintMismatch, InvalidRunSpec, MissingTraceEntry, SegmentAbsent
from ..mmdit.config import ModelConfig
from ..mmdit.tokens import LayerId, SequenceLayout
from .masks import REF_TO_IMAGE, REFERENCE_EDGES, EdgeMaskSpec, TokenSubset, compile_masks
from .trace import ActivationTrace


def _overwrite_rows(hidden: torch.Tensor, source: torch.Tensor, rows: range) -> torch.Tensor:
    if not len(rows):
        return hidden
    patched = hidden.clone()
    patched[rows.start:rows.stop] = source[rows.start:rows.stop]
    return patched


def _require_reference(run, what: str) -> None:
    if run.reference is None:
        raise SegmentAbsent(f"{what} needs a reference segment (mode=i2i)")


# ----------------------------
# Attention knockout
# ----------------------------

@dataclass(frozen=True)
class Knockout:
    spec: EdgeMaskSpec

    def validate(self, run, config: ModelConfig) -> None:
        self.spec.interval(config)
        if self.spec.touches_reference:
            _require_reference(run, "a reference knockout")

    def edge_masks(self, layout: SequenceLayout, config: ModelConfig) -> list[torch.Tensor]:
        return compile_masks(self.spec, layout, config)

    def patch(self, layer: LayerId, step: int, hidden: torch.Tensor, layout: SequenceLayout) -> torch.Tensor:
        return hidden

    def describe(self) -> dict:
        return {"kind": "knockout", **self.spec.describe()}


@dataclass(frozen=True)
class ReferenceDrop:
    """ref->image blocked before ``cutoff``; every edge touching the reference from ``cutoff`` on."""

    cutoff: int

    def mask_specs(self, config: ModelConfig) -> list[EdgeMaskSpec]:
        if not 0 <= self.cutoff <= config.total_blocks:
            raise InvalidRunSpec(f"cutoff {self.cutoff} outside [0, {config.total_blocks}]")
        specs = []
        if self.cutoff > 0:
            specs.append(EdgeMaskSpec(frozenset({REF_TO_IMAGE}), 0, self.cutoff))
        if self.cutoff < config.total_blocks:
            specs.append(EdgeMaskSpec(REFERENCE_EDGES, self.cutoff, config.total_blocks))
        return specs

    def validate(self, run, config: ModelConfig) -> None:
        _require_reference(run, "reference drop")
        self.mask_specs(config)

    def edge_masks(self, layout: SequenceLayout, config: ModelConfig) -> list[torch.Tensor]:
        compiled = [compile_masks(spec, layout, config) for spec in self.mask_specs(config)]
        return [torch.stack(per_layer).all(dim=0) for per_layer in zip(*compiled)]

    def patch(self, layer: LayerId, step: int, hidden: torch.Tensor, layout: SequenceLayout) -> torch.Tensor:
        return hidden

    def describe(self) -> dict:
        return {"kind": "reference_drop", "cutoff": self.cutoff}


# ----------------------------
# Activation patching
# ----------------------------

class LensVariant(str, Enum):
    # source-layer activations written onto the raw text embeddings at every step
    INPUT_FOUR_STEP = "input_four_step"
    # one denoising step, written at the output of the source layer itself
    SAME_LAYER_ONE_STEP = "same_layer_one_step"


@dataclass(frozen=True, eq=False)
class LensPatch:
    trace: ActivationTrace
    source_layer: LayerId
    variant: LensVariant = LensVariant.INPUT_FOUR_STEP
    subset: TokenSubset = TokenSubset.ALL_TEXT

    @property
    def target_layer(self) -> LayerId:
        if self.variant is LensVariant.SAME_LAYER_ONE_STEP:
            return self.source_layer
        return LayerId.input_embedding()

    def validate(self, run, config: ModelConfig) -> None:
        self.trace.check_fingerprint(config)
        self.source_layer.validate(config)
        self.trace.get(self.source_layer, 0)
        if self.variant is LensVariant.SAME_LAYER_ONE_STEP and run.steps(config) != 1:
            raise InvalidRunSpec("same-layer lens runs take exactly one denoising step")

    def edge_masks(self, layout: SequenceLayout, config: ModelConfig) -> None:
        return None

    def patch(self, layer: LayerId, step: int, hidden: torch.Tensor, layout: SequenceLayout) -> torch.Tensor:
        if layer != self.target_layer:
            return hidden
        rows = self.subset.indices(self.trace.content_length, layout.text_len)
        return _overwrite_rows(hidden, self.trace.get(self.source_layer, 0), rows)

    def describe(self) -> dict:
        return {
            "kind": "lens",
            "source_run_id": self.trace.source_run_id,
            "source_layer": self.source_layer.label,
            "variant": self.variant.value,
            "subset": self.subset.value,
        }


@dataclass(frozen=True, eq=False)
class CrossPatch:
    """Step-matched overwrite of the text rows at ``layer``'s output with a source run's trace."""

    trace: ActivationTrace
    layer: LayerId
    subset: TokenSubset = TokenSubset.ALL_TEXT

    def validate(self, run, config: ModelConfig) -> None:
        try:
            self.trace.check_fingerprint(config)
        except FingerprintMismatch as exc:
            raise ConfigMismatch(str(exc)) from exc
        self.layer.validate(config)
        steps = self.trace.steps(self.layer)
        if not steps:
            raise MissingTraceEntry(f"trace {self.trace.source_run_id!r} has nothing at {self.layer}")
        if steps != list(range(run.steps(config))):
            raise ConfigMismatch(f"source trace covers steps {steps}, target runs {run.steps(config)} steps")

    def edge_masks(self, layout: SequenceLayout, config: ModelConfig) -> None:
        return None

    def patch(self, layer: LayerId, step: int, hidden: torch.Tensor, layout: SequenceLayout) -> torch.Tensor:
        if layer != self.layer:
            return hidden
        # the source's content length decides the split; the protocol keeps prompts equal
        rows = self.subset.indices(self.trace.content_length, layout.text_len)
        return _overwrite_rows(hidden, self.trace.get(self.layer, step), rows)

    def describe(self) -> dict:
        return {
            "kind": "cross_patch",
            "source_run_id": self.trace.source_run_id,
            "layer": self.layer.label,
            "subset": self.subset.value,
        }
