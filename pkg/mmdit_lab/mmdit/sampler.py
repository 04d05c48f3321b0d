from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Protocol, Sequence

import numpy as np
import torch

from ..exceptions import InvalidRunSpec
from ..interventions.trace import ActivationTrace
from .codec import LatentImage, Provenance, decode_image, initial_noise
from .config import ModelConfig
from .model import MMDiT
from .tokens import LayerId, SequenceLayout, assemble_sequence, embed_prompt

logger = logging.getLogger(__name__)


class RunMode(str, Enum):
    T2I = "t2i"
    I2I = "i2i"
    UNCONDITIONAL_T2I = "unconditional_t2i"


class Intervention(Protocol):
    """What the sampler needs from an intervention; see ``mmdit_lab.interventions.specs``."""

    def validate(self, run: "RunSpec", config: ModelConfig) -> None: ...

    def edge_masks(self, layout: SequenceLayout, config: ModelConfig) -> list[torch.Tensor] | None: ...

    def patch(self, layer: LayerId, step: int, hidden: torch.Tensor, layout: SequenceLayout) -> torch.Tensor: ...

    def describe(self) -> dict: ...


@dataclass(frozen=True, eq=False)
class RunSpec:
    mode: RunMode
    prompt: tuple[int, ...] = ()
    reference: LatentImage | None = None
    seed: int = 0
    interventions: tuple[Any, ...] = ()
    capture_layers: frozenset[LayerId] = frozenset()
    # None -> config.n_steps; SameLayerOneStep lens runs use 1
    n_steps: int | None = None
    run_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "mode", RunMode(self.mode))
        object.__setattr__(self, "prompt", tuple(int(t) for t in self.prompt))
        object.__setattr__(self, "interventions", tuple(self.interventions))
        object.__setattr__(self, "capture_layers", frozenset(self.capture_layers))

    def steps(self, config: ModelConfig) -> int:
        return config.n_steps if self.n_steps is None else self.n_steps

    def validate(self, config: ModelConfig) -> None:
        if self.mode is RunMode.I2I and self.reference is None:
            raise InvalidRunSpec("I2I runs need reference latents")
        if self.mode is not RunMode.I2I and self.reference is not None:
            raise InvalidRunSpec(f"{self.mode.value} runs take no reference")
        if self.mode is RunMode.UNCONDITIONAL_T2I and self.prompt:
            raise InvalidRunSpec("unconditional runs have an empty prompt")
        if self.steps(config) < 1:
            raise InvalidRunSpec("n_steps must be >= 1")
        for layer in self.capture_layers:
            layer.validate(config)
        if self.reference is not None:
            self.reference.check(config)

    def replace(self, **changes) -> "RunSpec":
        return dataclasses.replace(self, **changes)

    def describe(self) -> dict:
        """JSON-able description stored next to every recorded run."""
        return {
            "mode": self.mode.value,
            "prompt": list(self.prompt),
            "has_reference": self.reference is not None,
            "seed": self.seed,
            "n_steps": self.n_steps,
            "run_id": self.run_id,
            "capture_layers": sorted(layer.label for layer in self.capture_layers),
            "interventions": [iv.describe() for iv in self.interventions],
        }


@dataclass
class RunResult:
    run: RunSpec
    latents: LatentImage
    pixels: np.ndarray
    trace: ActivationTrace
    noise: LatentImage = field(repr=False)


def _combine_masks(per_intervention: Iterable[list[torch.Tensor] | None], total: int) -> list[torch.Tensor | None] | None:
    combined: list[torch.Tensor | None] | None = None
    for masks in per_intervention:
        if masks is None:
            continue
        if combined is None:
            combined = [None] * total
        for ordinal, mask in enumerate(masks):
            current = combined[ordinal]
            combined[ordinal] = mask if current is None else current & mask
    return combined


def sample(model: MMDiT, run: RunSpec) -> RunResult:
    """
    Euler flow matching from t=1 (noise) to t=0 on a uniform grid.

    Text and reference rows are rebuilt from their step-0 values at the start of every
    step; only the Image rows carry state between steps. At every block boundary the
    interventions patch first, then the capture records the text rows.
    """
    config = model.config
    run.validate(config)
    for intervention in run.interventions:
        intervention.validate(run, config)
    n_steps = run.steps(config)
    h, w = config.latent_grid

    text = embed_prompt(config, run.prompt)
    noise = initial_noise(config, run.seed)
    layout = assemble_sequence(config, text, run.reference, noise).layout
    masks = _combine_masks(
        (iv.edge_masks(layout, config) for iv in run.interventions),
        config.total_blocks,
    )

    captures: dict[tuple[LayerId, int], torch.Tensor] = {}
    timesteps = torch.linspace(1.0, 0.0, n_steps + 1, dtype=torch.float64)
    x = noise.grid.clone()
    for step in range(n_steps):
        sequence = assemble_sequence(config, text, run.reference, LatentImage(x, Provenance.GENERATED))

        def hook(layer: LayerId, hidden: torch.Tensor, step: int = step) -> torch.Tensor:
            for intervention in run.interventions:
                hidden = intervention.patch(layer, step, hidden, layout)
            if layer in run.capture_layers:
                captures[(layer, step)] = hidden[: config.text_len].clone()
            return hidden

        needs_hook = bool(run.interventions or run.capture_layers)
        velocity = model.velocity(sequence, timesteps[step], masks, hook if needs_hook else None)
        dt = timesteps[step + 1] - timesteps[step]
        x = x + dt * velocity.reshape(h, w, config.d_model)

    latents = LatentImage(x, Provenance.GENERATED)
    trace = ActivationTrace(
        entries=captures,
        source_run_id=run.run_id or f"seed-{run.seed}",
        config_fingerprint=config.fingerprint(),
        content_length=len(run.prompt),
        text_len=config.text_len,
        d_model=config.d_model,
    )
    logger.debug(
        "sampled run",
        extra={"run_id": run.run_id, "mode": run.mode.value, "seed": run.seed, "n_steps": n_steps},
    )
    return RunResult(run=run, latents=latents, pixels=decode_image(config, latents), trace=trace, noise=noise)


def sample_many(model: MMDiT, runs: Sequence[RunSpec]) -> list[RunResult]:
    return [sample(model, run) for run in runs]
