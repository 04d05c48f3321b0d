from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from ..exceptions import ConfigMismatch, InvalidRunSpec, ProtocolWarning
from ..mmdit.model import MMDiT
from ..mmdit.rng import derive_seed
from ..mmdit.sampler import RunMode, RunResult, RunSpec, sample
from ..mmdit.tokens import LayerId
from .masks import REFERENCE_EDGES, Edge, EdgeMaskSpec, TokenSubset, parse_edge
from .specs import CrossPatch, Knockout, LensPatch, LensVariant, ReferenceDrop
from .trace import ActivationTrace

logger = logging.getLogger(__name__)


# ----------------------------
# Capture
# ----------------------------

def capture(model: MMDiT, run: RunSpec, layers: Iterable[LayerId]) -> ActivationTrace:
    """Text rows after each named block, at every denoising step."""
    layers = frozenset(layers)
    for layer in layers:
        layer.validate(model.config)
    return sample(model, run.replace(capture_layers=run.capture_layers | layers)).trace.restricted(layers)


# ----------------------------
# T2I lens
# ----------------------------

def lens_run(trace: ActivationTrace, source_layer: LayerId, variant: LensVariant, seed: int,
             subset: TokenSubset = TokenSubset.ALL_TEXT, run_id: str = "") -> RunSpec:
    variant = LensVariant(variant)
    return RunSpec(
        mode=RunMode.UNCONDITIONAL_T2I,
        seed=seed,
        interventions=(LensPatch(trace, source_layer, variant, TokenSubset(subset)),),
        n_steps=1 if variant is LensVariant.SAME_LAYER_ONE_STEP else None,
        run_id=run_id,
    )


def t2i_lens(model: MMDiT, trace: ActivationTrace, source_layer: LayerId, variant: LensVariant,
             seed: int, subset: TokenSubset = TokenSubset.ALL_TEXT) -> RunResult:
    """
    Decode captured text activations through an empty-prompt, reference-free run.

    ``seed`` is the lens run's own noise seed; pass a fresh one rather than the
    source run's seed.
    """
    trace.check_fingerprint(model.config)
    return sample(model, lens_run(trace, source_layer, variant, seed, subset, run_id=f"lens-{trace.source_run_id}"))


def unconditional_control(model: MMDiT, seed: int, n_steps: int | None = None) -> RunResult:
    """Plain empty-prompt T2I run; the lens outputs are read against it."""
    return sample(model, RunSpec(mode=RunMode.UNCONDITIONAL_T2I, seed=seed, n_steps=n_steps))


# ----------------------------
# Knockout / reference drop
# ----------------------------

def knockout(model: MMDiT, run: RunSpec, edges: Iterable[Edge], start: int = 0, stop: int | None = None,
             subset: TokenSubset = TokenSubset.ALL_TEXT) -> RunResult:
    spec = EdgeMaskSpec(frozenset(edges), start, stop, TokenSubset(subset))
    return sample(model, run.replace(interventions=run.interventions + (Knockout(spec),)))


def full_isolation(model: MMDiT, run: RunSpec) -> RunResult:
    return knockout(model, run, REFERENCE_EDGES)


def reference_drop(model: MMDiT, run: RunSpec, cutoff: int) -> RunResult:
    if run.mode is not RunMode.I2I:
        raise InvalidRunSpec("reference drop needs an i2i run")
    return sample(model, run.replace(interventions=run.interventions + (ReferenceDrop(cutoff),)))


def without_reference(run: RunSpec) -> RunSpec:
    """Same seed and prompt with the reference segment removed (a plain T2I run)."""
    return run.replace(mode=RunMode.T2I, reference=None)


# ----------------------------
# I2I-to-I2I patching
# ----------------------------

def check_pair_protocol(source: RunSpec, target: RunSpec) -> None:
    if source.prompt != target.prompt:
        message = "source and target prompts differ"
        logger.warning(message, extra={"source": source.run_id, "target": target.run_id})
        warnings.warn(message, ProtocolWarning, stacklevel=3)
    if source.seed == target.seed:
        message = "source and target share a noise seed"
        logger.warning(message, extra={"source": source.run_id, "target": target.run_id})
        warnings.warn(message, ProtocolWarning, stacklevel=3)


def cross_patch(model: MMDiT, source: RunSpec, target: RunSpec, layer: LayerId,
                subset: TokenSubset = TokenSubset.ALL_TEXT, *, source_model: MMDiT | None = None,
                source_trace: ActivationTrace | None = None) -> RunResult:
    """
    Run ``source`` with a capture at ``layer``, then rerun ``target`` with its text rows
    (restricted to ``subset``) overwritten at ``layer``'s output, step i from step i.
    """
    source_model = source_model or model
    if source_model.config.fingerprint() != model.config.fingerprint():
        raise ConfigMismatch("source and target runs must share one model config")
    for run in (source, target):
        if run.mode is not RunMode.I2I:
            raise InvalidRunSpec("cross patching takes two i2i runs")
    if source.steps(source_model.config) != target.steps(model.config):
        raise ConfigMismatch("source and target use different step counts")
    check_pair_protocol(source, target)
    if source_trace is None:
        source_trace = capture(source_model, source, {layer})
    patch = CrossPatch(source_trace, layer, TokenSubset(subset))
    return sample(model, target.replace(interventions=target.interventions + (patch,)))


# ----------------------------
# Layer sweeps
# ----------------------------

class SweepOp(str, Enum):
    T2I_LENS = "t2i_lens"
    REFERENCE_DROP = "reference_drop"


@dataclass
class GridEntry:
    ordinal: int
    label: str
    image: str | None = None


@dataclass
class GridManifest:
    """Ordinal -> image mapping of a sweep, written next to the images as JSON."""

    op: str
    entries: list[GridEntry] = field(default_factory=list)
    marker: int | None = None
    caption: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "GridManifest":
        data = json.loads(text)
        data["entries"] = [GridEntry(**entry) for entry in data.get("entries", [])]
        return cls(**data)

    def save(self, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: Path | str) -> "GridManifest":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass
class SweepResult:
    results: list[RunResult]
    manifest: GridManifest


def sweep_label(model: MMDiT, op: SweepOp, ordinal: int) -> str:
    if op is SweepOp.REFERENCE_DROP:
        return f"cutoff {ordinal}"
    return str(LayerId.from_ordinal(model.config, ordinal))


def layer_sweep(model: MMDiT, base: RunSpec, op: SweepOp, ordinals: Sequence[int], *,
                lens_seed: int | None = None, variant: LensVariant = LensVariant.INPUT_FOUR_STEP,
                marker: int | None = None) -> SweepResult:
    """
    One result per ordinal. ``t2i_lens`` ordinals are block ordinals of the base run's
    capture; ``reference_drop`` ordinals are cutoffs in ``[0, total_blocks]``.
    """
    op = SweepOp(op)
    ordinals = list(ordinals)
    results: list[RunResult] = []
    if op is SweepOp.T2I_LENS:
        layers = {LayerId.from_ordinal(model.config, k) for k in ordinals}
        trace = capture(model, base, layers)
        seed = derive_seed(base.seed, "lens") if lens_seed is None else lens_seed
        for k in ordinals:
            results.append(t2i_lens(model, trace, LayerId.from_ordinal(model.config, k), variant, seed))
    else:
        for k in ordinals:
            results.append(reference_drop(model, base, k))
    manifest = GridManifest(
        op=op.value,
        entries=[GridEntry(ordinal=k, label=sweep_label(model, op, k)) for k in ordinals],
        marker=marker,
        caption=f"{op.value} sweep over {len(ordinals)} ordinals, base seed {base.seed}",
    )
    logger.info("layer sweep finished", extra={"op": op.value, "n": len(ordinals)})
    return SweepResult(results=results, manifest=manifest)


def knockout_edges(row: str) -> tuple[frozenset[Edge], TokenSubset]:
    """Report row label (``ref->text[padding]`` etc.) -> blocked edges and text subset."""
    base, _, bracket = row.partition("[")
    subset = {
        "": TokenSubset.ALL_TEXT,
        "padding]": TokenSubset.PADDING_ONLY,
        "content]": TokenSubset.CONTENT_ONLY,
    }.get(bracket)
    if subset is None:
        raise InvalidRunSpec(f"unknown knockout row {row!r}")
    return frozenset({parse_edge(base)}), subset

