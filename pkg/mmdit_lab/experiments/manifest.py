"""
Experiment manifests (TOML)::

    kind = "knockout"                 # lens | lens_subset | knockout | reference_drop |
                                      # cross_patch | cross_patch_subset | layer_sweep
    name = "desk-knockout"
    model_config = "desk.toml"
    task_manifest = "tasks/tasks.csv"
    pair_manifest = "tasks/pairs.csv" # cross_patch kinds only
    families = ["color_transfer", "style_transfer"]
    binding_layer = "double:8"        # 1-based, as printed in reports
    color_binding_layer = "single:10"
    knockout_rows = ["ref->text", "ref->image"]
    cutoff = 9                        # reference_drop; default: just past the binding layer
    lens_seed = 7
    seed = 0                          # mixed into every task seed when non-zero
    limit = 2                         # first N tasks/pairs per family
    output_dir = "out/knockout"

    [judge]
    mode = "stub"                     # stub | endpoint
    max_attempts = 2
    concurrency = 4

    [sweep]                           # layer_sweep only
    op = "t2i_lens"                   # t2i_lens | reference_drop
    task_id = "color-red-chair-s0"
    ordinals = [0, 1, 2, 3]
    marker = 3

Relative paths resolve against the manifest's directory.
"""
from __future__ import annotations

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

from ..conf import lab_settings
from ..exceptions import ConfigError, UnknownLayer
from ..interventions.engine import SweepOp
from ..judging.prompts import KNOCKOUT_VARIANTS
from ..mmdit.config import ModelConfig, load_config
from ..mmdit.tokens import LayerId
from ..taskgen.pairs import PAIRED_FAMILIES
from ..taskgen.tasks import FAMILY_ORDER, FamilyKind


class ExperimentKind(str, Enum):
    LENS = "lens"
    LENS_SUBSET = "lens_subset"
    KNOCKOUT = "knockout"
    REFERENCE_DROP = "reference_drop"
    CROSS_PATCH = "cross_patch"
    CROSS_PATCH_SUBSET = "cross_patch_subset"
    LAYER_SWEEP = "layer_sweep"

    @property
    def uses_pairs(self) -> bool:
        return self in (ExperimentKind.CROSS_PATCH, ExperimentKind.CROSS_PATCH_SUBSET)


JUDGE_MODES = ("stub", "endpoint")

_KEYS = {
    "kind", "name", "model_config", "task_manifest", "pair_manifest", "families", "binding_layer",
    "color_binding_layer", "knockout_rows", "cutoff", "lens_seed", "seed", "limit", "output_dir",
    "judge", "sweep",
}


@dataclass(frozen=True)
class JudgeSettings:
    mode: str = "stub"
    max_attempts: int = 2
    concurrency: int = 4


@dataclass(frozen=True)
class SweepSettings:
    op: SweepOp = SweepOp.T2I_LENS
    task_id: str = ""
    ordinals: tuple[int, ...] = ()
    marker: int | None = None


@dataclass(frozen=True)
class ExperimentManifest:
    kind: ExperimentKind
    name: str
    path: Path
    model_config: Path
    task_manifest: Path
    output_dir: Path
    pair_manifest: Path | None = None
    families: tuple[FamilyKind, ...] = FAMILY_ORDER
    binding_layer: LayerId = field(default_factory=lambda: LayerId.double(7))
    color_binding_layer: LayerId = field(default_factory=lambda: LayerId.single(9))
    knockout_rows: tuple[str, ...] = KNOCKOUT_VARIANTS
    cutoff: int | None = None
    lens_seed: int | None = None
    seed: int = 0
    limit: int | None = None
    judge: JudgeSettings = field(default_factory=JudgeSettings)
    sweep: SweepSettings | None = None

    def layer_for(self, family: FamilyKind) -> LayerId:
        return self.color_binding_layer if family is FamilyKind.COLOR_TRANSFER else self.binding_layer

    def drop_cutoff(self, config: ModelConfig) -> int:
        return self.binding_layer.ordinal(config) + 1 if self.cutoff is None else self.cutoff

    def with_overrides(self, **changes) -> "ExperimentManifest":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def model(self) -> ModelConfig:
        return load_config(self.model_config)

    def check(self, config: ModelConfig) -> None:
        """Paths exist and layers fit the configured depth; raises ConfigError otherwise."""
        required = [("model_config", self.model_config), ("task_manifest", self.task_manifest)]
        if self.kind.uses_pairs:
            if self.pair_manifest is None:
                raise ConfigError(f"{self.kind.value} needs a pair_manifest")
            required.append(("pair_manifest", self.pair_manifest))
        for key, path in required:
            if not path.exists():
                raise ConfigError(f"{key} not found: {path}")
        layers = {self.binding_layer}
        if FamilyKind.COLOR_TRANSFER in self.families:
            layers.add(self.color_binding_layer)
        for layer in layers:
            try:
                layer.validate(config)
            except UnknownLayer as exc:
                raise ConfigError(f"binding layer invalid for this model: {exc}") from exc
        if self.kind in (ExperimentKind.KNOCKOUT, ExperimentKind.REFERENCE_DROP) or self.kind.uses_pairs:
            unsupported = [f.value for f in self.families if f not in PAIRED_FAMILIES]
            if unsupported:
                raise ConfigError(f"{self.kind.value} is judged only for {[f.value for f in PAIRED_FAMILIES]}; "
                                  f"drop {unsupported}")
        if self.kind is ExperimentKind.REFERENCE_DROP and not 0 <= self.drop_cutoff(config) <= config.total_blocks:
            raise ConfigError(f"cutoff {self.drop_cutoff(config)} outside [0, {config.total_blocks}]")
        if self.kind is ExperimentKind.LAYER_SWEEP:
            if self.sweep is None or not self.sweep.task_id:
                raise ConfigError("layer_sweep needs a [sweep] table with task_id")
            limit = config.total_blocks + (1 if self.sweep.op is SweepOp.REFERENCE_DROP else 0)
            bad = [k for k in self.sweep.ordinals if not 0 <= k < limit]
            if bad:
                raise ConfigError(f"sweep ordinals {bad} outside [0, {limit})")


def _layer(value: str, key: str) -> LayerId:
    try:
        return LayerId.parse(value)
    except UnknownLayer as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def manifest_from_mapping(data: Mapping[str, Any], base_dir: Path, path: Path | None = None) -> ExperimentManifest:
    unknown = set(data) - _KEYS
    if unknown:
        raise ConfigError(f"unknown manifest keys: {sorted(unknown)}")
    try:
        kind = ExperimentKind(data["kind"])
        families = tuple(FamilyKind(f) for f in data.get("families", [f.value for f in FAMILY_ORDER]))
    except KeyError as exc:
        raise ConfigError(f"manifest is missing {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    def resolve(key: str, required: bool = True) -> Path | None:
        value = data.get(key)
        if value is None:
            if required:
                raise ConfigError(f"manifest is missing {key!r}")
            return None
        return (base_dir / value).resolve()

    rows = tuple(data.get("knockout_rows", KNOCKOUT_VARIANTS))
    bad_rows = [r for r in rows if r not in KNOCKOUT_VARIANTS]
    if bad_rows:
        raise ConfigError(f"unknown knockout rows {bad_rows}; expected {list(KNOCKOUT_VARIANTS)}")

    judge_table = dict(data.get("judge", {}))
    judge = JudgeSettings(
        mode=judge_table.get("mode", "stub"),
        max_attempts=int(judge_table.get("max_attempts", lab_settings.JUDGE_MAX_ATTEMPTS)),
        concurrency=int(judge_table.get("concurrency", lab_settings.JUDGE_CONCURRENCY)),
    )
    if judge.mode not in JUDGE_MODES:
        raise ConfigError(f"judge mode must be one of {JUDGE_MODES}")

    sweep = None
    if "sweep" in data:
        table = data["sweep"]
        try:
            sweep = SweepSettings(
                op=SweepOp(table.get("op", SweepOp.T2I_LENS.value)),
                task_id=table.get("task_id", ""),
                ordinals=tuple(int(k) for k in table.get("ordinals", ())),
                marker=table.get("marker"),
            )
        except ValueError as exc:
            raise ConfigError(f"[sweep]: {exc}") from exc

    return ExperimentManifest(
        kind=kind,
        name=data.get("name") or (path.stem if path else kind.value),
        path=path or base_dir,
        model_config=resolve("model_config"),
        task_manifest=resolve("task_manifest"),
        pair_manifest=resolve("pair_manifest", required=False),
        output_dir=resolve("output_dir", required=False) or (base_dir / "out" / kind.value).resolve(),
        families=families,
        binding_layer=_layer(data.get("binding_layer", "double:8"), "binding_layer"),
        color_binding_layer=_layer(data.get("color_binding_layer", "single:10"), "color_binding_layer"),
        knockout_rows=rows,
        cutoff=data.get("cutoff"),
        lens_seed=data.get("lens_seed"),
        seed=int(data.get("seed", 0)),
        limit=data.get("limit"),
        judge=judge,
        sweep=sweep,
    )


def load_manifest(path: Path | str) -> ExperimentManifest:
    path = Path(path).resolve()
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"manifest not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return manifest_from_mapping(data, path.parent, path)
