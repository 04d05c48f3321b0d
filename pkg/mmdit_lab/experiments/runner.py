"""
End-to-end experiment execution: runs, judging and the report.

Layout of an output directory::

    index.json                     completed work items, their images and judge jobs
    tasks/<item_id>/<role>.png     one PNG per generated image (role[-variant])
    tasks/<item_id>/<role>.trce    captured binding-layer activations (plus a .trce.json sidecar)
    verdicts.jsonl                 append-only verdict log
    report/report.{csv,txt}        rendered from the verdict log
    report/counts.json
    lab.log.jsonl                  attached by the management command

Work items are tasks (pairs for the cross-patch kinds). An item already present in
``index.json`` with all of its images on disk is skipped, so a rerun only fills gaps.
"""
from __future__ import annotations

import json
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

import numpy as np
from PIL import Image
from tqdm import tqdm

from ..conf import lab_settings
from ..exceptions import ConfigError, LabError
from ..interventions.engine import (
    cross_patch,
    knockout,
    knockout_edges,
    reference_drop,
    t2i_lens,
    unconditional_control,
    without_reference,
)
from ..interventions.masks import TokenSubset
from ..interventions.specs import LensVariant
from ..interventions.trace import save_trace
from ..judging.prompts import JudgeExperiment
from ..judging.report import LENS_ROW, SUBSET_ROWS, Report
from ..judging.stub import StubJudge
from ..judging.verdicts import (
    Cell,
    EndpointJudge,
    JudgeBackend,
    JudgeBatch,
    JudgeJob,
    RetryPolicy,
    build_request,
    judge_many,
    read_verdict_log,
)
from ..mmdit.codec import LatentImage, encode_image
from ..mmdit.model import MMDiT
from ..mmdit.rng import derive_seed
from ..mmdit.sampler import RunMode, RunResult, RunSpec, sample
from ..mmdit.tokens import tokenize
from ..mmdit.weights import load_model
from ..taskgen.fixtures import load_png, save_png
from ..taskgen.manifests import read_pair_manifest, read_task_manifest, reference_file
from ..taskgen.tasks import EditTask, FamilyKind, PatchPair
from .manifest import ExperimentKind, ExperimentManifest

logger = logging.getLogger(__name__)

INDEX_NAME = "index.json"
VERDICT_LOG = "verdicts.jsonl"
REPORT_DIR = "report"

SUBSETS = (TokenSubset.ALL_TEXT, TokenSubset.PADDING_ONLY, TokenSubset.CONTENT_ONLY)
SUBSET_ROW = dict(zip(SUBSETS, SUBSET_ROWS))


def _slug(text: str) -> str:
    return re.sub(r"[^a-z0-9_-]+", "_", text.lower()).strip("_")


# ----------------------------
# Per-item bookkeeping
# ----------------------------

@dataclass
class ItemOutput:
    item_id: str
    family: FamilyKind
    arm: str = ""
    images: dict[str, str] = field(default_factory=dict)
    runs: list[dict[str, Any]] = field(default_factory=list)
    judges: list[dict[str, Any]] = field(default_factory=list)

    def to_index(self) -> dict[str, Any]:
        # wall time stays out of the index so reruns reproduce it byte for byte
        runs = [{k: v for k, v in run.items() if k != "wall_seconds"} for run in self.runs]
        return {
            "family": self.family.value,
            "arm": self.arm,
            "images": dict(sorted(self.images.items())),
            "runs": runs,
            "judges": self.judges,
        }


class _ItemWriter:
    def __init__(self, out_dir: Path, item: ItemOutput):
        self.out_dir = out_dir
        self.item = item
        self.dir = out_dir / "tasks" / _slug(item.item_id)

    def rel(self, path: Path) -> str:
        return path.relative_to(self.out_dir).as_posix()

    def image(self, key: str, pixels: np.ndarray) -> str:
        path = save_png(pixels, self.dir / f"{key}.png")
        self.item.images[key] = self.rel(path)
        return self.item.images[key]

    def run(self, role: str, variant: str, compute: Callable[[], RunResult], trace_layers=None) -> RunResult:
        started = time.perf_counter()
        result = compute()
        elapsed = time.perf_counter() - started
        key = role if not variant else f"{role}-{_slug(variant)}"
        image = self.image(key, result.pixels)
        trace_path = ""
        if trace_layers:
            trace_path = self.rel(save_trace(result.trace.restricted(trace_layers), self.dir / f"{key}.trce"))
        self.item.runs.append({
            "role": role,
            "variant": variant,
            "image": image,
            "trace": trace_path,
            "run_spec": result.run.describe(),
            "wall_seconds": elapsed,
        })
        return result

    def judge(self, experiment: JudgeExperiment, variant: str, cell: Cell, images: list[str]) -> None:
        self.item.judges.append({
            "experiment": experiment.value,
            "family": self.item.family.value,
            "variant": variant,
            "cell": replace(cell, arm=self.item.arm).to_dict(),
            "images": images,
        })


# ----------------------------
# Context
# ----------------------------

@dataclass
class RunContext:
    manifest: ExperimentManifest
    model: MMDiT
    out_dir: Path

    @property
    def config(self):
        return self.model.config

    def seed(self, task: EditTask) -> int:
        return task.seed if not self.manifest.seed else derive_seed(task.seed, self.manifest.seed)

    def reference_pixels(self, task: EditTask) -> np.ndarray:
        path = self.manifest.task_manifest.parent / reference_file(task.reference)
        try:
            pixels = load_png(path)
        except FileNotFoundError as exc:
            raise ConfigError(f"reference image missing: {path}") from exc
        h, w, _ = self.config.pixel_shape
        if pixels.shape[:2] != (h, w):
            logger.warning("resizing reference", extra={"path": str(path), "size": list(pixels.shape[:2])})
            pixels = np.asarray(Image.fromarray(pixels).resize((w, h), Image.Resampling.BILINEAR), dtype=np.uint8)
        return pixels

    def base_run(self, task: EditTask, reference: LatentImage, layers=frozenset()) -> RunSpec:
        return RunSpec(
            mode=RunMode.I2I,
            prompt=tokenize(self.config, task.instruction),
            reference=reference,
            seed=self.seed(task),
            capture_layers=frozenset(layers),
            run_id=task.task_id,
        )


def lens_variant_for(family: FamilyKind) -> LensVariant:
    return LensVariant.SAME_LAYER_ONE_STEP if family is FamilyKind.COLOR_TRANSFER else LensVariant.INPUT_FOUR_STEP


# ----------------------------
# Item runners
# ----------------------------

def _run_task(ctx: RunContext, task: EditTask) -> ItemOutput:
    kind = ctx.manifest.kind
    item = ItemOutput(task.task_id, task.family, task.arm.value if task.arm else "")
    writer = _ItemWriter(ctx.out_dir, item)
    pixels = ctx.reference_pixels(task)
    reference_image = writer.image("reference", pixels)
    reference = encode_image(ctx.config, pixels)
    layer = ctx.manifest.layer_for(task.family)
    model = ctx.model

    if kind in (ExperimentKind.LENS, ExperimentKind.LENS_SUBSET):
        base = ctx.base_run(task, reference, {layer})
        baseline = writer.run("i2i_baseline", "", lambda: sample(model, base), trace_layers={layer})
        trace = baseline.trace.restricted({layer})
        t2i = writer.run("t2i_baseline", "", lambda: sample(model, without_reference(base).replace(capture_layers=frozenset())))
        variant = lens_variant_for(task.family)
        lens_seed = ctx.manifest.lens_seed if ctx.manifest.lens_seed is not None else derive_seed(base.seed, "lens")
        one_step = 1 if variant is LensVariant.SAME_LAYER_ONE_STEP else None
        writer.run("control", "", lambda: unconditional_control(model, lens_seed, one_step))
        subsets = (TokenSubset.ALL_TEXT,) if kind is ExperimentKind.LENS else SUBSETS
        for subset in subsets:
            label = "" if kind is ExperimentKind.LENS else subset.value
            writer.run("lens_output", label, lambda s=subset: t2i_lens(model, trace, layer, variant, lens_seed, s))
            cell = (Cell("lens", LENS_ROW, task.family.value) if kind is ExperimentKind.LENS
                    else Cell("lens_subset", SUBSET_ROW[subset], task.family.value))
            writer.judge(JudgeExperiment.T2I_LENS, "", cell,
                         [reference_image, item.images["t2i_baseline"], item.runs[-1]["image"]])
        return item

    base = ctx.base_run(task, reference)
    writer.run("i2i_baseline", "", lambda: sample(model, base))
    if kind is ExperimentKind.KNOCKOUT:
        for row in ctx.manifest.knockout_rows:
            edges, subset = knockout_edges(row)
            writer.run("knockout_output", row, lambda e=edges, s=subset: knockout(model, base, e, subset=s))
            writer.judge(JudgeExperiment.KNOCKOUT, row, Cell("knockout", row, task.family.value),
                         [reference_image, item.images["i2i_baseline"], item.runs[-1]["image"]])
    elif kind is ExperimentKind.REFERENCE_DROP:
        cutoff = ctx.manifest.drop_cutoff(ctx.config)
        writer.run("drop_output", f"cutoff {cutoff}", lambda: reference_drop(model, base, cutoff))
        writer.judge(JudgeExperiment.REFERENCE_DROP, "", Cell("reference_drop", f"cutoff {cutoff}", task.family.value),
                     [reference_image, item.images["i2i_baseline"], item.runs[-1]["image"]])
    else:
        raise ConfigError(f"{kind.value} does not run per task")
    return item


def _run_pair(ctx: RunContext, pair: PatchPair) -> ItemOutput:
    kind = ctx.manifest.kind
    item = ItemOutput(pair.pair_id, pair.family, pair.source.arm.value if pair.source.arm else "")
    writer = _ItemWriter(ctx.out_dir, item)
    model = ctx.model
    layer = ctx.manifest.layer_for(pair.family)

    source_pixels, target_pixels = ctx.reference_pixels(pair.source), ctx.reference_pixels(pair.target)
    source_image = writer.image("source_reference", source_pixels)
    target_image = writer.image("target_reference", target_pixels)
    source = ctx.base_run(pair.source, encode_image(ctx.config, source_pixels), {layer})
    target = ctx.base_run(pair.target, encode_image(ctx.config, target_pixels))

    source_result = writer.run("i2i_baseline", "source", lambda: sample(model, source), trace_layers={layer})
    trace = source_result.trace.restricted({layer})
    writer.run("i2i_baseline", "target", lambda: sample(model, target))
    target_image_path = item.runs[-1]["image"]

    subsets = (TokenSubset.ALL_TEXT,) if kind is ExperimentKind.CROSS_PATCH else SUBSETS
    for subset in subsets:
        writer.run("patched_target", subset.value,
                   lambda s=subset: cross_patch(model, source, target, layer, s, source_trace=trace))
        writer.judge(JudgeExperiment.I2I_PATCH, "", Cell("cross_patch", SUBSET_ROW[subset], pair.family.value),
                     [source_image, target_image, target_image_path, item.runs[-1]["image"]])
    return item


# ----------------------------
# Index
# ----------------------------

def load_index(out_dir: Path) -> dict[str, Any]:
    path = Path(out_dir) / INDEX_NAME
    if not path.exists():
        return {"items": {}, "failures": {}}
    return json.loads(path.read_text(encoding="utf-8"))


def save_index(out_dir: Path, index: dict[str, Any]) -> Path:
    path = Path(out_dir) / INDEX_NAME
    index = dict(index)
    index["items"] = dict(sorted(index.get("items", {}).items()))
    index["failures"] = dict(sorted(index.get("failures", {}).items()))
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(index, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    tmp.replace(path)
    return path


def _complete(out_dir: Path, entry: dict[str, Any]) -> bool:
    return all((out_dir / rel).exists() for rel in entry.get("images", {}).values())


# ----------------------------
# Work selection
# ----------------------------

def _limited(items, family_of, families, limit):
    kept, seen = [], {}
    for item in items:
        family = family_of(item)
        if family not in families:
            continue
        seen[family] = seen.get(family, 0) + 1
        if limit is None or seen[family] <= limit:
            kept.append(item)
    return kept


def work_items(manifest: ExperimentManifest) -> list[tuple[str, Callable[[RunContext], ItemOutput]]]:
    tasks = read_task_manifest(manifest.task_manifest)
    if manifest.kind.uses_pairs:
        pairs = read_pair_manifest(manifest.pair_manifest, tasks)
        pairs = _limited(pairs, lambda p: p.family, manifest.families, manifest.limit)
        return [(p.pair_id, lambda ctx, p=p: _run_pair(ctx, p)) for p in pairs]
    tasks = _limited(tasks, lambda t: t.family, manifest.families, manifest.limit)
    return [(t.task_id, lambda ctx, t=t: _run_task(ctx, t)) for t in tasks]


# ----------------------------
# Stages
# ----------------------------

@dataclass
class RunOutcome:
    out_dir: Path
    ran: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    failed: dict[str, str] = field(default_factory=dict)
    records: dict[str, ItemOutput] = field(default_factory=dict)


def execute_runs(manifest: ExperimentManifest, *, model: MMDiT | None = None, workers: int | None = None,
                 progress: bool = False, on_item: Callable[[ItemOutput], None] | None = None) -> RunOutcome:
    """
    Generate every image the manifest asks for. ``on_item`` is called from the
    calling thread for each finished item (the management command upserts
    RunRecords there).
    """
    model = model or load_model(manifest.model_config)
    manifest.check(model.config)
    if manifest.kind is ExperimentKind.LAYER_SWEEP:
        raise ConfigError("layer_sweep manifests run through run_sweep")
    out_dir = Path(manifest.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    index = load_index(out_dir)
    index.update({
        "experiment": manifest.name,
        "kind": manifest.kind.value,
        "config_fingerprint": model.config.fingerprint().hex(),
    })
    items = index.setdefault("items", {})
    failures = index.setdefault("failures", {})
    outcome = RunOutcome(out_dir)
    ctx = RunContext(manifest, model, out_dir)

    pending = []
    for item_id, runner in work_items(manifest):
        if item_id in items and _complete(out_dir, items[item_id]):
            outcome.skipped.append(item_id)
        else:
            pending.append((item_id, runner))

    n_workers = max(1, int(workers or lab_settings.WORKERS))
    with ThreadPoolExecutor(max_workers=n_workers) as executor:
        futures = {executor.submit(runner, ctx): item_id for item_id, runner in pending}
        for future in tqdm(as_completed(futures), total=len(futures), disable=not progress, desc=manifest.kind.value):
            item_id = futures[future]
            try:
                output = future.result()
            except LabError as exc:
                failures[item_id] = f"{type(exc).__name__}: {exc}"
                outcome.failed[item_id] = failures[item_id]
                logger.error("work item failed", extra={"item": item_id, "error": str(exc)})
                continue
            items[item_id] = output.to_index()
            failures.pop(item_id, None)
            outcome.ran.append(item_id)
            outcome.records[item_id] = output
            if on_item is not None:
                on_item(output)
            save_index(out_dir, index)
    save_index(out_dir, index)
    logger.info(
        "runs finished",
        extra={"ran": len(outcome.ran), "skipped": len(outcome.skipped), "failed": len(outcome.failed)},
    )
    return outcome


def judge_backend(mode: str) -> JudgeBackend:
    if mode == "stub":
        return StubJudge()
    if mode == "endpoint":
        return EndpointJudge.from_settings()
    raise ConfigError(f"unknown judge mode {mode!r}")


def judge_jobs(out_dir: Path | str) -> list[JudgeJob]:
    out_dir = Path(out_dir)
    jobs = []
    for item_id, entry in sorted(load_index(out_dir).get("items", {}).items()):
        for spec in entry.get("judges", []):
            images = [(out_dir / rel).read_bytes() for rel in spec["images"]]
            request = build_request(JudgeExperiment(spec["experiment"]), FamilyKind(spec["family"]), images,
                                    spec.get("variant", ""))
            jobs.append(JudgeJob(item_id, Cell(**spec["cell"]), request))
    return jobs


def judge_outputs(out_dir: Path | str, backend: JudgeBackend, *, max_attempts: int | None = None,
                  concurrency: int | None = None, progress: bool = False) -> JudgeBatch:
    out_dir = Path(out_dir)
    policy = RetryPolicy(max_attempts) if max_attempts else RetryPolicy.from_settings()
    return judge_many(backend, judge_jobs(out_dir), out_dir / VERDICT_LOG, retry_policy=policy,
                      concurrency=concurrency, progress=progress)


def render_report(out_dir: Path | str) -> Report:
    """Rebuild the report purely from the verdict log (style cells split by arm)."""
    out_dir = Path(out_dir)
    report = Report.from_verdicts(read_verdict_log(out_dir / VERDICT_LOG))
    report.write(out_dir / REPORT_DIR)
    return report


@dataclass
class ExperimentOutcome:
    runs: RunOutcome
    judged: JudgeBatch
    report: Report


def run_experiment(manifest: ExperimentManifest, *, model: MMDiT | None = None, workers: int | None = None,
                   judge: str | None = None, progress: bool = False,
                   on_item: Callable[[ItemOutput], None] | None = None) -> ExperimentOutcome:
    """Runs, then judge, then report. Judge failures are counted, never fatal."""
    runs = execute_runs(manifest, model=model, workers=workers, progress=progress, on_item=on_item)
    backend = judge_backend(judge or manifest.judge.mode)
    judged = judge_outputs(runs.out_dir, backend, max_attempts=manifest.judge.max_attempts,
                           concurrency=manifest.judge.concurrency, progress=progress)
    report = render_report(runs.out_dir)
    return ExperimentOutcome(runs, judged, report)
