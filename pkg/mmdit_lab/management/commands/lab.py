from __future__ import annotations

import json
import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError
from django.db import transaction

from mmdit_lab.exceptions import LabError
from mmdit_lab.experiments.grid import grid_from_manifest
from mmdit_lab.experiments.manifest import JUDGE_MODES, ExperimentKind, ExperimentManifest, load_manifest
from mmdit_lab.experiments.runner import ItemOutput, judge_backend, judge_outputs, render_report, run_experiment
from mmdit_lab.experiments.sweep import run_sweep
from mmdit_lab.experiments.taskset import generate_task_set
from mmdit_lab.jsonlog import attach_file_log, detach_file_log
from mmdit_lab.mmdit.config import ModelConfig, load_config, save_config
from mmdit_lab.mmdit.model import MMDiT
from mmdit_lab.mmdit.weights import load_model, save_weights
from mmdit_lab.models import Experiment, RunRecord
from mmdit_lab.taskgen.tasks import FAMILY_ORDER, FamilyKind

logger = logging.getLogger("mmdit_lab.commands")

SUBCOMMANDS = ("init-model", "gen-tasks", "run", "sweep", "judge", "report", "grid")


class Command(BaseCommand):
    help = "Binding-lab pipeline: init-model, gen-tasks, run, sweep, judge, report, grid."

    def add_arguments(self, parser):
        parser.add_argument("subcommand", choices=SUBCOMMANDS)
        parser.add_argument("--config", help="model config TOML (init-model writes it, run/sweep override with it)")
        parser.add_argument("--manifest", help="experiment manifest TOML (run/sweep) or grid.json (grid)")
        parser.add_argument("--out", help="output directory (grid: output PNG path)")
        parser.add_argument("--seed", type=int, default=None, help="model seed (init-model) / fixture or run seed")
        parser.add_argument("--scale", type=int, default=1, help="gen-tasks: divide every parameter list by this")
        parser.add_argument("--families", nargs="*", choices=[k.value for k in FAMILY_ORDER], default=None)
        parser.add_argument("--judge", choices=JUDGE_MODES, default=None)
        parser.add_argument("--workers", type=int, default=None)
        parser.add_argument("--no-progress", action="store_true")

    def handle(self, *args, **options):
        handler_name = "_" + options["subcommand"].replace("-", "_")
        out = options.get("out")
        log_dir = Path(out) if out and options["subcommand"] != "grid" else None
        handler = attach_file_log(log_dir) if log_dir is not None else None
        try:
            getattr(self, handler_name)(options)
        except LabError as exc:
            logger.error("command failed", extra={"subcommand": options["subcommand"], "error": str(exc)})
            raise CommandError(f"{type(exc).__name__}: {exc}") from exc
        finally:
            if handler is not None:
                detach_file_log(handler)

    # ----------------------------
    # Helpers
    # ----------------------------

    @staticmethod
    def _require(options, *names):
        missing = [f"--{n}" for n in names if not options.get(n)]
        if missing:
            raise CommandError(f"{options['subcommand']} needs {' '.join(missing)}")

    def _manifest(self, options) -> ExperimentManifest:
        self._require(options, "manifest")
        manifest = load_manifest(options["manifest"])
        return manifest.with_overrides(
            model_config=Path(options["config"]) if options.get("config") else None,
            output_dir=Path(options["out"]) if options.get("out") else None,
            seed=options.get("seed"),
        )

    def _progress(self, options) -> bool:
        return not options["no_progress"] and options.get("verbosity", 1) > 0

    @staticmethod
    def _record_experiment(manifest: ExperimentManifest, model: MMDiT) -> Experiment:
        experiment, _ = Experiment.objects.update_or_create(
            name=manifest.name,
            defaults={
                "kind": manifest.kind.value,
                "manifest_path": str(manifest.path),
                "output_dir": str(manifest.output_dir),
                "config_fingerprint": model.config.fingerprint().hex(),
            },
        )
        return experiment

    @staticmethod
    def _upsert_runs(experiment: Experiment, output: ItemOutput) -> None:
        with transaction.atomic():
            for run in output.runs:
                RunRecord.objects.update_or_create(
                    experiment=experiment,
                    task_id=output.item_id,
                    role=run["role"],
                    variant=run["variant"],
                    defaults={
                        "image_path": run["image"],
                        "trace_path": run["trace"],
                        "run_spec": run["run_spec"],
                        "wall_seconds": run["wall_seconds"],
                    },
                )

    # ----------------------------
    # Subcommands
    # ----------------------------

    def _init_model(self, options):
        self._require(options, "config")
        config_path = Path(options["config"])
        config = load_config(config_path) if config_path.exists() else ModelConfig()
        if options.get("seed") is not None:
            config = config.replace(seed=options["seed"])
        config = config.replace(weights=config_path.with_suffix(".mmdl").name)
        model = MMDiT(config)
        save_config(config, config_path)
        weights = save_weights(model, config_path.parent / config.weights)
        logger.info("initialised model", extra={"config": str(config_path), "weights": str(weights)})
        self.stdout.write(f"wrote {config_path} and {weights} (fingerprint {config.fingerprint().hex()[:12]})")

    def _gen_tasks(self, options):
        self._require(options, "out")
        size = (64, 64)
        if options.get("config"):
            h, w, _ = load_config(options["config"]).pixel_shape
            size = (h, w)
        families = tuple(FamilyKind(v) for v in options["families"]) if options["families"] else FAMILY_ORDER
        task_set = generate_task_set(
            options["out"], size=size, scale=options["scale"], seed=options.get("seed") or 0, families=families,
        )
        for family, count in task_set.task_counts.items():
            pairs = task_set.pair_counts.get(family)
            suffix = f", {pairs} pairs" if pairs is not None else ""
            self.stdout.write(f"{family}: {count} tasks{suffix}")

    def _run(self, options):
        manifest = self._manifest(options)
        model = load_model(manifest.model_config)
        if manifest.kind is ExperimentKind.LAYER_SWEEP:
            return self._sweep(options, manifest=manifest, model=model)
        experiment = self._record_experiment(manifest, model)
        outcome = run_experiment(
            manifest,
            model=model,
            workers=options.get("workers"),
            judge=options.get("judge"),
            progress=self._progress(options),
            on_item=lambda output: self._upsert_runs(experiment, output),
        )
        experiment.failed_tasks = len(outcome.runs.failed)
        experiment.is_complete = not outcome.runs.failed and not outcome.judged.failures
        experiment.save(update_fields=["failed_tasks", "is_complete", "updated_at"])
        self.stdout.write(
            f"ran {len(outcome.runs.ran)}, skipped {len(outcome.runs.skipped)}, failed {len(outcome.runs.failed)}; "
            f"judged {len(outcome.judged.records)} ({len(outcome.judged.failures)} judge failures)"
        )
        self.stdout.write(outcome.report.to_text())

    def _sweep(self, options, manifest: ExperimentManifest | None = None, model: MMDiT | None = None):
        manifest = manifest or self._manifest(options)
        outcome = run_sweep(manifest, model=model)
        self.stdout.write(f"wrote {outcome.grid_path} ({len(outcome.result.results)} cells)")

    def _judge(self, options):
        self._require(options, "out")
        batch = judge_outputs(
            options["out"],
            judge_backend(options.get("judge") or "stub"),
            concurrency=options.get("workers"),
            progress=self._progress(options),
        )
        self.stdout.write(
            f"judged {len(batch.records)}, skipped {batch.skipped} already logged, {len(batch.failures)} failures"
        )

    def _report(self, options):
        self._require(options, "out")
        report = render_report(options["out"])
        self.stdout.write(report.to_text())

    def _grid(self, options):
        self._require(options, "manifest")
        grid_path, caption_path = grid_from_manifest(options["manifest"], options.get("out"))
        self.stdout.write(json.dumps({"grid": str(grid_path), "caption": str(caption_path)}))
