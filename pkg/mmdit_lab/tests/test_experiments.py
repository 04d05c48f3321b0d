from __future__ import annotations

import json
from pathlib import Path

import pytest

from mmdit_lab.exceptions import ConfigError
from mmdit_lab.experiments.manifest import ExperimentKind, load_manifest, manifest_from_mapping
from mmdit_lab.experiments.runner import (
    VERDICT_LOG,
    ItemOutput,
    _ItemWriter,
    execute_runs,
    judge_backend,
    judge_outputs,
    load_index,
    render_report,
    run_experiment,
)
from mmdit_lab.experiments.sweep import run_sweep
from mmdit_lab.experiments.taskset import generate_task_set
from mmdit_lab.judging.prompts import JudgeExperiment
from mmdit_lab.judging.report import LENS_ROW
from mmdit_lab.judging.verdicts import Cell, VerdictRecord
from mmdit_lab.mmdit.config import save_config
from mmdit_lab.mmdit.model import MMDiT
from mmdit_lab.taskgen.manifests import read_task_manifest
from mmdit_lab.taskgen.tasks import FamilyKind

from .factories import make_config


@pytest.fixture(scope="module")
def lab(tmp_path_factory):
    root = tmp_path_factory.mktemp("lab")
    config = make_config(text_len=24)
    save_config(config, root / "model.toml")
    h, w, _ = config.pixel_shape
    task_set = generate_task_set(root / "tasks", size=(h, w), scale=8, families=(FamilyKind.COLOR_TRANSFER,))
    return root, MMDiT(config), task_set


def manifest_for(root: Path, kind: str, out: str, **extra):
    data = {
        "kind": kind,
        "model_config": "model.toml",
        "task_manifest": "tasks/tasks.csv",
        "families": ["color_transfer"],
        "binding_layer": "double:2",
        "color_binding_layer": "single:3",
        "limit": 2,
        "output_dir": out,
    }
    data.update(extra)
    return manifest_from_mapping(data, root)


def test_task_set_layout(lab):
    root, _, task_set = lab
    assert task_set.task_counts == {"color_transfer": 2}
    assert task_set.pair_counts == {"color_transfer": 2}
    stage = json.loads((root / "tasks" / "stage.json").read_text(encoding="utf-8"))
    assert stage["scale"] == 8
    references = {task.reference for task in read_task_manifest(task_set.task_manifest)}
    for reference in references:
        assert (root / "tasks" / "references" / f"{reference}.png").exists()
    assert len(list((root / "tasks" / "references").rglob("*.png"))) == len(references)


def test_lens_experiment_is_reproducible(lab):
    root, model, _ = lab
    first = run_experiment(manifest_for(root, "lens", "out/lens-a"), model=model, judge="stub")
    second = run_experiment(manifest_for(root, "lens", "out/lens-b"), model=model, judge="stub", workers=2)
    assert len(first.runs.ran) == 2 and not first.runs.failed
    assert len(first.judged.records) == 2
    a, b = root / "out" / "lens-a", root / "out" / "lens-b"
    assert (a / VERDICT_LOG).read_bytes() == (b / VERDICT_LOG).read_bytes()
    for name in ("report.csv", "report.txt", "counts.json"):
        assert (a / "report" / name).read_bytes() == (b / "report" / name).read_bytes()
    assert (a / "index.json").read_bytes() == (b / "index.json").read_bytes()
    assert first.report.to_text() == second.report.to_text()


def test_lens_items_record_their_runs(lab):
    root, model, _ = lab
    outcome = execute_runs(manifest_for(root, "lens", "out/lens-runs", limit=1), model=model)
    (item,) = outcome.records.values()
    roles = [run["role"] for run in item.runs]
    assert roles == ["i2i_baseline", "t2i_baseline", "control", "lens_output"]
    assert item.runs[0]["trace"].endswith(".trce")
    assert item.judges[0]["cell"] == {"table": "lens", "row": "VLM Judge Observation Rate", "column": "color_transfer"}
    assert all(isinstance(run["wall_seconds"], float) for run in item.runs)
    assert "wall_seconds" not in json.dumps(load_index(outcome.out_dir))


def test_reruns_fill_only_the_gaps(lab):
    root, model, _ = lab
    manifest = manifest_for(root, "lens", "out/resume")
    first = execute_runs(manifest, model=model)
    judge_outputs(first.out_dir, judge_backend("stub"))
    again = execute_runs(manifest, model=model)
    assert again.ran == [] and sorted(again.skipped) == sorted(first.ran)

    victim = sorted(first.ran)[0]
    image = load_index(first.out_dir)["items"][victim]["images"]["lens_output"]
    (first.out_dir / image).unlink()
    third = execute_runs(manifest, model=model)
    assert third.ran == [victim]

    rejudged = judge_outputs(first.out_dir, judge_backend("stub"))
    assert rejudged.records == [] and rejudged.skipped == 2
    assert len((first.out_dir / VERDICT_LOG).read_text(encoding="utf-8").splitlines()) == 2


def test_lens_subset_experiment(lab):
    root, model, _ = lab
    outcome = run_experiment(manifest_for(root, "lens_subset", "out/lens-subset", limit=1), model=model)
    rows = outcome.report.rows("lens_subset")
    assert rows == ["Text Tokens (All)", "Text Tokens (Padding Only)", "Text Tokens (Content Only)"]


def test_knockout_experiment(lab):
    root, model, _ = lab
    manifest = manifest_for(root, "knockout", "out/knockout", limit=1, knockout_rows=["ref->text", "ref->image"])
    outcome = run_experiment(manifest, model=model)
    assert outcome.report.rows("knockout") == ["ref->text", "ref->image"]
    assert all(cell.n == 1 for cell in outcome.report.cells.values())


def test_reference_drop_experiment(lab):
    root, model, _ = lab
    outcome = run_experiment(manifest_for(root, "reference_drop", "out/drop", limit=1), model=model)
    # default cutoff sits just past the binding layer (double:2 -> ordinal 1)
    assert outcome.report.rows("reference_drop") == ["cutoff 2"]


def test_cross_patch_experiment(lab):
    root, model, _ = lab
    manifest = manifest_for(root, "cross_patch", "out/patch", limit=1, pair_manifest="tasks/pairs.csv")
    outcome = run_experiment(manifest, model=model)
    assert len(outcome.runs.ran) == 1
    (item,) = outcome.runs.records.values()
    assert [run["role"] for run in item.runs] == ["i2i_baseline", "i2i_baseline", "patched_target"]
    assert outcome.report.tables() == ["cross_patch"]


def test_layer_sweep_writes_a_grid(lab):
    root, model, task_set = lab
    task_id = read_task_manifest(task_set.task_manifest)[0].task_id
    manifest = manifest_for(root, "layer_sweep", "out/sweep", sweep={"op": "t2i_lens", "task_id": task_id})
    outcome = run_sweep(manifest, model=model)
    assert len(outcome.result.results) == model.config.total_blocks
    # marker defaults to the color binding layer, single:3
    assert outcome.result.manifest.marker == 6
    assert outcome.grid_path.exists()
    assert "(marked)" in outcome.caption_path.read_text(encoding="utf-8")


def test_report_needs_only_the_verdict_log(lab):
    root, model, _ = lab
    outcome = run_experiment(manifest_for(root, "lens", "out/log-only"), model=model, judge="stub")
    (outcome.runs.out_dir / "index.json").unlink()
    assert render_report(outcome.runs.out_dir).to_text() == outcome.report.to_text()


def test_style_judge_jobs_carry_the_arm(tmp_path):
    item = ItemOutput("style-x", FamilyKind.STYLE_TRANSFER, "fictional")
    _ItemWriter(tmp_path, item).judge(JudgeExperiment.T2I_LENS, "", Cell("lens", LENS_ROW, "style_transfer"), [])
    assert item.judges[0]["cell"]["arm"] == "fictional"
    plain = ItemOutput("color-x", FamilyKind.COLOR_TRANSFER)
    _ItemWriter(tmp_path, plain).judge(JudgeExperiment.T2I_LENS, "", Cell("lens", LENS_ROW, "color_transfer"), [])
    assert "arm" not in plain.judges[0]["cell"]


def test_arm_split_is_rendered_without_an_index(tmp_path):
    lines = [
        VerdictRecord(f"s{i}", "t2i_lens", Cell("lens", LENS_ROW, "style_transfer", arm), 1, "", "").to_json()
        for i, arm in enumerate(("fictional", "fictional", "realistic"))
    ]
    (tmp_path / VERDICT_LOG).write_text("\n".join(lines) + "\n", encoding="utf-8")
    columns = render_report(tmp_path).columns("lens")
    assert columns == ["style_transfer:fictional", "style_transfer:realistic"]


# ----------------------------
# Manifest validation
# ----------------------------

def test_manifest_file_roundtrip(tmp_path):
    path = tmp_path / "knockout.toml"
    path.write_text(
        'kind = "knockout"\nmodel_config = "m.toml"\ntask_manifest = "t.csv"\ncutoff = 3\n[judge]\nmode = "endpoint"\n',
        encoding="utf-8",
    )
    manifest = load_manifest(path)
    assert manifest.kind is ExperimentKind.KNOCKOUT
    assert manifest.name == "knockout"
    assert manifest.model_config == (tmp_path / "m.toml").resolve()
    assert manifest.output_dir == (tmp_path / "out" / "knockout").resolve()
    assert manifest.judge.mode == "endpoint"
    assert manifest.with_overrides(seed=5, output_dir=None).seed == 5


@pytest.mark.parametrize("data", [
    {"kind": "lens", "task_manifest": "t.csv"},
    {"kind": "lens", "model_config": "m.toml", "task_manifest": "t.csv", "colour": "red"},
    {"kind": "telepathy", "model_config": "m.toml", "task_manifest": "t.csv"},
    {"kind": "lens", "model_config": "m.toml", "task_manifest": "t.csv", "binding_layer": "triple:1"},
    {"kind": "lens", "model_config": "m.toml", "task_manifest": "t.csv", "knockout_rows": ["ref->void"]},
    {"kind": "lens", "model_config": "m.toml", "task_manifest": "t.csv", "judge": {"mode": "oracle"}},
    {"kind": "layer_sweep", "model_config": "m.toml", "task_manifest": "t.csv", "sweep": {"op": "shuffle"}},
])
def test_bad_manifests(tmp_path, data):
    with pytest.raises(ConfigError):
        manifest_from_mapping(data, tmp_path)


@pytest.mark.parametrize(("kind", "extra"), [
    ("lens", {"binding_layer": "double:9"}),
    ("knockout", {"families": ["object_addition"]}),
    ("cross_patch", {}),
    ("reference_drop", {"cutoff": 99}),
    ("layer_sweep", {}),
    ("layer_sweep", {"sweep": {"task_id": "x", "ordinals": [12]}}),
    ("lens", {"task_manifest": "missing.csv"}),
])
def test_manifests_that_do_not_fit_the_model(lab, kind, extra):
    root, model, _ = lab
    with pytest.raises(ConfigError):
        manifest_for(root, kind, "out/never", **extra).check(model.config)


SHIPPED = sorted(p for p in (Path(__file__).parents[1] / "configs").glob("*.toml") if p.name != "desk.toml")


@pytest.mark.parametrize("path", SHIPPED, ids=lambda p: p.stem)
def test_shipped_manifests_load_and_fit_the_desk_model(path):
    manifest = load_manifest(path)
    config = manifest.model()
    manifest.binding_layer.validate(config)
    manifest.color_binding_layer.validate(config)
    if manifest.kind is ExperimentKind.REFERENCE_DROP:
        assert 0 <= manifest.drop_cutoff(config) <= config.total_blocks


def test_missing_manifest_file(tmp_path):
    with pytest.raises(ConfigError):
        load_manifest(tmp_path / "nope.toml")
