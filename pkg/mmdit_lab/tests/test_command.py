from __future__ import annotations

import json
from io import StringIO

import pytest
from django.core.management import call_command
from django.core.management.base import CommandError

from mmdit_lab.mmdit.config import load_config, save_config
from mmdit_lab.models import Experiment, RunRecord

from .factories import make_config

pytestmark = pytest.mark.django_db

LENS_MANIFEST = """\
kind = "lens"
model_config = "model.toml"
task_manifest = "tasks/tasks.csv"
families = ["color_transfer"]
binding_layer = "double:2"
color_binding_layer = "single:3"
limit = 2
"""


def lab(*args) -> str:
    out = StringIO()
    call_command("lab", *args, "--no-progress", stdout=out)
    return out.getvalue()


@pytest.fixture
def workspace(tmp_path):
    save_config(make_config(text_len=24), tmp_path / "model.toml")
    lab("init-model", "--config", str(tmp_path / "model.toml"), "--seed", "3")
    lab("gen-tasks", "--config", str(tmp_path / "model.toml"), "--out", str(tmp_path / "tasks"),
        "--scale", "8", "--families", "color_transfer")
    (tmp_path / "lens.toml").write_text(LENS_MANIFEST, encoding="utf-8")
    return tmp_path


def test_init_model_writes_config_and_weights(tmp_path):
    path = tmp_path / "desk.toml"
    output = lab("init-model", "--config", str(path), "--seed", "5")
    config = load_config(path)
    assert config.seed == 5 and config.weights == "desk.mmdl"
    assert (tmp_path / "desk.mmdl").exists()
    assert config.fingerprint().hex()[:12] in output


def test_gen_tasks_prints_counts(workspace):
    output = lab("gen-tasks", "--out", str(workspace / "more"), "--scale", "8", "--families", "color_transfer")
    assert output.strip() == "color_transfer: 2 tasks, 2 pairs"


def test_run_records_experiment_and_runs(workspace):
    out = workspace / "out" / "lens"
    output = lab("run", "--manifest", str(workspace / "lens.toml"), "--out", str(out))
    assert "ran 2, skipped 0, failed 0; judged 2 (0 judge failures)" in output
    assert "[lens]" in output

    experiment = Experiment.objects.get(name="lens")
    assert experiment.is_complete and experiment.failed_tasks == 0
    assert experiment.output_dir == str(out)
    assert RunRecord.objects.filter(experiment=experiment).count() == 8
    record = RunRecord.objects.get(experiment=experiment, role="lens_output", task_id=experiment.runs.first().task_id)
    assert record.run_spec["mode"] == "unconditional_t2i"
    assert (out / record.image_path).exists()

    lines = (out / "lab.log.jsonl").read_text(encoding="utf-8").splitlines()
    assert any(json.loads(line)["message"] == "runs finished" for line in lines)


def test_rerun_is_idempotent(workspace):
    out = workspace / "out" / "lens"
    lab("run", "--manifest", str(workspace / "lens.toml"), "--out", str(out))
    output = lab("run", "--manifest", str(workspace / "lens.toml"), "--out", str(out))
    assert "ran 0, skipped 2" in output
    assert Experiment.objects.count() == 1
    assert RunRecord.objects.count() == 8


def test_judge_and_report_stages(workspace):
    out = workspace / "out" / "lens"
    lab("run", "--manifest", str(workspace / "lens.toml"), "--out", str(out))
    assert lab("judge", "--out", str(out)).startswith("judged 0, skipped 2 already logged")
    report = lab("report", "--out", str(out))
    assert report == (out / "report" / "report.txt").read_text(encoding="utf-8")


def test_sweep_and_grid(workspace):
    tasks = (workspace / "tasks" / "tasks.csv").read_text(encoding="utf-8").splitlines()
    task_id = tasks[1].split(",")[0]
    manifest = LENS_MANIFEST.replace('kind = "lens"', 'kind = "layer_sweep"')
    manifest += f'\n[sweep]\nop = "reference_drop"\ntask_id = "{task_id}"\nordinals = [0, 2, 12]\n'
    (workspace / "sweep.toml").write_text(manifest, encoding="utf-8")
    out = workspace / "out" / "sweep"
    assert "(3 cells)" in lab("sweep", "--manifest", str(workspace / "sweep.toml"), "--out", str(out))

    grid = json.loads(lab("grid", "--manifest", str(out / "sweep" / "grid.json"), "--out", str(workspace / "g.png")))
    assert grid["grid"] == str(workspace / "g.png")
    assert (workspace / "g.txt").read_text(encoding="utf-8").splitlines()[-1] == "12: cutoff 12"


def test_lab_errors_become_command_errors(tmp_path):
    with pytest.raises(CommandError, match="ConfigError"):
        lab("run", "--manifest", str(tmp_path / "missing.toml"))
    with pytest.raises(CommandError, match="--out"):
        lab("gen-tasks")
    with pytest.raises(CommandError, match="--manifest"):
        lab("sweep")
