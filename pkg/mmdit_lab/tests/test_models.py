from __future__ import annotations

import pytest
from django.db import IntegrityError, transaction

from mmdit_lab.models import Experiment, RunRecord

pytestmark = pytest.mark.django_db


def make_experiment(name: str = "desk-knockout") -> Experiment:
    return Experiment.objects.create(name=name, kind=Experiment.Kind.KNOCKOUT, output_dir="/tmp/out")


def make_run(experiment: Experiment, variant: str = "ref->text") -> RunRecord:
    return RunRecord.objects.create(
        experiment=experiment,
        task_id="color-red-chair-s0",
        role=RunRecord.Role.KNOCKOUT_OUTPUT,
        variant=variant,
        image_path="tasks/color-red-chair-s0/knockout_output.png",
        run_spec={"mode": "i2i"},
    )


def test_str():
    experiment = make_experiment()
    assert str(experiment) == "desk-knockout (knockout)"
    assert str(make_run(experiment)) == "color-red-chair-s0:knockout_output[ref->text]"
    assert str(make_run(experiment, variant="")) == "color-red-chair-s0:knockout_output"


def test_one_record_per_task_role_variant():
    experiment = make_experiment()
    make_run(experiment)
    with pytest.raises(IntegrityError), transaction.atomic():
        make_run(experiment)
    make_run(make_experiment("other"))
    assert RunRecord.objects.count() == 2


def test_runs_go_with_their_experiment():
    experiment = make_experiment()
    make_run(experiment)
    make_run(experiment, variant="ref->image")
    assert list(experiment.runs.values_list("variant", flat=True)) == ["ref->image", "ref->text"]
    experiment.delete()
    assert not RunRecord.objects.exists()
