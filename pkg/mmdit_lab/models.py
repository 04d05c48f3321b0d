# mmdit_lab/models.py
from __future__ import annotations

from django.db import models
from django.utils import timezone


# ----------------------------
# Reusable base mixins
# ----------------------------

class TimeStampedModel(models.Model):
    created_at = models.DateTimeField(default=timezone.now, editable=False, db_index=True)
    updated_at = models.DateTimeField(auto_now=True, db_index=True)

    class Meta:
        abstract = True


# ----------------------------
# Experiments
# ----------------------------

class Experiment(TimeStampedModel):
    class Kind(models.TextChoices):
        LENS = "lens", "T2I Lens"
        LENS_SUBSET = "lens_subset", "T2I Lens (token subsets)"
        KNOCKOUT = "knockout", "Attention knockout"
        REFERENCE_DROP = "reference_drop", "Reference drop"
        CROSS_PATCH = "cross_patch", "I2I-to-I2I patching"
        CROSS_PATCH_SUBSET = "cross_patch_subset", "I2I-to-I2I patching (token subsets)"
        LAYER_SWEEP = "layer_sweep", "Layer sweep"

    name = models.CharField(max_length=200, unique=True)
    kind = models.CharField(max_length=32, choices=Kind.choices, db_index=True)
    manifest_path = models.CharField(max_length=500, blank=True)
    output_dir = models.CharField(max_length=500)
    config_fingerprint = models.CharField(max_length=64, blank=True)  # sha256 hex

    is_complete = models.BooleanField(default=False)
    failed_tasks = models.PositiveIntegerField(default=0)

    class Meta:
        ordering = ["-updated_at", "name"]

    def __str__(self) -> str:
        return f"{self.name} ({self.kind})"


class RunRecord(TimeStampedModel):
    """
    One generated image. ``variant`` separates several outputs of one role for the
    same task (knockout rows, token subsets, sweep ordinals).
    """

    class Role(models.TextChoices):
        I2I_BASELINE = "i2i_baseline", "I2I baseline"
        T2I_BASELINE = "t2i_baseline", "T2I baseline"
        LENS_OUTPUT = "lens_output", "Lens output"
        KNOCKOUT_OUTPUT = "knockout_output", "Knockout output"
        DROP_OUTPUT = "drop_output", "Reference-drop output"
        PATCHED_TARGET = "patched_target", "Patched target"
        CONTROL = "control", "Control"

    experiment = models.ForeignKey(Experiment, on_delete=models.CASCADE, related_name="runs")
    task_id = models.CharField(max_length=300, db_index=True)
    role = models.CharField(max_length=32, choices=Role.choices)
    variant = models.CharField(max_length=100, blank=True, default="")

    image_path = models.CharField(max_length=500)
    trace_path = models.CharField(max_length=500, blank=True)
    run_spec = models.JSONField(default=dict)
    wall_seconds = models.FloatField(null=True, blank=True)

    class Meta:
        ordering = ["experiment", "task_id", "role", "variant"]
        constraints = [
            models.UniqueConstraint(
                fields=["experiment", "task_id", "role", "variant"],
                name="uniq_run_per_experiment_task_role_variant",
            ),
        ]

    def __str__(self) -> str:
        suffix = f"[{self.variant}]" if self.variant else ""
        return f"{self.task_id}:{self.role}{suffix}"
