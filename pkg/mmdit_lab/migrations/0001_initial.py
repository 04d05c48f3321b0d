from django.db import migrations, models
import django.db.models.deletion
import django.utils.timezone


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name="Experiment",
            fields=[
                ("id", models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name="ID")),
                ("created_at", models.DateTimeField(db_index=True, default=django.utils.timezone.now, editable=False)),
                ("updated_at", models.DateTimeField(auto_now=True, db_index=True)),
                ("name", models.CharField(max_length=200, unique=True)),
                ("kind", models.CharField(
                    choices=[
                        ("lens", "T2I Lens"),
                        ("lens_subset", "T2I Lens (token subsets)"),
                        ("knockout", "Attention knockout"),
                        ("reference_drop", "Reference drop"),
                        ("cross_patch", "I2I-to-I2I patching"),
                        ("cross_patch_subset", "I2I-to-I2I patching (token subsets)"),
                        ("layer_sweep", "Layer sweep"),
                    ],
                    db_index=True,
                    max_length=32,
                )),
                ("manifest_path", models.CharField(blank=True, max_length=500)),
                ("output_dir", models.CharField(max_length=500)),
                ("config_fingerprint", models.CharField(blank=True, max_length=64)),
                ("is_complete", models.BooleanField(default=False)),
                ("failed_tasks", models.PositiveIntegerField(default=0)),
            ],
            options={
                "ordering": ["-updated_at", "name"],
            },
        ),
        migrations.CreateModel(
            name="RunRecord",
            fields=[
                ("id", models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name="ID")),
                ("created_at", models.DateTimeField(db_index=True, default=django.utils.timezone.now, editable=False)),
                ("updated_at", models.DateTimeField(auto_now=True, db_index=True)),
                ("task_id", models.CharField(db_index=True, max_length=300)),
                ("role", models.CharField(
                    choices=[
                        ("i2i_baseline", "I2I baseline"),
                        ("t2i_baseline", "T2I baseline"),
                        ("lens_output", "Lens output"),
                        ("knockout_output", "Knockout output"),
                        ("drop_output", "Reference-drop output"),
                        ("patched_target", "Patched target"),
                        ("control", "Control"),
                    ],
                    max_length=32,
                )),
                ("variant", models.CharField(blank=True, default="", max_length=100)),
                ("image_path", models.CharField(max_length=500)),
                ("trace_path", models.CharField(blank=True, max_length=500)),
                ("run_spec", models.JSONField(default=dict)),
                ("wall_seconds", models.FloatField(blank=True, null=True)),
                ("experiment", models.ForeignKey(
                    on_delete=django.db.models.deletion.CASCADE,
                    related_name="runs",
                    to="mmdit_lab.experiment",
                )),
            ],
            options={
                "ordering": ["experiment", "task_id", "role", "variant"],
            },
        ),
        migrations.AddConstraint(
            model_name="runrecord",
            constraint=models.UniqueConstraint(
                fields=("experiment", "task_id", "role", "variant"),
                name="uniq_run_per_experiment_task_role_variant",
            ),
        ),
    ]
