from __future__ import annotations

from django.apps import AppConfig


class MmditLabConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "mmdit_lab"
    verbose_name = "MM-DiT Binding Lab"
