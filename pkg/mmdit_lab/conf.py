from __future__ import annotations

from typing import Any

from django.conf import settings

DEFAULTS: dict[str, Any] = {
    "JUDGE_URL": "",
    "JUDGE_API_KEY": "",
    "JUDGE_MODEL": "",
    "JUDGE_PROVIDER": "generic",  # generic | openai
    "JUDGE_TIMEOUT_SECONDS": 60.0,
    "JUDGE_MAX_ATTEMPTS": 2,
    "JUDGE_TEMPERATURE": 0.0,
    "JUDGE_CONCURRENCY": 4,
    "JUDGE_BACKOFF_SECONDS": 1.0,
    "WORKERS": 1,
    "GRID_CELL_SCALE": 4,
}


class LabSettings:
    """
    Attribute access over ``settings.MMDIT_LAB`` with the defaults above.

    Read lazily so ``override_settings`` in tests is honoured.
    """

    def __getattr__(self, name: str) -> Any:
        if name not in DEFAULTS:
            raise AttributeError(f"unknown MMDIT_LAB setting: {name}")
        user = getattr(settings, "MMDIT_LAB", {}) or {}
        return user.get(name, DEFAULTS[name])


lab_settings = LabSettings()
