from __future__ import annotations

import os
from pathlib import Path

BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = "dev-secret-key"
DEBUG = True
ALLOWED_HOSTS = ["*"]

INSTALLED_APPS = [
    "django.contrib.contenttypes",
    "mmdit_lab",
]

DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": BASE_DIR / "db.sqlite3",
    }
}

MMDIT_LAB = {
    "JUDGE_URL": os.environ.get("MMDIT_LAB_JUDGE_URL", ""),
    "JUDGE_API_KEY": os.environ.get("MMDIT_LAB_JUDGE_API_KEY", ""),
    "JUDGE_MODEL": os.environ.get("MMDIT_LAB_JUDGE_MODEL", ""),
    "JUDGE_PROVIDER": os.environ.get("MMDIT_LAB_JUDGE_PROVIDER", "generic"),
    "WORKERS": int(os.environ.get("MMDIT_LAB_WORKERS", "1")),
}

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "jsonl": {"()": "mmdit_lab.jsonlog.JsonLinesFormatter"},
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "jsonl",
            "level": os.environ.get("MMDIT_LAB_LOG_LEVEL", "WARNING"),
        },
    },
    "loggers": {
        # the per-run file log attached by the lab command records INFO and up
        "mmdit_lab": {"handlers": ["console"], "level": "INFO"},
    },
}

LANGUAGE_CODE = "en-us"
TIME_ZONE = "UTC"
USE_I18N = True
USE_TZ = True

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"
