#!/usr/bin/env python
"""Host project for the binding lab: ``python manage.py lab <subcommand> ...``."""
import os
import sys


def main():
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "test_project.settings")
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError("Django is not installed; run `pip install -e .` from the repository root") from exc
    execute_from_command_line(sys.argv)


if __name__ == "__main__":
    main()
