from __future__ import annotations

import json
import logging
from datetime import datetime, timezone
from pathlib import Path

# attributes every LogRecord carries; anything else came in through ``extra=``
_RESERVED = set(vars(logging.makeLogRecord({}))) | {"message", "asctime"}


class JsonLinesFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        payload = {
            "ts": datetime.fromtimestamp(record.created, tz=timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        for key, value in vars(record).items():
            if key not in _RESERVED and not key.startswith("_"):
                payload[key] = value
        if record.exc_info:
            payload["exc"] = self.formatException(record.exc_info)
        return json.dumps(payload, default=str, sort_keys=True)


def attach_file_log(out_dir: Path, name: str = "lab.log.jsonl") -> logging.Handler:
    """Route the ``mmdit_lab`` logger tree into ``out_dir/name`` as JSON lines."""
    out_dir.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out_dir / name, encoding="utf-8")
    handler.setFormatter(JsonLinesFormatter())
    logging.getLogger("mmdit_lab").addHandler(handler)
    return handler


def detach_file_log(handler: logging.Handler) -> None:
    logging.getLogger("mmdit_lab").removeHandler(handler)
    handler.close()
