"""
Run-scoped logging: structured JSON log files and run id stamping.

The console side is handled by utils.logger; this module adds a JSON file
handler inside a run directory so every pipeline run keeps a machine-readable
log next to its artifacts.
"""

import logging
import threading
import uuid
from pathlib import Path
from typing import Optional

from pythonjsonlogger.json import JsonFormatter

from utils.logger import app_logger, log_level

# Thread-local storage for run ID
_local = threading.local()


class RunIdFilter(logging.Filter):
    """Filter to add the active run ID to log records."""

    def filter(self, record):
        record.run_id = getattr(_local, "run_id", None)
        # Flatten extra_fields so the JSON formatter emits them as keys
        extra_fields = getattr(record, "extra_fields", None)
        if isinstance(extra_fields, dict):
            for key, value in extra_fields.items():
                if not hasattr(record, key):
                    setattr(record, key, value)
        return True


def set_run_id(run_id: Optional[str] = None) -> str:
    """Set the run ID for the current thread."""
    if run_id is None:
        run_id = str(uuid.uuid4())
    _local.run_id = run_id
    return run_id


def get_run_id() -> Optional[str]:
    """Get the current run ID."""
    return getattr(_local, "run_id", None)


def clear_run_id():
    """Clear the run ID for the current thread."""
    if hasattr(_local, "run_id"):
        delattr(_local, "run_id")


def configure_logging(run_dir: Optional[Path] = None) -> Optional[logging.Handler]:
    """Attach a structured JSON file handler writing to ``run_dir/run.log.jsonl``.

    Returns the handler so callers can detach it when the run ends. Calling it
    again for the same directory is a no-op.
    """
    if run_dir is None:
        return None

    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    log_file = (run_dir / "run.log.jsonl").resolve()

    for handler in app_logger.handlers:
        if isinstance(handler, logging.FileHandler) and Path(handler.baseFilename) == log_file:
            return handler

    json_handler = logging.FileHandler(filename=str(log_file), encoding="utf-8", mode="a")
    json_handler.setLevel(log_level)
    json_handler.setFormatter(
        JsonFormatter(
            "{asctime}{levelname}{name}{message}{run_id}",
            style="{",
            rename_fields={"levelname": "level", "name": "logger", "asctime": "timestamp"},
        )
    )
    json_handler.addFilter(RunIdFilter())
    app_logger.addHandler(json_handler)
    return json_handler


def detach_handler(handler: Optional[logging.Handler]) -> None:
    """Remove a handler previously returned by configure_logging."""
    if handler is None:
        return
    app_logger.removeHandler(handler)
    handler.close()


def log_performance(logger, operation: str, duration: float, extra_fields: Optional[dict] = None):
    """Log performance metrics with structured data."""
    log_data = {
        "operation": operation,
        "duration_ms": round(duration * 1000, 2),
        "performance": True,
    }
    if extra_fields:
        log_data.update(extra_fields)

    logger.info(
        f"Performance: {operation} completed in {log_data['duration_ms']}ms",
        extra={"extra_fields": log_data},
    )
