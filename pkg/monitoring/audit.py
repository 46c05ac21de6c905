import logging
import json
from pathlib import Path

AUDIT_FORMAT = "%(asctime)s | %(levelname)s | %(message)s"

_audit_logger = logging.getLogger("homoglab.audit")
_audit_logger.setLevel(logging.INFO)
_handler = None


def configure_audit_log(path="audit.log"):
    """Route audit events to `path` (replaces any previous audit file)"""
    global _handler
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if _handler is not None:
        _audit_logger.removeHandler(_handler)
        _handler.close()
    _handler = logging.FileHandler(path)
    _handler.setFormatter(logging.Formatter(AUDIT_FORMAT))
    _audit_logger.addHandler(_handler)
    return path


def log_event(event, details):
    """Log event to the audit log"""
    if isinstance(details, dict):
        log_message = f"{event} | {json.dumps(details, default=str, sort_keys=True)}"
    else:
        log_message = f"{event} | {details}"
    _audit_logger.info(log_message)


def log_stage_failure(stage, error, context=None):
    """Log a failed pipeline stage with its error class"""
    log_event("STAGE_FAILED", {
        "stage": stage,
        "error": type(error).__name__,
        "message": str(error),
        "context": context or {},
    })
