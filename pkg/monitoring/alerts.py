"""Alert manager for numerical degradations (non-convergence, truncation, pole grazing)."""

import logging
from enum import Enum
from typing import List

logger = logging.getLogger(__name__)


class AlertLevel(str, Enum):
    INFO = "INFO"
    WARNING = "WARNING"
    ERROR = "ERROR"


class AlertManager:
    """Emits numerical alerts through logging and keeps them for the run report."""

    def __init__(self):
        self.history: List[dict] = []

    def send_numerical_alert(self, alert_type: str, details: dict,
                             level: AlertLevel = AlertLevel.WARNING) -> None:
        """Emit a numerical alert (e.g. CG_NOT_CONVERGED)."""
        self.history.append({"alert_type": alert_type, "level": level.value, "details": details})
        log = logger.error if level is AlertLevel.ERROR else (
            logger.info if level is AlertLevel.INFO else logger.warning)
        log(
            "NUMERICAL_ALERT %s | %s",
            alert_type,
            details,
            extra={"alert_type": alert_type, "details": details},
        )

    def drain(self) -> List[dict]:
        """Return and clear the alerts recorded so far."""
        alerts, self.history = self.history, []
        return alerts


_alert_manager: AlertManager | None = None


def get_alert_manager() -> AlertManager:
    """Return the shared AlertManager instance."""
    global _alert_manager
    if _alert_manager is None:
        _alert_manager = AlertManager()
    return _alert_manager
