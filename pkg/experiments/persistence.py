"""
Result persistence: a single writer for CSV/JSON outputs and a run ledger.

Every output carries a header block with the config hash, package
versions and tolerance settings. CSV files hold no timestamps or
runtimes so identical runs produce identical files.
"""

from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional
import json
import threading

import numpy as np
import pandas as pd
import scipy

import core
from experiments.config import ExperimentConfig, config_hash


def package_versions() -> Dict[str, str]:
    return {"homoglab": core.__version__, "numpy": np.__version__,
            "scipy": scipy.__version__, "pandas": pd.__version__}


def build_header(cfg: ExperimentConfig, subcommand: str) -> Dict[str, Any]:
    return {
        "subcommand": subcommand,
        "config_hash": config_hash(cfg),
        "versions": package_versions(),
        "tolerances": {**cfg.tolerances.model_dump(), "eigen_tolerance": cfg.eigen.tolerance,
                       "corrector_rtol": cfg.cell.rtol},
        "seed": f"0x{cfg.seed:X}",
    }


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None if np.isnan(value) else ("inf" if value > 0 else "-inf")
    return value


class ResultWriter:
    """Owns the output directory; all writes are serialized."""

    def __init__(self, out_dir, header: Dict[str, Any]):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.header = header
        self._lock = threading.Lock()
        self.written = []

    def _header_lines(self) -> str:
        lines = [f"# homoglab {self.header.get('subcommand', '')}".rstrip()]
        for key in ("config_hash", "seed"):
            lines.append(f"# {key}: {self.header[key]}")
        lines.append("# versions: " + " ".join(f"{k}={v}" for k, v in self.header["versions"].items()))
        lines.append("# tolerances: " + json.dumps(self.header["tolerances"], sort_keys=True))
        return "\n".join(lines) + "\n"

    def write_csv(self, name: str, frame: pd.DataFrame) -> Path:
        path = self.out_dir / name
        with self._lock:
            with open(path, "w", newline="") as f:
                f.write(self._header_lines())
                frame.to_csv(f, index=False, float_format="%.17g")
            self.written.append(path)
        return path

    def write_json(self, name: str, payload: Dict[str, Any]) -> Path:
        path = self.out_dir / name
        body = {"header": self.header, **_jsonable(payload)}
        with self._lock:
            with open(path, "w") as f:
                json.dump(body, f, indent=2, sort_keys=True)
                f.write("\n")
            self.written.append(path)
        return path

    def write_plot(self, name: str, x, y, series) -> Path:
        """Plot data as (x, y, series) rows."""
        frame = pd.DataFrame({"x": np.asarray(x, dtype=float), "y": np.asarray(y, dtype=float),
                              "series": list(series)})
        return self.write_csv(name, frame)


def read_csv(path) -> pd.DataFrame:
    """Read an output CSV, skipping its header block."""
    return pd.read_csv(path, comment="#")


class RunLedger:
    """Append-only JSON-lines record of completed stages."""

    def __init__(self, logfile="runs.jsonl"):
        self.logfile = Path(logfile)
        self.logfile.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def log_stage(self, stage: str, status: str, details: Optional[Dict[str, Any]] = None):
        entry = {
            "timestamp": datetime.utcnow().isoformat(),
            "stage": stage,
            "status": status,
            "details": _jsonable(details or {}),
        }
        with self._lock:
            with open(self.logfile, "a") as f:
                f.write(json.dumps(entry, sort_keys=True) + "\n")

    def entries(self):
        if not self.logfile.exists():
            return []
        with open(self.logfile) as f:
            return [json.loads(line) for line in f if line.strip()]
