"""CSV/JSON emission and run manifests."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

__all__ = ["fmt", "write_csv", "write_json", "sha256_file", "RunManifest"]


def fmt(v) -> str:
    """Locale-independent number formatting with 17 significant digits."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return format(v, ".17g")


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path: Path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    version: str
    seeds: list = field(default_factory=list)
    tolerances: dict = field(default_factory=dict)
    started: str = ""
    elapsed_s: float = 0.0
    outputs: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    def add_output(self, path: Path, out_dir: Path):
        self.outputs[str(Path(path).relative_to(out_dir))] = sha256_file(path)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def write(self, out_dir: Path) -> Path:
        return write_json(
            Path(out_dir) / "manifest.json",
            {
                "subcommand": self.subcommand,
                "config": self.config,
                "seeds": self.seeds,
                "tolerances": self.tolerances,
                "version": self.version,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "started": self.started,
                "elapsed_s": self.elapsed_s,
                "outputs": self.outputs,
                "checks": self.checks,
                "passed": self.passed,
            },
        )
