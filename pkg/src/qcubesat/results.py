"""Result bundles: fixed-format CSV tables, a text summary and a run manifest."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import platform
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

from .errors import OutputError


@dataclass(frozen=True)
class Column:
    name: str
    fmt: str = ".6g"  # format spec for floats; ignored for other types


def _cell(value, fmt):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float) or type(value).__name__.startswith("float"):
        v = float(value)
        return "nan" if math.isnan(v) else format(v, fmt)
    return str(value)


def _versions():
    out = {"python": platform.python_version()}
    for dist in ("artifact", "numpy", "scipy", "numba", "tomli"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = "unknown"
    return out


@dataclass
class ResultBundle:
    out_dir: Path
    files: dict = field(default_factory=dict)  # name -> sha256

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OutputError(f"cannot create output directory {self.out_dir}: {exc.strerror}") from exc

    def _write(self, name, text):
        path = self.out_dir / name
        try:
            path.write_text(text, encoding="utf-8", newline="")
        except OSError as exc:
            raise OutputError(f"cannot write {path}: {exc.strerror}") from exc
        self.files[name] = hashlib.sha256(text.encode("utf-8")).hexdigest()
        return path

    def write_table(self, name, columns, rows):
        """CSV with a header row; floats formatted per column."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([c.name for c in columns])
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"{name}: row has {len(row)} cells for {len(columns)} columns")
            w.writerow([_cell(v, c.fmt) for v, c in zip(row, columns)])
        return self._write(name, buf.getvalue())

    def write_summary(self, text):
        return self._write("summary.txt", text if text.endswith("\n") else text + "\n")

    def write_manifest(self, command, scenario, seed):
        """Written last: its presence marks a complete bundle."""
        manifest = {
            "command": command,
            "seed": seed,
            "scenario": scenario.source,
            "inputs_sha256": scenario.inputs_hash,
            "defaults_applied": list(scenario.defaults_applied),
            "versions": _versions(),
            "files": dict(sorted(self.files.items())),
        }
        text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        path = self.out_dir / "manifest.json"
        try:
            path.write_text(text, encoding="utf-8")
        except OSError as exc:
            raise OutputError(f"cannot write {path}: {exc.strerror}") from exc
        return path
