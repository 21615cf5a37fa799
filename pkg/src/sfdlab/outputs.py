"""CSV and manifest writers for command-line runs.

Numbers are written with 17 significant digits so identical runs give
byte-identical files. The manifest is written last, through a temporary file
and an atomic rename.
"""

from __future__ import annotations

import json
import os
import tempfile
from importlib import metadata
from pathlib import Path

import numpy as np

from .grid import Field, field_to_csv

__all__ = [
    "code_version",
    "format_number",
    "write_csv",
    "write_trajectory",
    "write_snapshots",
    "write_field",
    "write_phase_csv",
    "write_manifest",
    "TRAJECTORY_HEADER",
    "PHASE_HEADER",
]

TRAJECTORY_HEADER = ("t", "mass", "ball_mass", "linf", "min", "max")
PHASE_HEADER = ("s", "n", "classification", "margin", "final_mass", "slope")


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def format_number(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_csv(path, header, rows) -> Path:
    """Write ``rows`` under ``header``; an empty ``rows`` gives a header-only file."""
    path = Path(path)
    lines = [",".join(header)]
    lines.extend(",".join(format_number(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")
    return path


def write_trajectory(path, summaries: np.ndarray) -> Path:
    return write_csv(path, TRAJECTORY_HEADER, np.asarray(summaries).reshape(-1, len(TRAJECTORY_HEADER)).tolist())


def write_field(path, f: Field) -> Path:
    path = Path(path)
    path.write_text(field_to_csv(f))
    return path


def write_snapshots(out_dir, snapshots: dict) -> list[Path]:
    """``field_t<k>.csv`` for the k-th sample time in increasing order."""
    out_dir = Path(out_dir)
    return [write_field(out_dir / f"field_t{k}.csv", snapshots[t]) for k, t in enumerate(sorted(snapshots))]


def write_phase_csv(path, points) -> Path:
    rows = []
    for p in points:
        r = p.row()
        rows.append([r[h] for h in PHASE_HEADER])
    return write_csv(path, PHASE_HEADER, rows)


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, float) and not np.isfinite(v):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def write_manifest(out_dir, entries: dict) -> Path:
    """Write the flat ``manifest.json`` atomically."""
    out_dir = Path(out_dir)
    data = {k: _jsonable(v) for k, v in entries.items()}
    fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=".manifest.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(data, fh, indent=2)
            fh.write("\n")
        os.replace(tmp, out_dir / "manifest.json")
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return out_dir / "manifest.json"
