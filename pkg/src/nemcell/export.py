"""CSV and JSON writers.  Every file carries the parameter block that produced it."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

SCHEMA_VERSION = "1.0"
PROFILE_HEADER = ("x", "q1", "q2", "q3")
DIAGRAM_HEADER = ("branch_id", "lambda", "t", "energy", "nu", "mu", "q3_mid")


def _clean(obj: Any) -> Any:
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def params_line(params: dict) -> str:
    return "# params: " + json.dumps(_clean(params), sort_keys=True, separators=(",", ":"))


def read_params(path: str | Path) -> dict:
    with open(path) as fh:
        first = fh.readline()
    if not first.startswith("# params: "):
        raise ValueError(f"{path} has no parameter line")
    return json.loads(first[len("# params: "):])


def _fmt(v: Any) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]], params: dict) -> Path:
    path = Path(path)
    lines = [params_line(params), ",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]


def write_profile_csv(path: str | Path, profile, params: dict) -> Path:
    x = profile.grid.nodes
    q = profile.q
    return write_csv(path, PROFILE_HEADER, ((x[i], q[i, 0], q[i, 1], q[i, 2]) for i in range(x.size)), params)


def write_json(path: str | Path, payload: dict, params: dict) -> Path:
    path = Path(path)
    doc = {"schema_version": SCHEMA_VERSION, "parameters": params, **payload}
    path.write_text(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n")
    return path
