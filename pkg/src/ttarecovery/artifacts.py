"""Deterministic CSV/JSON writers; every artifact carries its provenance block."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

META_PREFIX = "# meta: "


def plain(obj: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    if isinstance(obj, Mapping):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(plain(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        x = float(v)
        return repr(x) if math.isfinite(x) else ("nan" if math.isnan(x) else
                                                 ("inf" if x > 0 else "-inf"))
    return str(v)


def write_json(path: str | Path, meta: Mapping[str, Any], result: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps({"meta": meta, "result": result}))
    return path


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence[Any] | Mapping],
              meta: Mapping[str, Any] | None = None) -> Path:
    """CSV with an optional leading ``# meta:`` comment line holding compact JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if meta is not None:
            fh.write(META_PREFIX + json.dumps(plain(meta), sort_keys=True,
                                              separators=(",", ":")) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            if isinstance(r, Mapping):
                r = [r.get(c) for c in columns]
            w.writerow([cell(v) for v in r])
    return path


def read_meta(path: str | Path) -> dict[str, Any] | None:
    """Provenance block of a JSON or CSV artifact, or ``None``."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if text.startswith(META_PREFIX):
        return json.loads(text.splitlines()[0][len(META_PREFIX):])
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        return None
    return doc.get("meta") if isinstance(doc, dict) else None
