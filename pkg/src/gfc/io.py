"""CSV and JSON output helpers.

CSV files carry one leading ``# {...}`` comment line with the run
configuration, then a header and rows.  Floats use 17 significant digits and a
'.' decimal separator regardless of locale.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable, Sequence


def fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int) or (hasattr(v, "dtype") and v.dtype.kind in "iu"):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return format(v, ".17g")


def csv_text(columns: Sequence[str], rows: Iterable[Sequence], meta: dict | None = None) -> str:
    lines = []
    if meta is not None:
        lines.append("# " + json.dumps(meta, sort_keys=True, default=_default))
    lines.append(",".join(columns))
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def _default(obj):
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    raise TypeError(f"not JSON serializable: {obj!r}")


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n"


def write_outputs(path: str | Path, columns, rows, meta: dict) -> None:
    """Write ``path`` (CSV with embedded config) and ``path``.json (metadata)."""
    path = Path(path)
    path.write_text(csv_text(columns, rows, meta))
    Path(str(path) + ".json").write_text(json_text(meta))
