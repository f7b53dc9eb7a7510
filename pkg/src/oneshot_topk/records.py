"""Result records and their JSON / CSV serialisation.

Every float is written with 17 significant digits so that parsing the
output recovers the exact double.
"""

import csv
import hashlib
import io
import json
import math
from importlib import metadata

import numpy as np


def _build_id():
    try:
        version = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        version = "0+unknown"
    return f"oneshot_topk-{version}"


BUILD_ID = _build_id()


def format_float(v):
    v = float(v)
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    text = format(v, ".17g")
    if not any(c in text for c in ".en"):
        text += ".0"
    return text


def _plain(obj):
    """Converts numpy scalars/arrays and tuples/sets into JSON-ready Python values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (set, frozenset)):
        return [_plain(v) for v in sorted(obj)]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (list, dict)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = (",\n").join(pad + _encode(v, indent, level + 1) for v in obj)
        return "[\n" + items + "\n" + end + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = (",\n").join(
            f"{pad}{_encode(str(k), indent, level + 1)}: {_encode(v, indent, level + 1)}" for k, v in obj.items()
        )
        return "{\n" + items + "\n" + end + "}"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps_json(obj, indent=2):
    return _encode(_plain(obj), indent, 0) + "\n"


def config_hash(config):
    """SHA-256 of the canonical JSON form of ``config``."""
    canon = dumps_json(dict(sorted(_plain(config).items())), indent=0)
    return hashlib.sha256(canon.encode()).hexdigest()


def result_record(command, config, seed, metrics, table=None):
    """Assembles a result record.

    Args:
      command: subcommand name.
      config: the parameters that determine the numbers (hashed for provenance).
      seed: base seed.
      metrics: named scalar or small structured results.
      table: optional list of row dicts for per-trial / per-grid-point output.
    """
    rec = {
        "command": command,
        "metrics": metrics,
        "provenance": {"config_hash": config_hash(config), "seed": seed, "build": BUILD_ID},
        "config": config,
    }
    if table is not None:
        rec["table"] = table
    return rec


def _csv_cell(v):
    if isinstance(v, bool) or v is None:
        return "" if v is None else str(v).lower()
    if isinstance(v, float):
        return format_float(v)
    if isinstance(v, (list, tuple)):
        return " ".join(_csv_cell(x) for x in v)
    return str(v)


def dumps_csv(record):
    """CSV rendering: the record's table if present, else a single row of scalar metrics."""
    rec = _plain(record)
    rows = rec.get("table")
    if not rows:
        rows = [{k: v for k, v in rec["metrics"].items() if not isinstance(v, dict)}]
    header = list(rows[0])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_csv_cell(row.get(h)) for h in header])
    return buf.getvalue()
