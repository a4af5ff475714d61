"""Deterministic serialization shared by the harness and the CLI.

Floats are rendered with repr (shortest round-trip form), JSON keys are
sorted, and non-finite values map to null, so identical inputs always
produce byte-identical artifacts.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math

import numpy as np


def jsonable(obj):
    """Recursively convert to plain JSON types; non-finite floats become None."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def canonical_json(obj):
    """Minified sorted-key JSON; the canonical form used for hashing."""
    return json.dumps(jsonable(obj), sort_keys=True, separators=(",", ":"))


def config_sha256(config):
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def dump_json(obj):
    """Pretty sorted-key JSON with a trailing newline."""
    return json.dumps(jsonable(obj), sort_keys=True, indent=2) + "\n"


def format_cell(value):
    """One CSV cell: repr for floats, lowercase booleans, '' for None."""
    if value is None:
        return ""
    if isinstance(value, (np.bool_, bool)):
        return "true" if value else "false"
    if isinstance(value, (np.integer, int)):
        return str(int(value))
    if isinstance(value, (np.floating, float)):
        return repr(float(value))
    return str(value)


def csv_text(header, rows, preamble=()):
    """Render rows to CSV with '#'-prefixed preamble lines."""
    out = io.StringIO()
    for line in preamble:
        out.write("# %s\n" % line)
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_cell(v) for v in row])
    return out.getvalue()
