"""Deterministic JSON reports, atomic writes and report diffing."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile

import numpy as np

from . import __version__
from .config import RunConfig
from .errors import SchemaError

SCHEMA_VERSION = 1


def clean(obj):
    """Convert numpy scalars/arrays to plain JSON values; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items() if not str(k).startswith("_")}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def build_report(cfg: RunConfig, results: list) -> dict:
    failures = [(r.name, c) for r in results for c in r.checks if not c.passed]
    first = None
    if failures:
        suite, check = failures[0]
        first = {"suite": suite, **check.to_dict()}
    return clean({
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "krstab", "version": __version__},
        "config": cfg.canonical(),
        "config_hash": cfg.digest(),
        "seeds": list(cfg.seeds),
        "suites": [r.to_dict() for r in results],
        "passed": not failures,
        "first_failure": first,
    })


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def checks_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["suite", "check", "value", "tolerance", "passed"])
    for suite in report["suites"]:
        for c in suite["checks"]:
            w.writerow([suite["name"], c["name"], c["value"], c["tolerance"], int(c["passed"])])
    return buf.getvalue()


def write_atomic(path: str, text: str) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".stab-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _leaves(obj, prefix=""):
    if isinstance(obj, dict):
        for k in sorted(obj):
            yield from _leaves(obj[k], f"{prefix}.{k}" if prefix else k)
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _leaves(v, f"{prefix}[{i}]")
    else:
        yield prefix, obj


def report_diff(old: dict, new: dict, rtol: float, atol: float = 0.0) -> list:
    """Fields whose values drift beyond ``rtol`` (relative) plus ``atol``.

    Non-numeric fields drift when they differ at all; fields present in only
    one report are listed with the missing side as None.
    """
    if old.get("schema_version") != new.get("schema_version"):
        raise SchemaError(f"schema versions differ: {old.get('schema_version')} vs {new.get('schema_version')}")
    a, b = dict(_leaves(old)), dict(_leaves(new))
    drift = []
    for key in sorted(set(a) | set(b)):
        x, y = a.get(key), b.get(key)
        numeric = all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in (x, y))
        if numeric:
            diff = abs(x - y)
            if diff > rtol * max(abs(x), abs(y)) + atol:
                rel = diff / max(abs(x), abs(y))
                drift.append({"field": key, "old": x, "new": y, "rel": rel})
        elif x != y:
            drift.append({"field": key, "old": x, "new": y, "rel": None})
    return drift
