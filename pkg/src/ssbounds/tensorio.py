"""JSON tensor files, CSV/JSON bound reports, and experiment config loading."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .bounds import BOUND_NAMES, BoundReport
from .simlab import ExperimentConfig
from .tensor import LOSS_KINDS, LossTensor

TENSOR_VERSION = 1
REPORT_COLUMNS = ("n", "bound_name", "value", "C1", "C2", "gamma", "lambda", "feasible", "err", "L_n")


class SchemaError(ValueError):
    """Malformed tensor/config file; the message starts with the field path."""

    def __init__(self, path: str, msg: str):
        self.path = path
        super().__init__(f"{path}: {msg}")


# -- tensors ------------------------------------------------------------------

def _nested(a: np.ndarray, integral: bool):
    if integral:
        return a.astype(np.int64).tolist()
    return a.tolist()


def tensor_to_dict(t: LossTensor) -> dict:
    zero_one = t.loss_kind == "zero_one"
    masks = t.masks[0] if t.shared_masks else t.masks
    return {
        "version": TENSOR_VERSION,
        "loss_kind": t.loss_kind,
        "n": t.n,
        "k1": t.k1,
        "k2": t.k2,
        "shared_masks": bool(t.shared_masks),
        "masks": _nested(masks, True),
        "losses": _nested(t.values, zero_one),
        "metadata": t.metadata,
    }


def write_tensor(t: LossTensor, path) -> None:
    text = json.dumps(tensor_to_dict(t), separators=(",", ":"), allow_nan=False)
    Path(path).write_text(text + "\n")


def read_tensor(path) -> LossTensor:
    try:
        raw = Path(path).read_text()
    except OSError as e:
        raise SchemaError("$", f"cannot read {path}: {e.strerror}") from e
    try:
        d = json.loads(raw)
    except json.JSONDecodeError as e:
        raise SchemaError("$", f"not valid JSON ({e.msg} at line {e.lineno} column {e.colno})") from e
    return tensor_from_dict(d)


def _require(d: dict, key: str, kind, where: str = "$"):
    if key not in d:
        raise SchemaError(f"{where}.{key}", "missing field")
    v = d[key]
    if kind is int and (isinstance(v, bool) or not isinstance(v, int)):
        raise SchemaError(f"{where}.{key}", f"expected integer, got {type(v).__name__}")
    if kind is not int and not isinstance(v, kind):
        raise SchemaError(f"{where}.{key}", f"expected {kind.__name__}, got {type(v).__name__}")
    return v


def _locate_shape_error(obj, shape: tuple, path: str):
    """Walk nested lists to the first element that breaks ``shape``."""
    if not shape:
        if isinstance(obj, bool) or not isinstance(obj, (int, float)):
            raise SchemaError(path, f"expected a number, got {type(obj).__name__}")
        return
    if not isinstance(obj, list):
        raise SchemaError(path, f"expected a list of length {shape[0]}, got {type(obj).__name__}")
    if len(obj) != shape[0]:
        raise SchemaError(path, f"expected length {shape[0]}, got {len(obj)}")
    for i, item in enumerate(obj):
        _locate_shape_error(item, shape[1:], f"{path}[{i}]")


def _array(obj, shape: tuple, path: str) -> np.ndarray:
    try:
        a = np.asarray(obj, dtype=float)
        ok = a.shape == shape
    except (ValueError, TypeError):
        ok = False
    if not ok:
        _locate_shape_error(obj, shape, path)
        raise SchemaError(path, f"expected shape {shape}")
    return a


def _index(idx) -> str:
    return "".join(f"[{int(i)}]" for i in idx)


def tensor_from_dict(d) -> LossTensor:
    if not isinstance(d, dict):
        raise SchemaError("$", "top level must be an object")
    version = _require(d, "version", int)
    if version != TENSOR_VERSION:
        raise SchemaError("$.version", f"unsupported version {version} (expected {TENSOR_VERSION})")
    kind = _require(d, "loss_kind", str)
    if kind not in LOSS_KINDS:
        raise SchemaError("$.loss_kind", f"must be one of {', '.join(LOSS_KINDS)}")
    n, k1, k2 = (_require(d, key, int) for key in ("n", "k1", "k2"))
    for key, v in (("n", n), ("k1", k1), ("k2", k2)):
        if v < 1:
            raise SchemaError(f"$.{key}", "must be >= 1")
    shared = d.get("shared_masks", False)
    if not isinstance(shared, bool):
        raise SchemaError("$.shared_masks", "expected boolean")
    if "masks" not in d:
        raise SchemaError("$.masks", "missing field")
    masks = _array(d["masks"], (k2, n) if shared else (k1, k2, n), "$.masks")
    bad = np.argwhere((masks != 0) & (masks != 1))
    if bad.size:
        raise SchemaError(f"$.masks{_index(bad[0])}", f"mask entry {masks[tuple(bad[0])]:g} is not 0 or 1")
    if "losses" not in d:
        raise SchemaError("$.losses", "missing field")
    values = _array(d["losses"], (k1, k2, n, 2), "$.losses")
    if kind == "zero_one":
        bad = np.argwhere((values != 0) & (values != 1))
        rule = "not in {0, 1} for zero_one"
    elif kind == "unit_interval":
        bad = np.argwhere((values < 0) | (values > 1))
        rule = "outside [0, 1] for unit_interval"
    else:
        bad = np.argwhere(~np.isfinite(values))
        rule = "not finite"
    if bad.size:
        raise SchemaError(f"$.losses{_index(bad[0])}", f"loss value {values[tuple(bad[0])]:g} {rule}")
    meta = d.get("metadata", {})
    if not isinstance(meta, dict):
        raise SchemaError("$.metadata", "expected object")
    return LossTensor(values, masks.astype(np.int8), kind, shared, meta)


# -- reports ------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return format(float(x), ".9g")


def report_rows(reports) -> list[tuple]:
    """One row per (n, bound) plus the err row, sorted by (n, bound_name)."""
    rows = []
    for r in reports:
        rows.append((r.n, "err", r.err, None, None, None, None, True, r.err, r.L_n))
        for name, b in r.bounds.items():
            if name not in BOUND_NAMES:
                raise ValueError(f"unknown bound name {name!r}")
            rows.append((r.n, name, b.value, b.C1, b.C2, b.gamma, b.lam, b.feasible, r.err, r.L_n))
    rows.sort(key=lambda row: (row[0], row[1]))
    return rows


def format_report(reports, fmt: str = "csv") -> str:
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to emit")
    rows = report_rows(reports)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
        return buf.getvalue()
    if fmt == "json":
        out = []
        for row in rows:
            rec = {}
            for col, x in zip(REPORT_COLUMNS, row):
                if isinstance(x, float):
                    x = float(_fmt(x))
                rec[col] = x
            out.append(rec)
        return json.dumps(out, indent=1) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def emit_report(reports, path, fmt: str = "csv") -> None:
    Path(path).write_text(format_report(reports, fmt))


def read_report(path) -> list[dict]:
    """Parse a CSV report back into typed rows (empty cells become None)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
            raise SchemaError("$.header", f"expected {','.join(REPORT_COLUMNS)}")
        out = []
        for rec in reader:
            row = {}
            for col in REPORT_COLUMNS:
                v = rec[col]
                if col == "bound_name":
                    row[col] = v
                elif col == "n":
                    row[col] = int(v)
                elif col == "feasible":
                    row[col] = v == "true"
                else:
                    row[col] = None if v == "" else float(v)
            out.append(row)
    return out


def write_levels(results: dict, path) -> None:
    """Per-level chained-bound diagnostics: bound_name,level,term,mean_mi."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("bound_name", "level", "term", "mean_mi"))
    for name in sorted(results):
        res = results[name]
        for k, term, mi in zip(res.levels, res.level_terms, res.level_mi.mean(axis=1)):
            w.writerow((name, k, _fmt(term), _fmt(mi)))
        w.writerow((name, "tail", _fmt(res.tail), ""))
    Path(path).write_text(buf.getvalue())


# -- configs ------------------------------------------------------------------

def load_config(path) -> ExperimentConfig:
    try:
        d = json.loads(Path(path).read_text())
    except OSError as e:
        raise SchemaError("$", f"cannot read {path}: {e.strerror}") from e
    except json.JSONDecodeError as e:
        raise SchemaError("$", f"not valid JSON ({e.msg} at line {e.lineno})") from e
    if not isinstance(d, dict):
        raise SchemaError("$", "config must be an object")
    try:
        return ExperimentConfig.from_dict(d)
    except (TypeError, ValueError) as e:
        raise SchemaError("$", str(e)) from e
