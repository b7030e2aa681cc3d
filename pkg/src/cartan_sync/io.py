"""JSON graph/truth/solution files and the results CSV.

Vertices are 1-based on disk and 0-based in memory. Floats are written with
Python's shortest round-trip representation, so ``parse(write(x)) == x``.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from typing import Iterable, List, Optional, Tuple

import numpy as np

from .errors import ConfigInvalid, DimensionMismatch
from .groups import MMGElement, RigidMotion
from .sync import Edge, GroupSpec, MeasurementGraph, SyncSolution

CSV_HEADER = ["method", "group", "n", "d", "l", "p", "snr_db", "outlier_rate", "lambda",
              "trial", "seed", "mse", "runtime_ms", "error"]


class FileFormatError(ConfigInvalid):
    """Unreadable or malformed input file (reported as ``IOError``)."""

    @property
    def token(self) -> str:
        return "IOError"


def _plain(x):
    """JSON-friendly copy of numpy containers and scalars."""
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (float, np.floating)):
        # strict JSON has no inf/nan; such values are written as null
        return float(x) if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def group_to_json(g: GroupSpec) -> dict:
    out = {"kind": g.kind, "d": g.d}
    if g.kind == "MMG":
        out["l"] = g.l
    return out


def group_from_json(obj: dict) -> GroupSpec:
    return GroupSpec(obj["kind"], int(obj["d"]), int(obj.get("l", 1)))


def element_to_json(g) -> dict:
    if isinstance(g, RigidMotion):
        return {"mu": g.mu.tolist(), "b": g.b.tolist()}
    if isinstance(g, MMGElement):
        return {"mu": g.mu.tolist(), "eta": g.eta.tolist(), "B": g.B.tolist()}
    return {"mu": np.asarray(g).tolist()}


def element_from_json(obj: dict, group: GroupSpec):
    if group.kind == "SE":
        return RigidMotion(np.array(obj["mu"], dtype=float), np.array(obj["b"], dtype=float))
    if group.kind == "MMG":
        return MMGElement(np.array(obj["mu"], dtype=float), np.array(obj["eta"], dtype=float),
                          np.array(obj["B"], dtype=float))
    return group.check(np.array(obj["mu"], dtype=float))


def _dump(obj, path: str) -> None:
    text = json.dumps(_plain(obj), indent=1, allow_nan=False) + "\n"
    atomic_write(path, text)


def _load(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, ValueError) as exc:
        raise FileFormatError(f"cannot read {path}: {exc}") from exc


def atomic_write(path: str, text: str) -> None:
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------
# Graphs, truth, solutions
# --------------------------------------------------------------------------


def graph_to_json(graph: MeasurementGraph, meta: Optional[dict] = None) -> dict:
    out = {"group": group_to_json(graph.group), "n": graph.n,
           "edges": [{"i": e.i + 1, "j": e.j + 1, "w": e.w, "g": element_to_json(e.g)} for e in graph.edges]}
    if meta:
        out["meta"] = meta
    return out


def graph_from_json(obj: dict) -> Tuple[MeasurementGraph, dict]:
    try:
        group = group_from_json(obj["group"])
        edges = [Edge(int(e["i"]) - 1, int(e["j"]) - 1, float(e["w"]), element_from_json(e["g"], group))
                 for e in obj["edges"]]
        n = int(obj["n"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigInvalid):
            raise
        raise FileFormatError(f"malformed graph: {exc!r}") from exc
    return MeasurementGraph(n, group, edges), dict(obj.get("meta", {}))


def write_graph(path: str, graph: MeasurementGraph, meta: Optional[dict] = None) -> None:
    _dump(graph_to_json(graph, meta), path)


def read_graph(path: str) -> Tuple[MeasurementGraph, dict]:
    return graph_from_json(_load(path))


def _elements_from(obj: dict) -> Tuple[GroupSpec, list]:
    try:
        group = group_from_json(obj["group"])
        els = [element_from_json(e, group) for e in obj["elements"]]
        if "n" in obj and int(obj["n"]) != len(els):
            raise DimensionMismatch(f"file declares n = {obj['n']} but holds {len(els)} elements")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, (ConfigInvalid, DimensionMismatch)):
            raise
        raise FileFormatError(f"malformed element list: {exc!r}") from exc
    return group, els


def write_truth(path: str, group: GroupSpec, elements: Iterable, meta: Optional[dict] = None) -> None:
    els = list(elements)
    out = {"group": group_to_json(group), "n": len(els), "elements": [element_to_json(g) for g in els]}
    if meta:
        out["meta"] = meta
    _dump(out, path)


def read_truth(path: str) -> Tuple[GroupSpec, list]:
    return _elements_from(_load(path))


def write_solution(path: str, group: GroupSpec, sol: SyncSolution, meta: Optional[dict] = None) -> None:
    out = {"group": group_to_json(group), "n": len(sol.estimates),
           "elements": [element_to_json(g) for g in sol.estimates],
           "lambda_used": sol.lambda_used, "diagnostics": sol.diagnostics}
    if meta:
        out["meta"] = meta
    _dump(out, path)


def read_solution(path: str) -> Tuple[GroupSpec, SyncSolution, dict]:
    obj = _load(path)
    group, els = _elements_from(obj)
    lam = obj.get("lambda_used")
    return group, SyncSolution(els, None if lam is None else float(lam), dict(obj.get("diagnostics", {}))), \
        dict(obj.get("meta", {}))


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def record_row(rec) -> List[str]:
    return [_fmt(v) for v in (rec.method, rec.group, rec.n, rec.d, rec.l, rec.p, rec.snr_db,
                              rec.outlier_rate, rec.lam, rec.trial, rec.seed, rec.mse,
                              rec.runtime_ms, rec.error)]


def _rows_text(rows: Iterable[List[str]], header: bool) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(CSV_HEADER)
    w.writerows(rows)
    return buf.getvalue()


def append_records(path: str, records: Iterable) -> None:
    """Append rows; the file is rewritten through a temporary copy, so readers
    never observe a partial row."""
    old = ""
    if os.path.exists(path):
        with open(path, encoding="utf-8", newline="") as fh:
            old = fh.read()
        if old and not old.startswith(",".join(CSV_HEADER)):
            raise FileFormatError(f"{path} is not a results CSV")
    text = _rows_text((record_row(r) for r in records), header=not old)
    atomic_write(path, old + text)


def write_records(path: str, records: Iterable) -> None:
    atomic_write(path, _rows_text((record_row(r) for r in records), header=True))


def read_records(path: str) -> List[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
