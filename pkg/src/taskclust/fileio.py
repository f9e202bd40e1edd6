"""Readers and writers for the pipeline's on-disk artifacts.

Formats are deliberately plain so stage outputs can be inspected or edited
by hand: CSV for matrices and sweep grids, JSON for everything structured.
Floats are serialized with repr (shortest round-trip form), so rewriting
the same object always produces byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .bench import SweepCell
from .errors import InputError
from .filtering import PartialSimilarity
from .learning import KINDS, ClusterModel
from .spectral import TaskPartition
from .transfer import TaskDataset, TransferMatrix

SPLITS = ("train", "valid", "test")


def require_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise InputError("missing-input", f"required file {p} does not exist")
    return p


def require_dir(path) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise InputError("missing-input", f"required directory {p} does not exist")
    return p


def _fmt(x) -> str:
    return repr(float(x))


def _pyify(obj):
    """Recursively convert numpy scalars/arrays so json can serialize them."""
    if isinstance(obj, np.ndarray):
        return [_pyify(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, dict):
        return {k: _pyify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_pyify(v) for v in obj]
    return obj


def write_json(obj, path) -> None:
    text = json.dumps(_pyify(obj), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n")


def read_json(path):
    p = require_file(path)
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise InputError("bad-format", f"{p} is not valid JSON: {exc}") from exc


# ---------------------------------------------------------------------------
# task datasets


def write_task_json(ds: TaskDataset, path) -> None:
    doc = {"task_id": ds.task_id, "label_count": ds.label_count, "splits": {}}
    for name in SPLITS:
        X, y = getattr(ds, name)
        doc["splits"][name] = [
            {"x": [float(v) for v in row], "y": int(lab)} for row, lab in zip(X, y)
        ]
    write_json(doc, path)


def read_task_json(path) -> TaskDataset:
    doc = read_json(path)
    try:
        splits = {}
        for name in SPLITS:
            rows = doc["splits"][name]
            X = np.array([r["x"] for r in rows], dtype=float)
            y = np.array([r["y"] for r in rows], dtype=int)
            if X.size == 0:
                X = X.reshape(0, _first_dim(doc))
            splits[name] = (X, y)
        return TaskDataset(
            task_id=str(doc["task_id"]),
            label_count=int(doc["label_count"]),
            train=splits["train"],
            valid=splits["valid"],
            test=splits["test"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError("bad-format", f"{path} is not a task dataset file: {exc}") from exc


def _first_dim(doc) -> int:
    for name in SPLITS:
        for r in doc["splits"][name]:
            return len(r["x"])
    return 0


def read_task_dir(path) -> list[TaskDataset]:
    """All task files in a directory, sorted by file name."""
    p = require_dir(path)
    files = sorted(p.glob("*.json"))
    tasks = [read_task_json(f) for f in files if f.name != "membership.json"]
    if not tasks:
        raise InputError("missing-input", f"no task files found in {p}")
    return tasks


# ---------------------------------------------------------------------------
# transfer scores and filtered similarities


def _read_header(lines, path) -> int:
    if not lines or not lines[0].startswith("#n="):
        raise InputError("bad-format", f"{path} must start with a '#n=<int>' header")
    try:
        n = int(lines[0][3:])
    except ValueError as exc:
        raise InputError("bad-format", f"{path} has a malformed size header") from exc
    if n < 1:
        raise InputError("bad-format", f"{path} declares a non-positive size")
    return n


def write_transfer_csv(tm: TransferMatrix, path) -> None:
    lines = [f"#n={tm.n}"]
    for i in range(tm.n):
        for j in range(tm.n):
            if i != j and tm.observed[i, j]:
                lines.append(f"{i},{j},{_fmt(tm.scores[i, j])}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_transfer_csv(path) -> TransferMatrix:
    p = require_file(path)
    lines = p.read_text().splitlines()
    n = _read_header(lines, p)
    scores = np.eye(n)
    observed = np.eye(n, dtype=bool)
    for line in lines[1:]:
        if not line.strip():
            continue
        parts = line.split(",")
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except (IndexError, ValueError) as exc:
            raise InputError("bad-format", f"{p}: bad row {line!r}") from exc
        if len(parts) != 3 or not (0 <= i < n and 0 <= j < n) or i == j:
            raise InputError("bad-format", f"{p}: bad row {line!r}")
        scores[i, j] = v
        observed[i, j] = True
    return TransferMatrix(scores=scores, observed=observed)


def write_partial_csv(ps: PartialSimilarity, path) -> None:
    lines = [f"#n={ps.n}"]
    for i in range(ps.n):
        for j in range(i + 1, ps.n):
            if ps.observed[i, j]:
                lines.append(f"{i},{j},{int(ps.values[i, j])}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_partial_csv(path) -> PartialSimilarity:
    p = require_file(path)
    lines = p.read_text().splitlines()
    n = _read_header(lines, p)
    values = np.eye(n, dtype=np.int8)
    observed = np.eye(n, dtype=bool)
    for line in lines[1:]:
        if not line.strip():
            continue
        parts = line.split(",")
        try:
            i, j, v = int(parts[0]), int(parts[1]), int(parts[2])
        except (IndexError, ValueError) as exc:
            raise InputError("bad-format", f"{p}: bad row {line!r}") from exc
        if len(parts) != 3 or not (0 <= i < j < n) or v not in (0, 1):
            raise InputError("bad-format", f"{p}: bad row {line!r}")
        values[i, j] = values[j, i] = v
        observed[i, j] = observed[j, i] = True
    return PartialSimilarity(values=values, observed=observed)


# ---------------------------------------------------------------------------
# dense matrices


def write_dense_csv(M: np.ndarray, path) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    lines = [",".join(_fmt(v) for v in row) for row in M]
    Path(path).write_text("\n".join(lines) + "\n")


def read_dense_csv(path) -> np.ndarray:
    p = require_file(path)
    rows = []
    for line in p.read_text().splitlines():
        if not line.strip():
            continue
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError as exc:
            raise InputError("bad-format", f"{p}: bad row {line!r}") from exc
    if not rows or len({len(r) for r in rows}) != 1:
        raise InputError("bad-format", f"{p} is not a rectangular matrix")
    return np.array(rows, dtype=float)


# ---------------------------------------------------------------------------
# partitions


def write_partition_json(part: TaskPartition, path) -> None:
    write_json(
        {"n": part.n, "K": part.K, "assignment": part.assignment, "seed": part.seed},
        path,
    )


def read_partition_json(path) -> TaskPartition:
    doc = read_json(path)
    try:
        return TaskPartition(
            n=int(doc["n"]),
            K=int(doc["K"]),
            assignment=np.array(doc["assignment"], dtype=int),
            seed=int(doc["seed"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError("bad-format", f"{path} is not a partition file: {exc}") from exc


# ---------------------------------------------------------------------------
# phase sweeps


def write_sweep_csv(cells: list[SweepCell], path) -> None:
    lines = ["n,k,m1,m2,trials,recovered_count,prob"]
    for c in cells:
        lines.append(
            f"{c.n},{c.k},{c.m1},{c.m2},{c.trials},{c.recovered_count},{_fmt(c.prob)}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_sweep_csv(path) -> list[SweepCell]:
    p = require_file(path)
    lines = p.read_text().splitlines()
    if not lines or lines[0] != "n,k,m1,m2,trials,recovered_count,prob":
        raise InputError("bad-format", f"{p} is missing the sweep header")
    cells = []
    for line in lines[1:]:
        if not line.strip():
            continue
        parts = line.split(",")
        try:
            n, k, m1, m2, trials, rec = (int(v) for v in parts[:6])
        except (IndexError, ValueError) as exc:
            raise InputError("bad-format", f"{p}: bad row {line!r}") from exc
        if len(parts) != 7:
            raise InputError("bad-format", f"{p}: bad row {line!r}")
        cells.append(SweepCell(n=n, k=k, m1=m1, m2=m2, trials=trials, recovered_count=rec))
    return cells


# ---------------------------------------------------------------------------
# cluster models


def model_to_doc(model: ClusterModel) -> dict:
    doc = {
        "kind": model.kind,
        "cluster_id": model.cluster_id,
        "shapes": {"W_enc": list(model.W_enc.shape), "b_enc": list(model.b_enc.shape)},
        "W_enc": model.W_enc,
        "b_enc": model.b_enc,
    }
    if model.W_cls is not None:
        doc["W_cls"] = model.W_cls
        doc["b_cls"] = model.b_cls
        doc["shapes"]["W_cls"] = list(model.W_cls.shape)
    if model.label_count is not None:
        doc["label_count"] = model.label_count
    if model.heads:
        doc["heads"] = {tid: [W, b] for tid, (W, b) in model.heads.items()}
    return doc


def write_model_json(model: ClusterModel, path) -> None:
    write_json(model_to_doc(model), path)


def read_model_json(path) -> ClusterModel:
    doc = read_json(path)
    try:
        if doc["kind"] not in KINDS:
            raise InputError("bad-format", f"{path}: unknown model kind {doc['kind']!r}")
        heads = {
            tid: (np.array(W, dtype=float), np.array(b, dtype=float))
            for tid, (W, b) in doc.get("heads", {}).items()
        }
        model = ClusterModel(
            cluster_id=int(doc["cluster_id"]),
            kind=str(doc["kind"]),
            W_enc=np.array(doc["W_enc"], dtype=float),
            b_enc=np.array(doc["b_enc"], dtype=float),
            W_cls=np.array(doc["W_cls"], dtype=float) if "W_cls" in doc else None,
            b_cls=np.array(doc["b_cls"], dtype=float) if "b_cls" in doc else None,
            heads=heads,
            label_count=int(doc["label_count"]) if "label_count" in doc else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError("bad-format", f"{path} is not a model file: {exc}") from exc
    for name, shape in doc.get("shapes", {}).items():
        arr = getattr(model, name)
        if list(arr.shape) != list(shape):
            raise InputError("bad-format", f"{path}: {name} shape {arr.shape} != {shape}")
    return model
