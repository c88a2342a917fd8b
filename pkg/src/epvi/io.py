"""Plain-text file formats: JSON documents and columnar numeric tables."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .models.base import DataShard


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=1, default=_default) + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def read_header(path) -> dict:
    with Path(path).open() as fh:
        return json.loads(fh.readline().lstrip("#").strip())


def save_dataset(path, data: DataShard, family: str) -> None:
    """One row per observation: input columns first, then output columns."""
    X = np.zeros((data.n, 0)) if data.X is None else data.X
    Y = data.Y.reshape(data.n, -1)
    header = {
        "family": family,
        "n": data.n,
        "n_inputs": 0 if data.X is None else X.shape[1],
        "n_outputs": Y.shape[1],
        "y_vector": data.Y.ndim == 1,
        "shard_id": int(data.shard_id),
    }
    np.savetxt(path, np.hstack([X, Y]), header=json.dumps(header), fmt="%.17g")


def load_dataset(path) -> tuple[DataShard, dict]:
    header = read_header(path)
    table = np.loadtxt(path, ndmin=2).reshape(header["n"], header["n_inputs"] + header["n_outputs"])
    p = header["n_inputs"]
    X = table[:, :p] if p else None
    Y = table[:, p:]
    if header.get("y_vector"):
        Y = Y[:, 0]
    return DataShard(X, Y, header.get("shard_id", 0)), header


def save_draws(path, draws: np.ndarray, provenance: dict) -> None:
    np.savetxt(path, np.atleast_2d(draws).reshape(len(draws), -1), header=json.dumps(provenance), fmt="%.17g")


def load_draws(path) -> tuple[np.ndarray, dict]:
    header = read_header(path)
    return np.loadtxt(path, ndmin=2), header
