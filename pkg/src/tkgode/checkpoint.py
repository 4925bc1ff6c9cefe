"""Plain-text checkpoints.

Layout::

    tkgode-checkpoint 1
    config {"dim": 16, ...}
    meta {"num_entities": 20, ...}
    param H_global 28 16
    <row of repr floats>
    ...

Floats are written with ``repr`` so loading restores them bit for bit and
two identical runs produce identical files.
"""
from __future__ import annotations

import json

import numpy as np

from .exceptions import ParseError, ShapeError
from .model import ModelParams

__all__ = ["save_checkpoint", "load_checkpoint", "check_compatible"]

MAGIC = "tkgode-checkpoint"
VERSION = 1


def save_checkpoint(path, params: ModelParams, config: dict | None = None) -> None:
    meta = {
        "num_entities": params.num_entities,
        "relation_space": params.relation_space,
        "dim": params.dim,
        "n_layers": params.n_layers,
        "decoder": params.decoder,
    }
    lines = [f"{MAGIC} {VERSION}",
             "config " + json.dumps(config or {}, sort_keys=True),
             "meta " + json.dumps(meta, sort_keys=True)]
    for name in params.names:
        arr = params.arrays[name]
        lines.append(f"param {name} {arr.shape[0]} {arr.shape[1]}")
        lines.extend(" ".join(repr(float(x)) for x in row) for row in arr)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    """Returns ``(params, config)``."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != f"{MAGIC} {VERSION}":
        raise ParseError(f"{path}: not a version-{VERSION} checkpoint", line=1)
    try:
        config = json.loads(lines[1].removeprefix("config "))
        meta = json.loads(lines[2].removeprefix("meta "))
    except (IndexError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: bad header ({exc})") from None
    arrays = {}
    i = 3
    while i < len(lines):
        head = lines[i].split()
        if len(head) != 4 or head[0] != "param":
            raise ParseError(f"{path}: expected a param header", line=i + 1)
        name, rows, cols = head[1], int(head[2]), int(head[3])
        body = lines[i + 1:i + 1 + rows]
        if len(body) != rows:
            raise ParseError(f"{path}: {name} is truncated", line=i + 1)
        try:
            arr = np.array([[float(x) for x in row.split()] for row in body], dtype=np.float64)
        except ValueError:
            raise ParseError(f"{path}: non-numeric entry in {name}", line=i + 1) from None
        if arr.shape != (rows, cols):
            raise ParseError(f"{path}: {name} rows do not have {cols} columns", line=i + 1)
        arrays[name] = arr
        i += 1 + rows
    params = ModelParams(arrays, meta["num_entities"], meta["relation_space"], meta["dim"],
                         meta["n_layers"], meta["decoder"])
    return params, config


def check_compatible(params: ModelParams, num_entities: int, relation_space: int,
                     dim: int, n_layers: int, decoder: str) -> None:
    """Raise :class:`ShapeError` listing expected vs found shapes on mismatch."""
    ref = ModelParams.__new__(ModelParams)
    ref.num_entities, ref.relation_space, ref.dim = num_entities, relation_space, dim
    ref.n_layers, ref.decoder = n_layers, decoder
    expected = ref.expected_shapes()
    found = {n: a.shape for n, a in params.arrays.items()}
    diffs = []
    for name in sorted(set(expected) | set(found)):
        e, f = expected.get(name), found.get(name)
        if e != f:
            diffs.append(f"{name}: expected {e}, found {f}")
    if diffs:
        raise ShapeError("checkpoint incompatible with config; " + "; ".join(diffs))
