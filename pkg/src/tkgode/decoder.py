"""DistMult and TuckER triplet scoring."""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .exceptions import ConfigError, ShapeError

__all__ = [
    "DECODERS",
    "distmult_score",
    "tucker_score",
    "superdiagonal_core",
    "init_core",
    "score_queries",
    "score_all_objects",
]

DECODERS = ("distmult", "tucker")


def _vectors(*vs):
    out = [np.asarray(v, dtype=np.float64).reshape(-1) for v in vs]
    if len({v.size for v in out}) != 1:
        raise ShapeError("score vectors must share one dimension")
    return out


def distmult_score(h_s, h_r, h_o) -> float:
    h_s, h_r, h_o = _vectors(h_s, h_r, h_o)
    # h_s * h_o first so swapping subject and object is bitwise symmetric
    return float(np.sum(h_r * (h_s * h_o)))


def tucker_score(h_s, h_r, h_o, core) -> float:
    """``sum_ijk core[i, j, k] h_s[i] h_r[j] h_o[k]``."""
    h_s, h_r, h_o = _vectors(h_s, h_r, h_o)
    core = np.asarray(core, dtype=np.float64)
    d = h_s.size
    if core.shape == (d * d, d):
        core = core.reshape(d, d, d)
    if core.shape != (d, d, d):
        raise ShapeError(f"core shape {core.shape} does not match dimension {d}")
    return float(np.einsum("ijk,i,j,k->", core, h_s, h_r, h_o))


def superdiagonal_core(d: int) -> np.ndarray:
    core = np.zeros((d, d, d))
    core[np.arange(d), np.arange(d), np.arange(d)] = 1.0
    return core


def init_core(rng: np.random.Generator, d: int) -> np.ndarray:
    """Core tensor flattened to ``(d * d, d)``, row ``i * d + j`` for modes 1-2."""
    return rng.uniform(-0.1, 0.1, size=(d * d, d))


def score_queries(H: Var, subjects, relations, num_entities: int,
                  kind: str = "distmult", core: Var | None = None) -> Var:
    """Scores of every entity as object for a batch of ``(s, r)`` queries.

    ``relations`` index the relation block, i.e. row ``num_entities + r`` of ``H``.
    Returns a ``batch x num_entities`` variable.
    """
    subjects = np.asarray(subjects, dtype=np.int64).reshape(-1)
    relations = np.asarray(relations, dtype=np.int64).reshape(-1)
    if subjects.size and (subjects.min() < 0 or subjects.max() >= num_entities):
        raise IndexError("subject id out of range")
    if relations.size and (relations.min() < 0
                           or num_entities + relations.max() >= H.shape[0]):
        raise IndexError("relation id out of range")
    h_s = ad.gather_rows(H, subjects)
    h_r = ad.gather_rows(H, num_entities + relations)
    if kind == "distmult":
        q = ad.hadamard(h_s, h_r)
    elif kind == "tucker":
        if core is None:
            raise ConfigError("tucker decoder needs a core tensor")
        q = ad.matmul(ad.row_kron(h_s, h_r), core)
    else:
        raise ConfigError(f"unknown decoder {kind!r}")
    entities = ad.gather_rows(H, np.arange(num_entities))
    return ad.matmul(q, ad.transpose(entities))


def score_all_objects(H, s: int, r: int, num_entities: int,
                      kind: str = "distmult", core=None) -> np.ndarray:
    """Score vector over all candidate objects for one query, as numpy."""
    tape = ad.Tape()
    Hv = tape.leaf(H)
    if core is not None:
        core = np.asarray(core, dtype=np.float64)
        core = core.reshape(-1, core.shape[-1])
    core_v = tape.leaf(core) if core is not None else None
    return score_queries(Hv, [s], [r], num_entities, kind, core_v).value[0].copy()
