"""Composition-based relational graph aggregation and its residual stack.

Weights act on row vectors: a hidden row ``h`` maps to ``h @ W``.  The
hidden state ``H`` stacks one row per entity followed by one row per
(reciprocal-augmented) relation.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .data import Snapshot
from .exceptions import ConfigError, ShapeError

__all__ = [
    "AggLayerParams",
    "compose",
    "activation_fn",
    "agg_layer_forward",
    "residual_layer_forward",
    "stack_forward",
    "xavier_uniform",
    "init_agg_layer",
]


class AggLayerParams(NamedTuple):
    W_ent: Var
    W_rel: Var
    delta: Var


def compose(h_s: Var, h_r: Var) -> Var:
    """Entity-relation composition: the elementwise product."""
    if h_s.shape != h_r.shape:
        raise ShapeError(f"compose: {h_s.shape} vs {h_r.shape}")
    return ad.hadamard(h_s, h_r)


def activation_fn(name: str):
    if name == "tanh":
        return ad.tanh
    if name == "identity":
        return lambda x: x
    raise ConfigError(f"unknown activation {name!r}")


def _check_hidden(H: Var, num_entities: int, relation_space: int):
    if H.shape[0] != num_entities + relation_space:
        raise ShapeError(
            f"hidden state has {H.shape[0]} rows, expected "
            f"{num_entities} entities + {relation_space} relations"
        )


def _messages(H: Var, edges: np.ndarray, num_entities: int) -> Var:
    h_s = ad.gather_rows(H, edges[:, 0])
    h_r = ad.gather_rows(H, num_entities + edges[:, 1])
    return compose(h_s, h_r)


def agg_layer_forward(H: Var, snapshot: Snapshot, W_ent: Var, W_rel: Var,
                      activation: str = "tanh") -> Var:
    """One aggregation layer.

    Entity rows become ``act(mean_{(s, r) in N(o)} (h_s * h_r) @ W_ent)``,
    zero when ``N(o)`` is empty; relation rows become ``h_r @ W_rel``.
    """
    n_ent, n_rel = snapshot.num_entities, snapshot.relation_space
    _check_hidden(H, n_ent, n_rel)
    msgs = _messages(H, snapshot.edges, n_ent)
    mean = ad.scatter_mean_rows(msgs, snapshot.edges[:, 2], n_ent,
                                operator=snapshot.mean_operator())
    ent = activation_fn(activation)(ad.matmul(mean, W_ent))
    rel = ad.matmul(ad.gather_rows(H, np.arange(n_ent, n_ent + n_rel)), W_rel)
    return ad.concat_rows(ent, rel)


def residual_layer_forward(H: Var, snapshot: Snapshot, params: AggLayerParams,
                           activation: str = "tanh") -> Var:
    out = agg_layer_forward(H, snapshot, params.W_ent, params.W_rel, activation)
    return ad.add(H, ad.scale(out, params.delta))


def stack_forward(H: Var, snapshot: Snapshot, layers, activation: str = "tanh") -> Var:
    """Apply the residual layers in order and return the aggregated state."""
    if not layers:
        raise ConfigError("aggregation stack needs at least one layer")
    for layer in layers:
        H = residual_layer_forward(H, snapshot, layer, activation)
    return H


def xavier_uniform(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


def init_agg_layer(rng: np.random.Generator, dim: int, delta: float = 0.1) -> dict:
    return {
        "W_ent": xavier_uniform(rng, dim, dim),
        "W_rel": xavier_uniform(rng, dim, dim),
        "delta": np.array([[delta]]),
    }
