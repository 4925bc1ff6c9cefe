"""Jump layer: hidden-state shift driven by appearing/vanishing triplets."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .aggregator import _check_hidden, _messages, activation_fn
from .autodiff import Var
from .data import JumpTensor
from .exceptions import ConfigError, ShapeError

__all__ = ["JumpParams", "jump_layer_forward", "apply_jump", "init_jump"]


class JumpParams(NamedTuple):
    """Diagonal weights (stored as ``1 x d`` rows) and the fixed coefficient."""

    W_jump_ent: Var
    W_jump_rel: Var
    w: float = 0.1


def jump_layer_forward(H: Var, jt: JumpTensor, params: JumpParams,
                       activation: str = "tanh") -> Var:
    """Shift for every row of ``H``.

    Entity ``o``: ``act(W_jump_ent * mean_{(s, r)} sign(s, r, o) * (h_s * h_r))``
    over its jump neighbourhood, zero if it has none.  Relation ``r``:
    ``W_jump_rel * h_r``, independent of the jump tensor.
    """
    n_ent, n_rel = jt.num_entities, jt.relation_space
    _check_hidden(H, n_ent, n_rel)
    msgs = _messages(H, jt.edges, n_ent)
    mean = ad.scatter_mean_rows(msgs, jt.edges[:, 2], n_ent, operator=jt.mean_operator())
    ent = activation_fn(activation)(ad.hadamard(mean, params.W_jump_ent))
    rel = ad.hadamard(ad.gather_rows(H, np.arange(n_ent, n_ent + n_rel)), params.W_jump_rel)
    return ad.concat_rows(ent, rel)


def apply_jump(H_agg: Var, H_pre: Var, jt: JumpTensor, params: JumpParams,
               activation: str = "tanh") -> Var:
    """``H_agg + w * jump(H_pre)``; with ``w == 0`` returns ``H_agg`` itself."""
    if H_agg.shape != H_pre.shape:
        raise ShapeError(f"apply_jump: {H_agg.shape} vs {H_pre.shape}")
    if params.w < 0:
        raise ConfigError("jump coefficient must be non-negative")
    if params.w == 0:
        return H_agg
    shift = jump_layer_forward(H_pre, jt, params, activation)
    return ad.add(H_agg, ad.scale(shift, params.w))


def init_jump(dim: int) -> dict:
    return {"W_ent": np.ones((1, dim)), "W_rel": np.ones((1, dim))}
