"""Parameter container and the vector field integrated by the encoder."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .aggregator import AggLayerParams, init_agg_layer, stack_forward, xavier_uniform
from .autodiff import Tape, Var
from .data import JumpTensor, Snapshot
from .decoder import DECODERS, init_core
from .exceptions import ConfigError, ContractError, ShapeError
from .jump import JumpParams, apply_jump, init_jump

__all__ = ["ModelParams", "DerivativeNet", "init_params"]


@dataclass
class ModelParams:
    """Every trainable array, keyed by a stable name.

    Names: ``H_global``, ``layer{l}.W_ent``, ``layer{l}.W_rel``,
    ``layer{l}.delta``, ``jump.W_ent``, ``jump.W_rel`` and, for TuckER,
    ``decoder.core``.
    """

    arrays: dict[str, np.ndarray]
    num_entities: int
    relation_space: int
    dim: int
    n_layers: int
    decoder: str = "distmult"

    def __post_init__(self):
        expected = self.expected_shapes()
        if set(expected) != set(self.arrays):
            missing = sorted(set(expected) - set(self.arrays))
            extra = sorted(set(self.arrays) - set(expected))
            raise ShapeError(f"parameter names differ: missing {missing}, unexpected {extra}")
        for name, shape in expected.items():
            arr = np.asarray(self.arrays[name], dtype=np.float64)
            if arr.shape != shape:
                raise ShapeError(f"{name}: expected shape {shape}, found {arr.shape}")
            self.arrays[name] = arr

    def expected_shapes(self) -> dict[str, tuple[int, int]]:
        d = self.dim
        shapes = {"H_global": (self.num_entities + self.relation_space, d)}
        for l in range(self.n_layers):
            shapes[f"layer{l}.W_ent"] = (d, d)
            shapes[f"layer{l}.W_rel"] = (d, d)
            shapes[f"layer{l}.delta"] = (1, 1)
        shapes["jump.W_ent"] = (1, d)
        shapes["jump.W_rel"] = (1, d)
        if self.decoder == "tucker":
            shapes["decoder.core"] = (d * d, d)
        return shapes

    @property
    def names(self) -> list[str]:
        return list(self.expected_shapes())

    def leaves(self, tape: Tape, names=None) -> dict[str, Var]:
        names = self.names if names is None else names
        return {name: tape.leaf(self.arrays[name], name=name) for name in names}

    def copy(self) -> ModelParams:
        return ModelParams({k: v.copy() for k, v in self.arrays.items()},
                           self.num_entities, self.relation_space, self.dim,
                           self.n_layers, self.decoder)

    def field_names(self) -> list[str]:
        """Parameters of the vector field (everything except H_global and the core)."""
        return [n for n in self.names if n.startswith(("layer", "jump."))]

    def flatten(self, names=None) -> np.ndarray:
        names = self.names if names is None else names
        return np.concatenate([self.arrays[n].ravel() for n in names])

    def unflatten(self, flat: np.ndarray, names=None) -> ModelParams:
        names = self.names if names is None else names
        out = self.copy()
        pos = 0
        for n in names:
            size = out.arrays[n].size
            out.arrays[n] = flat[pos:pos + size].reshape(out.arrays[n].shape).copy()
            pos += size
        return out


def init_params(rng: np.random.Generator, num_entities: int, relation_space: int,
                dim: int, n_layers: int = 2, decoder: str = "distmult") -> ModelParams:
    if decoder not in DECODERS:
        raise ConfigError(f"decoder must be one of {DECODERS}")
    if dim < 1 or n_layers < 1:
        raise ConfigError("dim and n_layers must be >= 1")
    arrays = {"H_global": xavier_uniform(rng, num_entities + relation_space, dim)}
    for l in range(n_layers):
        for key, val in init_agg_layer(rng, dim).items():
            arrays[f"layer{l}.{key}"] = val
    for key, val in init_jump(dim).items():
        arrays[f"jump.{key}"] = val
    if decoder == "tucker":
        arrays["decoder.core"] = init_core(rng, dim)
    return ModelParams(arrays, num_entities, relation_space, dim, n_layers, decoder)


class DerivativeNet:
    """``dH/dt``: residual aggregation increments plus the weighted jump shift.

    The stacked residual layers map ``H`` to ``H_agg``; the jump term adds
    ``w * jump(H)``.  The vector field is that output minus the identity
    skip, so zero weights give a stationary flow.
    """

    def __init__(self, leaves: dict[str, Var], n_layers: int, jump_coef: float = 0.1,
                 activation: str = "tanh"):
        self.layers = [
            AggLayerParams(leaves[f"layer{l}.W_ent"], leaves[f"layer{l}.W_rel"],
                           leaves[f"layer{l}.delta"])
            for l in range(n_layers)
        ]
        self.jump = JumpParams(leaves["jump.W_ent"], leaves["jump.W_rel"], float(jump_coef))
        self.activation = activation
        self.snapshot: Snapshot | None = None
        self.jump_tensor: JumpTensor | None = None
        self.evaluations = 0

    def set_graph(self, snapshot: Snapshot) -> DerivativeNet:
        self.snapshot = snapshot
        return self

    def set_jump(self, jt: JumpTensor) -> DerivativeNet:
        self.jump_tensor = jt
        return self

    def __call__(self, t: float, H: Var) -> Var:
        if self.snapshot is None or self.jump_tensor is None:
            raise ContractError("bind a snapshot and a jump tensor before evaluating")
        self.evaluations += 1
        H_agg = stack_forward(H, self.snapshot, self.layers, self.activation)
        out = apply_jump(H_agg, H, self.jump_tensor, self.jump, self.activation)
        return ad.sub(out, H)
