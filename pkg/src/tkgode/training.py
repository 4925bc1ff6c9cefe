"""Softmax cross-entropy training with Adam, one step per timestamp."""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Var
from .decoder import DECODERS, score_queries
from .encoder import EncoderConfig, GraphHistory, roll
from .exceptions import ConfigError, ContractError, NumericError
from .model import DerivativeNet, ModelParams, init_params
from .ode import (
    BACKWARD_MODES,
    SolverConfig,
    backward_interpolated_adjoint,
    integrate_interval,
    tape_vjp,
)

__all__ = [
    "TrainConfig",
    "AdamState",
    "adam_step",
    "loss",
    "query_loss",
    "loss_and_grads",
    "training_targets",
    "train_epoch",
    "train",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 32
    history_length: int = 4
    n_layers: int = 2
    decoder: str = "distmult"
    jump_coef: float = 0.1
    learning_rate: float = 1e-3
    epochs: int = 30
    batch_size: int = 256
    steps_per_interval: int = 1
    chebyshev_nodes: int = 3
    backward_mode: str = "interpolated_adjoint"
    time_span: float = 0.01
    activation: str = "tanh"
    seed: int = 0

    def __post_init__(self):
        for name in ("dim", "history_length", "n_layers", "batch_size",
                     "steps_per_interval", "chebyshev_nodes"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.decoder not in DECODERS:
            raise ConfigError(f"decoder must be one of {DECODERS}")
        if self.backward_mode not in BACKWARD_MODES:
            raise ConfigError(f"backward_mode must be one of {BACKWARD_MODES}")
        if self.jump_coef < 0:
            raise ConfigError("jump_coef must be >= 0")
        if not self.time_span > 0:
            raise ConfigError("time_span must be > 0")

    def solver(self) -> SolverConfig:
        return SolverConfig(self.steps_per_interval, self.chebyshev_nodes, self.backward_mode)

    def encoder(self) -> EncoderConfig:
        return EncoderConfig(self.history_length, self.jump_coef, self.activation, self.solver())

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> TrainConfig:
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = {}
        for key, raw in values.items():
            typ = type(known[key].default)
            try:
                kwargs[key] = typ(raw)
            except (TypeError, ValueError):
                raise ConfigError(f"{key}: cannot interpret {raw!r} as {typ.__name__}") from None
        return cls(**kwargs)

    def replace(self, **changes) -> TrainConfig:
        return dataclasses.replace(self, **changes)


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, lr: float):
    """Bias-corrected Adam; returns new ``(params, state)``.

    Raises :class:`NumericError` without touching anything if a gradient
    is non-finite.
    """
    for name, g in grads.items():
        if name not in params:
            raise ContractError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ContractError(f"{name}: gradient shape {g.shape} != {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}")
    step = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_params, m, v = dict(params), dict(state.m), dict(state.v)
    c1 = 1.0 - b1 ** step
    c2 = 1.0 - b2 ** step
    for name, g in grads.items():
        m[name] = b1 * m.get(name, np.zeros_like(g)) + (1.0 - b1) * g
        v[name] = b2 * v.get(name, np.zeros_like(g)) + (1.0 - b2) * g * g
        m_hat = m[name] / c1
        v_hat = v[name] / c2
        new_params[name] = params[name] - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_params, AdamState(m, v, step, b1, b2, state.eps)


def query_loss(H: Var, queries: np.ndarray, num_entities: int, kind: str = "distmult",
               core: Var | None = None, batch_size: int = 256) -> Var:
    """Mean softmax negative log-likelihood of the true objects, as a 1x1 var."""
    queries = np.asarray(queries, dtype=np.int64).reshape(-1, 3)
    n = len(queries)
    if n == 0:
        raise ContractError("loss needs at least one query")
    total = None
    for lo in range(0, n, batch_size):
        batch = queries[lo:lo + batch_size]
        scores = score_queries(H, batch[:, 0], batch[:, 1], num_entities, kind, core)
        part = ad.row_softmax_cross_entropy(scores, batch[:, 2])
        if n > batch_size:
            part = ad.scale(part, len(batch) / n)
        total = part if total is None else ad.add(total, part)
    return total


def loss(H, queries, num_entities: int, kind: str = "distmult", core=None) -> float:
    """Numpy convenience wrapper around :func:`query_loss`."""
    tape = Tape()
    core_v = tape.leaf(core) if core is not None else None
    return float(query_loss(tape.leaf(H), queries, num_entities, kind, core_v).value[0, 0])


def _queries_at(history: GraphHistory, t: int) -> np.ndarray:
    return history.store.at(t)[:, :3]


def loss_and_grads(history: GraphHistory, params: ModelParams, cfg: TrainConfig,
                   target_t: int, queries: np.ndarray | None = None,
                   backward_mode: str | None = None):
    """Loss at ``target_t`` and its gradient for every parameter."""
    mode = backward_mode or cfg.backward_mode
    if queries is None:
        queries = _queries_at(history, target_t)
    enc = cfg.encoder()
    intervals = history.plan(target_t, cfg.history_length, 1, cfg.steps_per_interval)
    if mode == "unrolled":
        return _unrolled(history, params, cfg, enc, intervals, queries)
    if mode == "interpolated_adjoint":
        return _adjoint(history, params, cfg, enc, intervals, queries)
    raise ConfigError(f"unknown backward mode {mode!r}")


def _unrolled(history, params, cfg, enc, intervals, queries):
    tape = Tape()
    leaves = params.leaves(tape)
    net = DerivativeNet(leaves, params.n_layers, enc.jump_coef, enc.activation)
    H = roll(net, leaves["H_global"], intervals, enc.solver)
    L = query_loss(H, queries, history.num_entities, params.decoder,
                   leaves.get("decoder.core"), cfg.batch_size)
    grads = tape.backward(L)
    return float(L.value[0, 0]), {name: grads[v] for name, v in leaves.items()}


def _adjoint(history, params, cfg, enc, intervals, queries):
    field_names = params.field_names()
    H = params.arrays["H_global"]
    checkpoints = []
    for iv in intervals:
        tape = Tape()
        net = DerivativeNet(params.leaves(tape, field_names), params.n_layers,
                            enc.jump_coef, enc.activation)
        net.set_graph(iv.snapshot).set_jump(iv.jump)
        H = integrate_interval(net, tape.leaf(H), iv.tau0, iv.tau1, enc.solver,
                               n_steps=iv.n_steps, checkpoints=checkpoints).value
    head = Tape()
    Hv = head.leaf(H)
    core = head.leaf(params.arrays["decoder.core"]) if params.decoder == "tucker" else None
    L = query_loss(Hv, queries, history.num_entities, params.decoder, core, cfg.batch_size)
    head_grads = head.backward(L)
    a = head_grads[Hv]
    grads = {name: np.zeros_like(params.arrays[name]) for name in params.names}
    if core is not None:
        grads["decoder.core"] = head_grads[core]
    shapes = {name: params.arrays[name].shape for name in field_names}
    for iv, ckpt in zip(reversed(intervals), reversed(checkpoints)):

        def build(tape, iv=iv):
            leaves = params.leaves(tape, field_names)
            net = DerivativeNet(leaves, params.n_layers, enc.jump_coef, enc.activation)
            net.set_graph(iv.snapshot).set_jump(iv.jump)
            return net, leaves

        a, g = backward_interpolated_adjoint(tape_vjp(build), ckpt, a, shapes)
        for name in field_names:
            grads[name] += g[name]
    grads["H_global"] = a
    return float(L.value[0, 0]), grads


def training_targets(history: GraphHistory, k: int) -> list[int]:
    """Training timestamps with a full ``k + 1`` snapshot window and events."""
    store = history.store
    targets = [t for t in range(k + 1, store.train_end) if len(store.at(t))]
    if not targets:
        raise ContractError(
            f"training split (t < {store.train_end}) too short for history length {k}"
        )
    return targets


def train_epoch(history: GraphHistory, params: ModelParams, state: AdamState,
                cfg: TrainConfig):
    """One chronological pass; returns ``(params, state, mean loss per query)``."""
    total, count = 0.0, 0
    for target in training_targets(history, cfg.history_length):
        queries = _queries_at(history, target)
        value, grads = loss_and_grads(history, params, cfg, target, queries)
        arrays, state = adam_step(params.arrays, grads, state, cfg.learning_rate)
        params = ModelParams(arrays, params.num_entities, params.relation_space,
                             params.dim, params.n_layers, params.decoder)
        total += value * len(queries)
        count += len(queries)
    return params, state, total / count


def train(history: GraphHistory, cfg: TrainConfig, params: ModelParams | None = None,
          callback=None):
    """Fit from scratch (or from ``params``); returns ``(params, epoch losses)``."""
    if params is None:
        rng = np.random.default_rng(cfg.seed)
        params = init_params(rng, history.num_entities, history.relation_space,
                             cfg.dim, cfg.n_layers, cfg.decoder)
    state = AdamState()
    losses = []
    for epoch in range(cfg.epochs):
        params, state, mean_loss = train_epoch(history, params, state, cfg)
        losses.append(mean_loss)
        logger.info("epoch %d loss %.6f", epoch + 1, mean_loss)
        if callback is not None:
            callback(epoch, params, mean_loss)
    return params, losses
