"""Roll the global embedding through observed snapshots to a prediction time.

To predict at ``target = t + 1`` with history length ``k`` the state starts
as ``H_global`` at ``t - k`` and is integrated over the ``k + 1`` unit
intervals ``[t', t' + 1]`` for ``t' = t - k .. t``.  Interval ``t'`` binds
snapshot ``t'`` and the jump tensor from ``t'`` to ``t' + 1``; the final
interval reuses the jump tensor from ``t - 1`` to ``t`` because ``t + 1`` is
not observable yet.  Windows that would start before the first timestamp
are truncated.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape
from .data import (
    JumpTensor,
    QuadrupleStore,
    Snapshot,
    TimeMap,
    augment_reciprocal,
    build_jump_tensors,
    build_snapshots,
    make_time_map,
)
from .exceptions import ConfigError, ContractError, LeakageError
from .model import DerivativeNet, ModelParams
from .ode import SolverConfig, integrate_interval

__all__ = [
    "EncoderConfig",
    "GraphHistory",
    "Interval",
    "roll",
    "infer_representation",
    "infer_long_horizon",
]


@dataclass(frozen=True)
class EncoderConfig:
    history_length: int = 4
    jump_coef: float = 0.1
    activation: str = "tanh"
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if int(self.history_length) < 1:
            raise ConfigError("history_length must be >= 1")
        if self.jump_coef < 0:
            raise ConfigError("jump_coef must be >= 0")


@dataclass(frozen=True)
class Interval:
    t: int
    snapshot: Snapshot
    jump: JumpTensor
    tau0: float
    tau1: float
    n_steps: int


class GraphHistory:
    """Snapshots, jump tensors and time map of one (augmented) store."""

    def __init__(self, store: QuadrupleStore, time_span: float = 0.01):
        if not store.augmented:
            store = augment_reciprocal(store)
        self.store = store
        self.snapshots: list[Snapshot] = build_snapshots(store)
        self.jumps: list[JumpTensor] = build_jump_tensors(self.snapshots)
        self.time_map: TimeMap = make_time_map(store, time_span)

    @property
    def num_entities(self) -> int:
        return self.store.num_entities

    @property
    def relation_space(self) -> int:
        return self.store.relation_space

    def _snapshot(self, t: int, limit: int) -> Snapshot:
        if t >= limit:
            raise LeakageError(f"snapshot {t} requested with history ending before {limit}")
        return self.snapshots[t]

    def _jump(self, t: int, limit: int) -> JumpTensor:
        """Jump tensor from ``t`` to ``t + 1``; empty when ``t < 0``."""
        if t < 0:
            return JumpTensor.empty(0, self.num_entities, self.relation_space)
        if t + 1 >= limit:
            raise LeakageError(f"jump tensor {t}->{t + 1} requested with history ending before {limit}")
        return self.jumps[t]

    def plan(self, target_t: int, k: int, delta_t: int = 1,
             steps_per_interval: int = 1) -> list[Interval]:
        """Integration intervals for predicting at ``target_t``.

        The last observed snapshot is ``t = target_t - delta_t``; the final
        interval spans ``delta_t`` unit lengths.
        """
        if delta_t < 1:
            raise ContractError("delta_t must be >= 1")
        t = target_t - delta_t
        if t < 0:
            raise ContractError(f"no observed snapshot before target {target_t}")
        if t >= len(self.snapshots):
            raise ContractError(f"snapshot {t} is beyond the stored timeline")
        limit = t + 1
        tau = self.time_map
        intervals = []
        for tp in range(max(0, t - k), t):
            intervals.append(Interval(tp, self._snapshot(tp, limit), self._jump(tp, limit),
                                      float(tau(tp)), float(tau(tp + 1)), steps_per_interval))
        start = float(tau(t))
        intervals.append(Interval(t, self._snapshot(t, limit), self._jump(t - 1, limit),
                                  start, start + delta_t * tau.unit,
                                  steps_per_interval * delta_t))
        return intervals


def roll(net: DerivativeNet, H, intervals: list[Interval], solver: SolverConfig,
         checkpoints: list | None = None, log: list | None = None):
    """Integrate ``H`` through ``intervals``, rebinding the net for each."""
    for iv in intervals:
        net.set_graph(iv.snapshot).set_jump(iv.jump)
        H = integrate_interval(net, H, iv.tau0, iv.tau1, solver, n_steps=iv.n_steps,
                               checkpoints=checkpoints, log=log)
    return H


def _infer(history, params, cfg, target_t, delta_t, log):
    intervals = history.plan(target_t, cfg.history_length, delta_t,
                             cfg.solver.steps_per_interval)
    tape = Tape()
    leaves = params.leaves(tape, ["H_global"] + params.field_names())
    net = DerivativeNet(leaves, params.n_layers, cfg.jump_coef, cfg.activation)
    H = roll(net, leaves["H_global"], intervals, cfg.solver, log=log)
    return np.array(H.value)


def infer_representation(history: GraphHistory, params: ModelParams, cfg: EncoderConfig,
                         target_t: int, log: list | None = None) -> np.ndarray:
    """Graph hidden state at ``target_t`` from snapshots strictly before it."""
    return _infer(history, params, cfg, target_t, 1, log)


def infer_long_horizon(history: GraphHistory, params: ModelParams, cfg: EncoderConfig,
                       target_t: int, delta_t: int, log: list | None = None) -> np.ndarray:
    """Hidden state at ``target_t`` using snapshots up to ``target_t - delta_t`` only."""
    if delta_t < 1:
        raise ContractError("delta_t must be >= 1")
    return _infer(history, params, cfg, target_t, delta_t, log)
