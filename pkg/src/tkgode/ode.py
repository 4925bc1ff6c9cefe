"""Fixed-grid RK4 integration with unrolled or interpolated-adjoint gradients.

The adjoint path never re-solves the state ODE backward in time.  During the
forward pass the state is sampled at Chebyshev nodes of each interval; the
reverse sweep reads the state from a barycentric interpolant through those
samples while integrating the adjoint and parameter-gradient equations.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .exceptions import ConfigError, ContractError, NumericError

__all__ = [
    "BACKWARD_MODES",
    "SolverConfig",
    "ChebyshevCheckpoint",
    "rk4_step",
    "integrate_interval",
    "chebyshev_grid",
    "barycentric_weights",
    "barycentric_eval",
    "backward_interpolated_adjoint",
]

BACKWARD_MODES = ("unrolled", "interpolated_adjoint")


@dataclass(frozen=True)
class SolverConfig:
    steps_per_interval: int = 1
    chebyshev_nodes: int = 3
    backward_mode: str = "interpolated_adjoint"

    def __post_init__(self):
        if int(self.steps_per_interval) < 1:
            raise ConfigError("steps_per_interval must be >= 1")
        if int(self.chebyshev_nodes) < 2:
            raise ConfigError("chebyshev_nodes must be >= 2")
        if self.backward_mode not in BACKWARD_MODES:
            raise ConfigError(f"backward_mode must be one of {BACKWARD_MODES}")


@dataclass
class ChebyshevCheckpoint:
    """States saved at the Chebyshev nodes of one forward interval."""

    tau0: float
    tau1: float
    n_steps: int
    nodes: np.ndarray
    states: list[np.ndarray] = field(repr=False)


def _value(z):
    return z.value if isinstance(z, Var) else z


def rk4_step(f: Callable, z, t: float, h: float):
    """Classical fourth-order Runge-Kutta step of ``dz/dt = f(t, z)``.

    Works on numpy arrays and on tape variables alike.
    """
    if not h > 0:
        raise ContractError("step size must be positive")
    k1 = f(t, z)
    k2 = f(t + 0.5 * h, z + k1 * (0.5 * h))
    k3 = f(t + 0.5 * h, z + k2 * (0.5 * h))
    k4 = f(t + h, z + k3 * h)
    out = z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
    if not np.all(np.isfinite(_value(out))):
        raise NumericError(f"non-finite state in RK4 step at t={t}")
    return out


def integrate_interval(f: Callable, z, tau0: float, tau1: float, cfg: SolverConfig,
                       n_steps: int | None = None,
                       checkpoints: list | None = None,
                       log: list | None = None):
    """Integrate ``f`` over ``[tau0, tau1]`` with uniform RK4 sub-steps.

    ``n_steps`` defaults to ``cfg.steps_per_interval``.  When ``checkpoints``
    is a list, a :class:`ChebyshevCheckpoint` for the interval is appended
    (the samples come from partial RK4 steps off the main grid, so the
    returned state is the same with or without checkpointing).  ``log``
    receives ``(tau0, tau1, n_steps)``.
    """
    if not tau1 > tau0:
        raise ContractError(f"empty interval [{tau0}, {tau1}]")
    n = cfg.steps_per_interval if n_steps is None else int(n_steps)
    if n < 1:
        raise ConfigError("n_steps must be >= 1")
    if log is not None:
        log.append((tau0, tau1, n))
    h = (tau1 - tau0) / n
    grid = [z]
    for i in range(n):
        z = rk4_step(f, z, tau0 + i * h, h)
        grid.append(z)
    if checkpoints is not None:
        nodes = chebyshev_grid(tau0, tau1, cfg.chebyshev_nodes)
        states = []
        for c in nodes:
            i = min(int((c - tau0) // h), n - 1)
            t_i = tau0 + i * h
            base = grid[i]
            if c - t_i > 0:
                states.append(np.array(_value(rk4_step(f, base, t_i, c - t_i))))
            else:
                states.append(np.array(_value(base)))
        checkpoints.append(ChebyshevCheckpoint(tau0, tau1, n, nodes, states))
    return z


def chebyshev_grid(tau0: float, tau1: float, n_c: int) -> np.ndarray:
    """First-kind Chebyshev points mapped to ``[tau0, tau1]``, ascending."""
    if n_c < 2:
        raise ConfigError("need at least two Chebyshev nodes")
    k = np.arange(n_c)
    x = np.cos(np.pi * (2 * k + 1) / (2 * n_c))[::-1]
    # exact zero at the centre keeps the grid symmetric
    x[np.isclose(x, 0.0, atol=1e-15)] = 0.0
    return 0.5 * (tau0 + tau1) + 0.5 * (tau1 - tau0) * x


def barycentric_weights(n_c: int) -> np.ndarray:
    """Weights for :func:`chebyshev_grid` nodes in ascending order."""
    k = np.arange(n_c)
    w = (-1.0) ** k * np.sin(np.pi * (2 * k + 1) / (2 * n_c))
    return w[::-1].copy()


def barycentric_eval(nodes, values, tau: float, weights=None):
    """Second-form barycentric interpolation through ``(nodes, values)``.

    ``values`` is a sequence of equally shaped arrays.  Evaluating exactly
    at a node returns that node's stored value.  ``weights`` defaults to the
    first-kind Chebyshev weights, valid for nodes from :func:`chebyshev_grid`.
    """
    nodes = np.asarray(nodes, dtype=np.float64)
    if len(values) != len(nodes):
        raise ContractError("one value per node required")
    if weights is None:
        weights = barycentric_weights(len(nodes))
    diff = tau - nodes
    hit = np.flatnonzero(diff == 0.0)
    if hit.size:
        return values[hit[0]]
    coef = weights / diff
    num = sum(c * v for c, v in zip(coef, values))
    return num / coef.sum()


def backward_interpolated_adjoint(vjp: Callable, checkpoint: ChebyshevCheckpoint,
                                  grad_out: np.ndarray, param_shapes: dict):
    """Reverse sweep over one interval.

    ``vjp(t, z, a)`` must return ``(a^T df/dz, {name: a^T df/dtheta})`` for
    the vector field at state ``z``.  The adjoint ``a`` (``dL/dz``) is carried
    from ``tau1`` back to ``tau0`` with RK4 on the same step grid as the
    forward pass; the state comes from the interpolant through the saved
    Chebyshev samples.  Returns ``(dL/dz(tau0), {name: dL/dtheta})``.
    """
    if checkpoint is None or not checkpoint.states:
        raise ContractError("no saved Chebyshev states for this interval")
    nodes, states = checkpoint.nodes, checkpoint.states
    weights = barycentric_weights(len(nodes))
    n = checkpoint.n_steps
    h = (checkpoint.tau1 - checkpoint.tau0) / n

    def rhs(t, a):
        z = barycentric_eval(nodes, states, t, weights)
        g_z, g_theta = vjp(t, z, a)
        return -g_z, g_theta

    a = np.array(grad_out, dtype=np.float64)
    acc = {name: np.zeros(shape) for name, shape in param_shapes.items()}
    if not np.any(a):
        return a, acc
    for i in range(n, 0, -1):
        t = checkpoint.tau0 + i * h
        k1, g1 = rhs(t, a)
        k2, g2 = rhs(t - 0.5 * h, a - (0.5 * h) * k1)
        k3, g3 = rhs(t - 0.5 * h, a - (0.5 * h) * k2)
        k4, g4 = rhs(t - h, a - h * k3)
        a = a - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        for name in acc:
            acc[name] += (h / 6.0) * (g1[name] + 2.0 * g2[name] + 2.0 * g3[name] + g4[name])
        if not np.all(np.isfinite(a)):
            raise NumericError("non-finite adjoint state")
    return a, acc


def tape_vjp(build: Callable[[ad.Tape], tuple[Callable, dict]]):
    """Adapter turning a tape-built vector field into a ``vjp`` callable.

    ``build(tape)`` returns ``(f, leaves)`` where ``f(t, z_var)`` records the
    field on ``tape`` and ``leaves`` maps parameter names to their leaf
    variables on that tape.
    """

    def vjp(t, z, a):
        tape = ad.Tape()
        f, leaves = build(tape)
        zv = tape.leaf(z)
        out = f(t, zv)
        loss = ad.sum_all(ad.hadamard(out, tape.leaf(a)))
        grads = tape.backward(loss)
        return grads[zv], {name: grads[v] for name, v in leaves.items()}

    return vjp
