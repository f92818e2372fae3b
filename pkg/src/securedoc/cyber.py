"""Cyber-layer optimizer agents.

Each agent ``j`` runs the saddle-point flow

    y_r' = -grad g_j(y_r) - vt_j - (1 + eta) sum_i w_ji (y_j - y_i)
    v'   = sum_i w_ji (y_j - y_i)

driven by the *measured* outputs ``y`` of itself and its neighbours, where
``vt_j = sum_i w_ji (v_j - v_i)``.  Its command to the physical layer is the
triple ``(y_r, grad g_j(y_r), vt_j)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize

from .graph import Graph, laplacian


@dataclass(frozen=True)
class Objective:
    """Convex local cost with explicit derivatives.

    ``A`` and ``center`` are set for quadratics ``(s - c)^T A (s - c)`` so
    that stacks of them can be evaluated in one shot.
    """

    value: Callable
    gradient: Callable
    hessian: Callable
    A: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None
    name: str = "custom"

    @property
    def is_quadratic(self) -> bool:
        return self.A is not None


def quadratic(center, weight=None) -> Objective:
    """Quadratic cost ``g(s) = (s - c)^T A (s - c)``; ``A`` defaults to identity."""
    c = np.asarray(center, dtype=float).reshape(-1)
    A = np.eye(c.size) if weight is None else np.atleast_2d(np.asarray(weight, dtype=float))
    if A.shape != (c.size, c.size):
        raise ValueError("weight must be m x m")
    if not np.allclose(A, A.T) or np.linalg.eigvalsh(A).min() <= 0:
        raise ValueError("weight must be symmetric positive definite")
    H = 2.0 * A

    def value(s):
        d = np.asarray(s, dtype=float) - c
        return float(d @ A @ d)

    def gradient(s):
        return H @ (np.asarray(s, dtype=float) - c)

    def hessian(s):
        return H.copy()

    return Objective(value, gradient, hessian, A=A, center=c, name="quadratic")


class ObjectiveStack:
    """Evaluate one objective per node on stacked arguments ``(N, m)``."""

    def __init__(self, objs: Sequence[Objective]):
        self.objs = list(objs)
        self.quadratic = all(o.is_quadratic for o in self.objs)
        if self.quadratic:
            self.H = np.stack([2.0 * o.A for o in self.objs])
            self.c = np.stack([o.center for o in self.objs])
            self._identity = all(np.array_equal(o.A, np.eye(o.A.shape[0])) for o in self.objs)

    def __len__(self):
        return len(self.objs)

    def gradient(self, Y) -> np.ndarray:
        if self.quadratic:
            if self._identity:
                return 2.0 * (Y - self.c)
            return np.einsum("nij,nj->ni", self.H, Y - self.c)
        return np.stack([o.gradient(y) for o, y in zip(self.objs, Y)])

    def hessian(self, Y) -> np.ndarray:
        if self.quadratic:
            return self.H
        return np.stack([o.hessian(y) for o, y in zip(self.objs, Y)])

    def value(self, Y) -> np.ndarray:
        return np.array([o.value(y) for o, y in zip(self.objs, Y)])


@dataclass
class AgentState:
    """Optimizer state ``(y_r, v)`` of one agent."""

    y_r: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class Command:
    """Control command sent to the physical layer."""

    y_r: np.ndarray
    grad: np.ndarray
    v_tilde: np.ndarray


def disagreement(W, X) -> np.ndarray:
    """Row-wise ``sum_i w_ji (x_j - x_i)`` for stacked ``X`` of shape ``(N, m)``."""
    return W.sum(axis=1)[:, None] * X - W @ X


def v_tilde(j: int, states, g) -> np.ndarray:
    """Weighted disagreement of the dual states seen by node ``j``.

    ``states`` is a sequence of :class:`AgentState` or an ``(N, m)`` array of
    ``v`` values; ``g`` is a :class:`Graph` or a weight matrix.
    """
    V = _stack_v(states)
    W = g.weights if isinstance(g, Graph) else np.asarray(g)
    return W[j].sum() * V[j] - W[j] @ V


def _stack_v(states):
    if isinstance(states, np.ndarray):
        return states
    return np.stack([s.v if isinstance(s, AgentState) else np.asarray(s) for s in states])


def optimizer_field(yr, v, y, grad, W, eta: float):
    """Stacked optimizer derivatives for all nodes.

    Parameters
    ----------
    yr, v, y, grad : ndarray, shape (N, m)
        Solution estimates, dual states, received measurements and local
        gradients at ``yr``.
    W : ndarray, shape (N, N)
        Active weights.
    eta : float
        Consensus gain.
    """
    cons = disagreement(W, y)
    vt = disagreement(W, v)
    return -grad - vt - (1.0 + eta) * cons, cons


def optimizer_deriv(j: int, a: AgentState, y_recv, v_recv, obj: Objective, eta: float, g):
    """Derivatives ``(y_r', v')`` of agent ``j``.

    ``y_recv`` and ``v_recv`` hold the measurements and dual states of all
    nodes (rows of non-neighbours are ignored through zero weights).
    """
    W = g.weights if isinstance(g, Graph) else np.asarray(g)
    Y = np.asarray(y_recv, dtype=float)
    V = np.asarray(v_recv, dtype=float)
    w = W[j]
    cons = w.sum() * Y[j] - w @ Y
    vt = w.sum() * np.asarray(a.v) - w @ V
    yr_dot = -obj.gradient(a.y_r) - vt - (1.0 + eta) * cons
    return yr_dot, cons


def command(a: AgentState, obj: Objective, vt) -> Command:
    """Package the command ``(y_r, grad g(y_r), vt)``."""
    y_r = np.asarray(a.y_r, dtype=float)
    return Command(y_r, np.asarray(obj.gradient(y_r), dtype=float), np.asarray(vt, dtype=float))


def optimality_residual(y, objs: Sequence[Objective], g: Graph):
    """Consensus error ``||L y||`` and stationarity ``||sum_j grad g_j(mean y)||``."""
    N = g.n_nodes
    Y = np.asarray(y, dtype=float).reshape(N, -1)
    cons = float(np.linalg.norm(laplacian(g) @ Y))
    ybar = Y.mean(axis=0)
    stat = float(np.linalg.norm(sum(o.gradient(ybar) for o in objs)))
    return cons, stat


def consensus_optimum(objs: Sequence[Objective], m: Optional[int] = None) -> np.ndarray:
    """Minimiser of ``sum_j g_j(s)``; closed form for quadratics, BFGS otherwise."""
    if all(o.is_quadratic for o in objs):
        A = sum(o.A for o in objs)
        b = sum(o.A @ o.center for o in objs)
        return np.linalg.solve(A, b)
    if m is None:
        raise ValueError("dimension m required for non-quadratic objectives")
    res = optimize.minimize(lambda s: sum(o.value(s) for o in objs), np.zeros(m),
                            jac=lambda s: sum(o.gradient(s) for o in objs),
                            method="BFGS", options=dict(gtol=1e-12))
    return res.x
