"""Quarantine countermeasure.

Once a node's monitor raises its alarm the node is cut out of the network.
Its neighbours drop it from every weighted sum, and its own command is
replaced by the secure setpoint ``(y_s, 0, 0)``.  The remaining nodes keep
solving the optimisation problem restricted to themselves.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cyber import Command, ObjectiveStack, disagreement
from .graph import Graph, is_connected, masked_weights, prune
from .monitor import MonitorState


class DisconnectedWarning(UserWarning):
    """The healthy subgraph left after quarantine is not connected."""


@dataclass
class SecurityConfig:
    """Secure setpoints and the master switch.

    Attributes
    ----------
    y_s : ndarray, shape (N, m)
        Setpoint each node is sent to once flagged.
    enabled : bool
        When false no node is ever flagged and commands pass unchanged.
    mode : str
        ``"prune"`` drops flagged nodes from every sum; ``"zero"`` keeps the
        edges but replaces the flagged node's ``(y, v)`` by zeros.
    """

    y_s: np.ndarray
    enabled: bool = True
    mode: str = "prune"

    def __post_init__(self):
        self.y_s = np.atleast_2d(np.asarray(self.y_s, dtype=float))
        if not np.all(np.isfinite(self.y_s)):
            raise ValueError("secure setpoints must be finite")
        if self.mode not in ("prune", "zero"):
            raise ValueError(f"unknown quarantine mode {self.mode!r}")


def notify(ms: MonitorState, t: float) -> int:
    """Notification flag: 1 once ``t >= T_d``, else 0."""
    return int(ms.t_detect is not None and t >= ms.t_detect)


def secure_command(cmd: Command, flag: int, cfg: SecurityConfig, node: int = 0) -> Command:
    """Replace the command of a flagged node by ``(y_s, 0, 0)``."""
    if not flag or not cfg.enabled:
        return cmd
    ys = cfg.y_s[node] if cfg.y_s.shape[0] > 1 else cfg.y_s[0]
    z = np.zeros_like(ys)
    return Command(ys.copy(), z, z.copy())


def active_weights(g: Graph, flags, cfg: Optional[SecurityConfig] = None) -> np.ndarray:
    """Weights seen by the optimizer after quarantine.

    Emits :class:`DisconnectedWarning` when the healthy nodes no longer form
    a connected graph; the run continues regardless.
    """
    flags = np.asarray(flags, dtype=bool)
    if cfg is not None and not cfg.enabled:
        return np.array(g.weights)
    if flags.any() and not flags.all():
        if not is_connected(prune(g, np.flatnonzero(flags))):
            warnings.warn("healthy subgraph is disconnected after quarantine",
                          DisconnectedWarning, stacklevel=2)
    if cfg is not None and cfg.mode == "zero":
        return np.array(g.weights)
    return masked_weights(g, flags)


def secure_round(Yr, V, Y, flags, g: Graph, objs: ObjectiveStack, eta: float,
                 cfg: SecurityConfig):
    """One synchronous exchange of the secure algorithm.

    Parameters
    ----------
    Yr, V : ndarray, shape (N, m)
        Optimizer states.
    Y : ndarray, shape (N, m)
        Transmitted (possibly attacked) measurements.
    flags : sequence of bool
        Notification flags received from every node.
    g : Graph
    objs : ObjectiveStack
    eta : float
    cfg : SecurityConfig

    Returns
    -------
    dict
        ``yr_dot`` and ``v_dot`` (zero for flagged nodes, whose optimizer is
        frozen), the commands ``y_r``, ``grad``, ``v_tilde`` after
        switching, and the weight matrix used.
    """
    flags = np.asarray(flags, dtype=bool) if cfg.enabled else np.zeros(len(Yr), bool)
    W = active_weights(g, flags, cfg)
    Yx, Vx = Y, V
    if cfg.mode == "zero" and flags.any():
        Yx, Vx = Y.copy(), V.copy()
        Yx[flags] = 0.0
        Vx[flags] = 0.0
    grad = objs.gradient(Yr)
    cons = disagreement(W, Yx)
    cons[flags] = 0.0
    vt = W.sum(axis=1)[:, None] * V - W @ Vx
    yr_dot = -grad - vt - (1.0 + eta) * cons
    yr_dot[flags] = 0.0
    ys = np.broadcast_to(cfg.y_s, Yr.shape)
    cmd_yr = np.where(flags[:, None], ys, Yr)
    cmd_g = np.where(flags[:, None], 0.0, grad)
    cmd_vt = np.where(flags[:, None], 0.0, vt)
    return dict(yr_dot=yr_dot, v_dot=cons, y_r=cmd_yr, grad=cmd_g, v_tilde=cmd_vt, W=W)


__all__ = ["SecurityConfig", "DisconnectedWarning", "notify", "secure_command",
           "active_weights", "secure_round"]
