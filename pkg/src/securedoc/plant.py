"""Parametric strict-feedback plants and sensor-channel attacks.

The physical subsystem is the chain

    x_i' = x_{i+1} + phi_i(x_1..x_i) theta,   i < n
    x_n' = beta(x) u + phi_n(x) theta + f0(x)
    y    = x_1 + a(t)

with ``m``-dimensional blocks.  ``f0`` is an optional known drift (zero for
the textbook form); it lets plants with a known state-dependent term be
written without folding that term into the unknown parameters.

All callables work on arrays with arbitrary leading batch axes, so the same
plant description serves a single node or a stack of nodes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class PlantDivergence(FloatingPointError):
    """Raised when a plant derivative is not finite."""


def _zeros_phi(n, m, p):
    def phi(x, q):
        return np.zeros(x.shape[:-2] + (n, m, p))
    return phi


def _identity_beta(m):
    def beta(x, q):
        return np.broadcast_to(np.eye(m), x.shape[:-2] + (m, m))
    return beta


@dataclass
class PlantParams:
    """Description of one strict-feedback subsystem.

    Attributes
    ----------
    n, m, p : int
        Chain order, block dimension and number of unknown parameters.
    regressor : callable
        ``regressor(x, q)`` with ``x`` of shape ``(..., n, m)`` returns the
        stacked regressors of shape ``(..., n, m, p)``.  Block ``i`` may only
        depend on ``x[..., :i+1, :]``.
    beta : callable
        ``beta(x, q)`` returns the known input map, shape ``(..., m, m)``.
    theta : ndarray, shape (p,)
        True parameters, used by the simulator only.
    q : ndarray
        Known structural constants passed to the callables.
    drift : callable, optional
        Known additive term ``f0(x, q)`` on the last block.
    phi1_jac : callable, optional
        ``phi1_jac(x1, th, q)`` returning ``d(phi_1(x1) th)/dx1`` of shape
        ``(..., m, m)``.  Central differences are used when absent.
    disturbance : callable, optional
        ``disturbance(t, x)`` added to the last block (zero by default).
    beta_inv : callable, optional
        Closed-form inverse of ``beta``; ``numpy.linalg.inv`` otherwise.
    name : str
        Free-form label.
    """

    n: int
    m: int
    p: int
    regressor: Callable = None
    beta: Callable = None
    theta: np.ndarray = None
    q: np.ndarray = field(default_factory=lambda: np.zeros(0))
    drift: Optional[Callable] = None
    phi1_jac: Optional[Callable] = None
    disturbance: Optional[Callable] = None
    beta_inv: Optional[Callable] = None
    name: str = "plant"

    def __post_init__(self):
        if self.n < 1 or self.m < 1 or self.p < 0:
            raise ValueError("need n >= 1, m >= 1, p >= 0")
        if self.regressor is None:
            self.regressor = _zeros_phi(self.n, self.m, self.p)
        if self.beta is None:
            self.beta = _identity_beta(self.m)
        elif not callable(self.beta):
            b = np.array(self.beta, dtype=float)
            if b.shape != (self.m, self.m):
                raise ValueError("beta matrix must be m x m")
            if abs(np.linalg.det(b)) < 1e-12:
                raise ValueError("beta must be nonsingular")
            self.beta = _constant_beta(b)
        self.theta = np.zeros(self.p) if self.theta is None else np.asarray(self.theta, dtype=float)
        self.q = np.asarray(self.q, dtype=float)

    def blocks(self, x) -> np.ndarray:
        """Reshape a flat state ``(..., n*m)`` into ``(..., n, m)``."""
        x = np.asarray(x, dtype=float)
        return x.reshape(x.shape[:-1] + (self.n, self.m))

    def phi(self, x, q=None) -> np.ndarray:
        return self.regressor(x, self.q if q is None else q)

    def beta_at(self, x, q=None) -> np.ndarray:
        return self.beta(x, self.q if q is None else q)

    def drift_at(self, x, q=None) -> np.ndarray:
        if self.drift is None:
            return np.zeros(x.shape[:-2] + (self.m,))
        return self.drift(x, self.q if q is None else q)

    def structure(self) -> tuple:
        """Identity of the callables; nodes sharing it can be batched."""
        return (self.n, self.m, self.p, self.regressor, self.beta, self.drift,
                self.phi1_jac, self.disturbance, self.beta_inv)


def _constant_beta(b):
    def beta(x, q):
        return np.broadcast_to(b, x.shape[:-2] + b.shape)
    beta.matrix = b
    return beta


def plant_field(xb, u, p: PlantParams, theta=None, q=None, t: float = 0.0,
                phi=None, beta=None, drift=None) -> np.ndarray:
    """Vector field on block-shaped states ``(..., n, m)``.

    ``theta`` and ``q`` may carry a leading batch axis matching ``xb``.
    Pre-evaluated structure terms (``phi``, ``beta``, ``drift``) may be passed in.
    """
    theta = p.theta if theta is None else theta
    q = p.q if q is None else q
    if phi is None:
        phi = p.regressor(xb, q)
    if beta is None:
        beta = p.beta(xb, q)
    d = np.einsum("...imk,...k->...im", phi, theta) if p.p else np.zeros_like(xb)
    out = np.empty_like(xb)
    out[..., :-1, :] = xb[..., 1:, :] + d[..., :-1, :]
    last = (beta @ u[..., None])[..., 0] + d[..., -1, :]
    if drift is not None:
        last = last + drift
    elif p.drift is not None:
        last = last + p.drift(xb, q)
    if p.disturbance is not None:
        last = last + p.disturbance(t, xb)
    out[..., -1, :] = last
    return out


def plant_deriv(x, u, p: PlantParams, t: float = 0.0) -> np.ndarray:
    """Time derivative of the flat state ``x`` (length ``n*m``) under input ``u``.

    Raises
    ------
    PlantDivergence
        If the result is not finite.
    """
    xb = p.blocks(x)
    out = plant_field(xb, np.asarray(u, dtype=float), p, t=t)
    out = out.reshape(np.shape(x))
    if not np.all(np.isfinite(out)):
        raise PlantDivergence("non-finite plant derivative")
    return out


def chain_plant(n, m, p=0, regressors=None, beta=None, theta=None, name="chain") -> PlantParams:
    """Convenience constructor from a list of per-stage regressors.

    ``regressors[i](xbar)`` receives ``x[..., :i+1, :]`` and returns
    ``(..., m, p)``.
    """
    if regressors is None:
        reg = None
    else:
        if len(regressors) != n:
            raise ValueError("one regressor per stage required")
        fns = tuple(regressors)

        def reg(x, q):
            return np.stack([f(x[..., : i + 1, :]) for i, f in enumerate(fns)], axis=-3)
    return PlantParams(n=n, m=m, p=p, regressor=reg, beta=beta, theta=theta, name=name)


# -- attacks ---------------------------------------------------------------

ATTACK_KINDS = ("none", "exp_oscillation", "l2_decaying", "custom")


@dataclass
class AttackScript:
    """Additive sensor-channel attack ``a(t) = kappa(t - onset) * signal``.

    ``signal(t, ctx)`` receives the absolute time and a read-only snapshot of
    the simulator (may be ``None``) and returns an ``m``-vector.  The time
    profile is a unit step at ``onset``.
    """

    kind: str = "none"
    m: int = 1
    onset: float = np.inf
    signal: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.kind != "none" and self.signal is None:
            raise ValueError("attack needs a signal function")

    def active(self, t: float) -> bool:
        return self.kind != "none" and t >= self.onset

    def __call__(self, t: float, ctx=None) -> np.ndarray:
        if not self.active(t):
            return np.zeros(self.m)
        a = np.asarray(self.signal(t, ctx), dtype=float)
        if a.shape != (self.m,):
            raise ValueError(f"attack signal has shape {a.shape}, expected ({self.m},)")
        return a


def no_attack(m: int) -> AttackScript:
    return AttackScript("none", m)


def _alternating(t, m):
    base = np.array([np.sin(t), np.cos(t), -np.sin(t), -np.cos(t)])
    return np.resize(base, m)


def exp_oscillation(m: int = 4, onset: float = 30.0, rate: float = 0.5,
                      offset: float = -1.0) -> AttackScript:
    """Growing oscillation ``exp(rate (t - onset) + offset) [sin t, cos t, -sin t, -cos t]``.

    For ``m != 4`` the sign pattern is repeated or truncated.
    """
    def sig(t, ctx):
        return np.exp(rate * (t - onset) + offset) * _alternating(t, m)
    return AttackScript("exp_oscillation", m, onset, sig,
                        dict(rate=rate, offset=offset))


def l2_decaying(m: int, onset: float = 30.0, amplitude: float = 0.05,
                rate: float = 0.3) -> AttackScript:
    """Square-integrable bias ``amplitude * exp(-rate (t - onset))`` on every component."""
    def sig(t, ctx):
        return np.full(m, amplitude * np.exp(-rate * (t - onset)))
    return AttackScript("l2_decaying", m, onset, sig,
                        dict(amplitude=amplitude, rate=rate))


def custom_attack(m: int, onset: float, fn: Callable) -> AttackScript:
    """Wrap an arbitrary ``fn(t, ctx) -> m-vector``."""
    return AttackScript("custom", m, onset, fn)


def sensor_output(x, atk: AttackScript, ctx, t: float, m: Optional[int] = None) -> np.ndarray:
    """Transmitted measurement ``y = x_1 + a(t)``."""
    x = np.asarray(x, dtype=float)
    m = atk.m if m is None else m
    return x[:m] + atk(t, ctx)
