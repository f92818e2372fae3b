"""Two-loop adaptive backstepping controller.

The inner loop is a tuning-function adaptive backstepping design with a
prescribed-performance barrier ``S(z1/delta)`` on the first error; the
outer loop feeds forward the optimizer command.  ``u = u_I + u_O``.

Two implementations share the same equations:

* :func:`inner_control_n2` handles two-stage chains in closed form and works
  on stacked nodes (leading batch axis), which is what the simulator uses.
* :func:`inner_control_generic` handles any chain order for a single node
  and differentiates the virtual controls by central differences.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cyber import Command
from .plant import PlantParams

FD_STEP = 1e-6
R_STRICT = 1.0 - 1e-9


class FunnelViolation(RuntimeError):
    """Tracking error left the prescribed-performance funnel."""

    def __init__(self, msg, node=None, t=None, ratio=None):
        super().__init__(msg)
        self.node = node
        self.t = t
        self.ratio = ratio


@dataclass
class AdaptiveState:
    """Parameter estimates ``lambda_hat`` (theta plus one slot), ``rho_hat``, ``pi_hat``."""

    lambda_hat: np.ndarray
    rho_hat: float
    pi_hat: np.ndarray

    @classmethod
    def zeros(cls, p: int, m: int) -> "AdaptiveState":
        return cls(np.zeros(p + 1), 0.0, np.zeros(m))


@dataclass
class ControlGains:
    """Controller gains.

    Attributes
    ----------
    c : ndarray, shape (n,)
        Stage gains ``c_i > 0``.
    Gamma : ndarray, shape (p+1, p+1)
        Adaptation gain, symmetric positive definite.
    gamma0, gamma1 : float
        Adaptation rates of ``rho_hat`` and ``pi_hat``.
    pi_sign : float
        Sign of the ``pi_hat`` law ``pi_hat' = pi_sign * gamma1 * z1``.  The
        default ``-1`` makes the integral action on ``z1`` stabilising;
        ``+1`` gives a positive feedback loop between ``z1`` and ``pi_hat``.
    """

    c: np.ndarray
    Gamma: np.ndarray
    gamma0: float = 1.0
    gamma1: float = 1.0
    pi_sign: float = -1.0

    def __post_init__(self):
        self.c = np.atleast_1d(np.asarray(self.c, dtype=float))
        self.Gamma = np.atleast_2d(np.asarray(self.Gamma, dtype=float))
        self.validate()

    @classmethod
    def default(cls, n: int, p: int, **kw) -> "ControlGains":
        kw.setdefault("c", np.full(n, 2.0))
        kw.setdefault("Gamma", np.eye(p + 1))
        return cls(**kw)

    def validate(self):
        if np.any(self.c <= 0):
            raise ValueError("stage gains c_i must be positive")
        G = self.Gamma
        if G.shape[0] != G.shape[1] or not np.allclose(G, G.T):
            raise ValueError("Gamma must be square and symmetric")
        if np.linalg.eigvalsh(G).min() <= 0:
            raise ValueError("Gamma must be positive definite")
        if self.gamma0 <= 0 or self.gamma1 <= 0:
            raise ValueError("gamma0 and gamma1 must be positive")
        if self.pi_sign not in (-1.0, 1.0):
            raise ValueError("pi_sign must be +1 or -1")


@dataclass
class Funnel:
    """Performance funnel ``delta(t) = (k0 exp(-c t) + kb) / sqrt(m)``."""

    k0: float
    kb: float
    c: float
    m: int = 1

    def __post_init__(self):
        if not (self.k0 > 0 and self.kb > 0 and self.c > 0):
            raise ValueError("funnel constants k0, kb, c must be positive")

    def value(self, t):
        return funnel_value(self, t)

    def bound(self, t):
        """Norm bound ``sqrt(m) delta(t) = k0 exp(-c t) + kb``."""
        return self.k0 * np.exp(-self.c * t) + self.kb

    def admits(self, z1) -> bool:
        return bool(np.all(np.abs(z1) < self.value(0.0)))


def funnel_value(f: Funnel, t) -> float:
    """Funnel half-width ``delta(t)``."""
    return (f.k0 * np.exp(-f.c * t) + f.kb) / np.sqrt(f.m)


def s_funnel(z1, delta) -> np.ndarray:
    """Barrier map ``S(r) = atanh(r)``, ``r = z1/delta``, componentwise.

    Raises
    ------
    FunnelViolation
        If any ``|r| >= 1 - 1e-12``.
    """
    r = np.asarray(z1, dtype=float) / delta
    worst = float(np.max(np.abs(r))) if r.size else 0.0
    if worst >= 1.0 - 1e-12:
        raise FunnelViolation(f"funnel violated: |z1/delta| = {worst:.6g}", ratio=worst)
    return np.arctanh(r)


def s_funnel_guarded(z1, delta, r_sat):
    """Barrier with a first-order continuation beyond ``|r| = r_sat``.

    Returns ``S``, ``dS/dr`` and ``r``.  Inside ``|r| <= r_sat`` this is the
    exact ``atanh``; outside it continues along the tangent, so the map is
    defined for every ``z1`` and continuously differentiable.
    """
    r = z1 / delta
    rc = np.clip(r, -r_sat, r_sat)
    ds = 1.0 / (1.0 - rc * rc)
    return np.arctanh(rc) + (r - rc) * ds, ds, r


# -- two-stage closed form -------------------------------------------------

def _mv(A, x):
    return (A @ x[..., None])[..., 0]


def inner_control_n2(x1, x2, yr, a1O, lam, rho, pi, pi_dot, c1, c2, Gamma,
                     delta, phi1, phi2, dphi1, beta, drift, r_sat=R_STRICT, beta_inv=None):
    """Closed-form inner loop for ``n = 2`` on stacked arrays.

    Parameters
    ----------
    x1, x2, yr, a1O, pi, pi_dot, drift : ndarray, shape (..., m)
    lam : ndarray, shape (..., q)
        ``q = p + 1``.
    rho, c1, c2, delta : ndarray, shape (...)
    Gamma : ndarray, shape (..., q, q)
    phi1, phi2 : ndarray, shape (..., m, p)
    dphi1 : ndarray, shape (..., m, m)
        Jacobian of ``phi1(x1) @ lam[:p]`` with respect to ``x1``.
    beta : ndarray, shape (..., m, m)
    beta_inv : ndarray, optional
        Precomputed inverse of ``beta``.

    Returns
    -------
    dict
        ``u_I``, ``z1``, ``z2``, ``alpha1I``, ``tau``, ``r`` (funnel ratio).
    """
    p = phi1.shape[-1]
    m = x1.shape[-1]
    rho = np.asarray(rho)[..., None]
    delta = np.asarray(delta)[..., None]
    c1 = np.asarray(c1)[..., None]
    c2 = np.asarray(c2)[..., None]
    th = lam[..., :p]
    z1 = x1 - yr
    r_sat = np.asarray(r_sat, dtype=float)
    if r_sat.ndim:
        r_sat = r_sat[..., None]
    S, ds, r = s_funnel_guarded(z1, delta, r_sat)
    a1I = -(c1 + rho) * z1 - _mv(phi1, th) + pi - S
    z2 = x2 - a1I - a1O
    # d alpha_1I / d x1
    dA = -dphi1 - np.eye(m) * ((c1 + rho) + ds / delta)[..., None, :]
    psi1 = np.concatenate([phi1, np.zeros(phi1.shape[:-1] + (1,))], axis=-1)
    w2 = np.concatenate([phi2 - dA @ phi1, z2[..., None]], axis=-1)
    tau = _mv(np.swapaxes(psi1, -1, -2), z1) + _mv(np.swapaxes(w2, -1, -2), z2)
    Lam = _mv(dA, x2) - _mv(psi1, _mv(Gamma, tau)) + pi_dot
    v = -(1.0 + c2) * z2 - _mv(w2, lam) + Lam
    if drift is not None:
        v = v - drift
    u = _mv(beta_inv, v) if beta_inv is not None else np.linalg.solve(beta, v[..., None])[..., 0]
    return dict(u_I=u, z1=z1, z2=z2, alpha1I=a1I, tau=tau, r=r)


def outer_control_n2(grad, vt, hess, beta, beta_inv=None):
    """Outer loop for ``n = 2``: ``alpha_1O = -grad - 2 vt``, ``u_O = beta^-1 H (grad + vt)``."""
    a1O = -grad - 2.0 * vt
    h = _mv(hess, grad + vt)
    u = _mv(beta_inv, h) if beta_inv is not None else np.linalg.solve(beta, h[..., None])[..., 0]
    return u, a1O


# -- generic order, single node -------------------------------------------

def _fd_jac(f, x, h=FD_STEP):
    """Central-difference Jacobian of ``f`` at the flat vector ``x``."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(f(x))
    J = np.empty(f0.shape + x.shape)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        J[..., k] = (np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h)
    return J


class _InnerRecursion:
    """Virtual controls of the inner loop for one node, arbitrary order."""

    def __init__(self, p: PlantParams, gains: ControlGains, cmd: Command, aO, rho,
                 pi_dot, delta, r_sat, theta_q):
        self.p = p
        self.g = gains
        self.cmd = cmd
        self.aO = aO            # outer virtual controls alpha_{1..n-1,O}
        self.rho = rho
        self.pi_dot = pi_dot
        self.delta = delta
        self.r_sat = r_sat
        self.q = theta_q

    def _psi(self, i, xb, z_i):
        phi = self.p.regressor(xb, self.q)[i]
        col = np.zeros((self.p.m, 1)) if i == 0 else z_i[:, None]
        return np.concatenate([phi, col], axis=1)

    def alpha(self, i, xflat, lam, pi):
        """Return ``alpha_{i,I}`` (1-based ``i``) plus the error and regressor lists."""
        p, g = self.p, self.g
        xb = xflat.reshape(p.n, p.m)
        th = lam[: p.p]
        z1 = xb[0] - self.cmd.y_r
        S, _, _ = s_funnel_guarded(z1, self.delta, self.r_sat)
        psi1 = self._psi(0, xb, None)
        a = -(g.c[0] + self.rho) * z1 - psi1 @ lam + pi - S
        zs, ws = [z1], [psi1]
        tau = psi1.T @ z1
        prev = [a]
        for k in range(2, i + 1):
            zk = xb[k - 1] - prev[-1] - self.aO[k - 2]
            a_new, tau, wk = self._stage(k, xflat, lam, pi, zs + [zk], ws, tau)
            zs.append(zk)
            ws.append(wk)
            prev.append(a_new)
        return prev[-1], zs, ws, tau

    def _dalpha(self, k, xflat, lam, pi):
        """Derivatives of ``alpha_{k,I}`` w.r.t. x, lambda_hat and pi_hat."""
        fx = lambda x: self.alpha(k, x, lam, pi)[0]
        fl = lambda l: self.alpha(k, xflat, l, pi)[0]
        fp = lambda q: self.alpha(k, xflat, lam, q)[0]
        return _fd_jac(fx, xflat), _fd_jac(fl, lam), _fd_jac(fp, pi)

    def _stage(self, i, xflat, lam, pi, zs, ws, tau_prev):
        """Virtual control ``alpha_{i,I}`` given errors ``z_1..z_i``."""
        p, g = self.p, self.g
        m = p.m
        xb = xflat.reshape(p.n, m)
        z_i = zs[i - 1]
        psi_i = self._psi(i - 1, xb, z_i)
        dx, dl, dp = self._dalpha(i - 1, xflat, lam, pi)
        psis = [self._psi(k, xb, zs[k] if k else None) for k in range(i - 1)]
        w_i = psi_i - sum(dx[:, k * m:(k + 1) * m] @ psis[k] for k in range(i - 1))
        tau_i = tau_prev + w_i.T @ z_i
        Lam = sum(dx[:, k * m:(k + 1) * m] @ xb[k + 1] for k in range(i - 1))
        Lam = Lam + dl @ g.Gamma @ tau_i + dp @ self.pi_dot
        for k in range(2, i):
            dlk = self._dalpha(k - 1, xflat, lam, pi)[1]
            Lam = Lam + w_i @ g.Gamma @ dlk.T @ zs[k - 1]
        a = -z_i - g.c[i - 1] * z_i - w_i @ lam + Lam
        return a, tau_i, w_i


def outer_virtuals(cmd: Command, hess, n: int, grad_fn=None):
    """Outer virtual controls ``alpha_{1..n-1,O}`` and ``d alpha_{n-1,O}/d y_r``.

    Stage 1 uses the Hessian; higher stages differentiate numerically and
    need ``grad_fn`` (the objective gradient).
    """
    s = cmd.grad + cmd.v_tilde
    a1 = -cmd.grad - 2.0 * cmd.v_tilde
    if n == 1:
        return [], np.zeros((len(s), len(s)))
    alphas = [a1]
    d_prev = -np.asarray(hess)
    if n == 2:
        return alphas, d_prev
    if grad_fn is None:
        raise ValueError("grad_fn is required for chains longer than two")
    vt = cmd.v_tilde

    def alpha_O(i, yr):
        gr = grad_fn(yr)
        if i == 1:
            return -gr - 2.0 * vt
        D = _fd_jac(lambda y: alpha_O(i - 1, y), yr)
        return -D @ (gr + vt)

    for i in range(2, n):
        alphas.append(-d_prev @ s)
        d_prev = _fd_jac(lambda y: alpha_O(i, y), cmd.y_r)
    return alphas, d_prev


def outer_control(cmd: Command, hess, beta, n: int = 2, grad_fn=None):
    """Outer-loop input ``u_O`` and virtual controls ``alpha_{i,O}``.

    For ``n = 2`` this is ``u_O = beta^-1 H (grad + vt)`` and
    ``alpha_1O = -grad - 2 vt``.
    """
    alphas, d_last = outer_virtuals(cmd, hess, n, grad_fn)
    u = -np.linalg.solve(beta, d_last @ (cmd.grad + cmd.v_tilde))
    return u, alphas


def inner_control_generic(x, a: AdaptiveState, cmd: Command, gains: ControlGains,
                          f: Funnel, p: PlantParams, t: float, aO=None, hess=None,
                          grad_fn=None, r_sat=R_STRICT):
    """Inner loop for one node and any chain order.

    Partial derivatives of the virtual controls are central differences with
    step ``FD_STEP``.  Returns the same dictionary as
    :func:`inner_control_n2`, with ``z`` holding all stage errors.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if p.n < 2:
        raise ValueError("the backstepping design needs a chain of order n >= 2")
    if aO is None:
        aO, _ = outer_virtuals(cmd, hess, p.n, grad_fn)
    delta = funnel_value(f, t)
    xb = x.reshape(p.n, p.m)
    z1 = xb[0] - cmd.y_r
    pi_dot = gains.pi_sign * gains.gamma1 * z1
    rec = _InnerRecursion(p, gains, cmd, aO, a.rho_hat, pi_dot, delta, r_sat, p.q)
    lam, pi = np.asarray(a.lambda_hat, float), np.asarray(a.pi_hat, float)
    a1, zs, ws, tau = rec.alpha(p.n - 1, x, lam, pi)
    z_n = xb[p.n - 1] - a1 - aO[p.n - 2]
    an, tau_n, _ = rec._stage(p.n, x, lam, pi, zs + [z_n], ws, tau)
    u = np.linalg.solve(p.beta_at(xb), an - p.drift_at(xb))
    return dict(u_I=u, z=zs + [z_n], z1=zs[0], alpha1I=rec.alpha(1, x, lam, pi)[0],
                tau=tau_n, r=z1 / delta)


def phi1_jacobian(p: PlantParams, x1, th, q=None):
    """``d(phi_1(x1) th)/dx1`` for stacked ``x1`` of shape ``(..., m)``."""
    q = p.q if q is None else q
    if p.p == 0:
        return np.zeros(x1.shape + (x1.shape[-1],))
    if p.phi1_jac is not None:
        return p.phi1_jac(x1, th, q)
    m = p.m

    def f(x1v):
        xb = np.zeros(x1v.shape[:-1] + (p.n, m))
        xb[..., 0, :] = x1v
        return (p.regressor(xb, q)[..., 0, :, :] @ th[..., None])[..., 0]

    J = np.empty(x1.shape + (m,))
    for k in range(m):
        e = np.zeros(m)
        e[k] = FD_STEP
        J[..., :, k] = (f(x1 + e) - f(x1 - e)) / (2 * FD_STEP)
    return J


def inner_control(x, a: AdaptiveState, cmd: Command, gains: ControlGains, f: Funnel,
                  p: PlantParams, t: float, hess=None, grad_fn=None, r_sat=R_STRICT):
    """Inner-loop input ``u_I`` for one node.

    ``z1 = x1 - cmd.y_r`` must lie inside the funnel.  Uses the closed form
    for ``n = 2`` and central differences otherwise; chains longer than two
    also need the objective Hessian and gradient to rebuild the outer
    virtual controls.

    Raises
    ------
    FunnelViolation
        If ``|z1_s| >= delta(t)`` for some component.
    """
    xb = p.blocks(x)
    delta = funnel_value(f, t)
    s_funnel(xb[0] - cmd.y_r, delta)  # domain check
    if p.n != 2:
        return inner_control_generic(x, a, cmd, gains, f, p, t, hess=hess,
                                     grad_fn=grad_fn, r_sat=r_sat)
    lam = np.asarray(a.lambda_hat, dtype=float)
    z1 = xb[0] - cmd.y_r
    phi = p.regressor(xb, p.q)
    a1O = -cmd.grad - 2.0 * cmd.v_tilde
    return inner_control_n2(
        xb[0], xb[1], cmd.y_r, a1O, lam, np.asarray(a.rho_hat, float),
        np.asarray(a.pi_hat, float), gains.pi_sign * gains.gamma1 * z1,
        gains.c[0], gains.c[1], gains.Gamma, delta, phi[0], phi[1],
        phi1_jacobian(p, xb[0], lam[: p.p]), p.beta_at(xb), p.drift_at(xb), r_sat)


def adaptive_deriv(a: AdaptiveState, tau_n, z1, gains: ControlGains):
    """Update laws ``(Gamma tau_n, gamma0 ||z1||^2, pi_sign gamma1 z1)``."""
    z1 = np.asarray(z1, dtype=float)
    return (gains.Gamma @ np.asarray(tau_n, dtype=float),
            gains.gamma0 * float(z1 @ z1),
            gains.pi_sign * gains.gamma1 * z1)


def total_control(u_I, u_O) -> np.ndarray:
    """Applied input ``u = u_I + u_O``."""
    return np.asarray(u_I, dtype=float) + np.asarray(u_O, dtype=float)
