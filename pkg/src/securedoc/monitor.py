"""Attack detection and isolation monitors.

Each node runs a copy of its optimizer driven only by neighbour
measurements,

    yh' = -grad g(yh) - vt - (1 + eta) sum_i w_ji (yh - y_i)
    vh' = sum_i w_ji [(yh - y_i) + (v - vh)]

and compares the residuals ``e_r = y_r - yh`` and ``e_v = v - vh`` with
adaptive thresholds built from the funnel bound on the tracking error.
The node's own measurement does not enter the filter, so the residual
dynamics depend on the local attack only.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .cyber import Objective, disagreement


@dataclass
class ThresholdParams:
    """Constants of the two adaptive thresholds of one node.

    ``k0`` is the funnel amplitude at the threshold origin ``t0``; after a
    restart (see :meth:`restart`) it is the decayed value at the new origin.
    """

    eta_j: float
    w_N: float
    k0: float
    kb: float
    c: float
    e_r0: float = 0.0
    e_v0: float = 0.0
    t0: float = 0.0
    omega_bar: float = 50.0
    c1: float = 2.0

    def validate(self):
        for name in ("eta_j", "w_N", "k0", "kb", "c", "omega_bar", "c1"):
            if not getattr(self, name) > 0:
                raise ValueError(f"threshold parameter {name} must be positive")
        if self.e_r0 < 0 or self.e_v0 < 0:
            raise ValueError("initial residual norms must be nonnegative")
        if np.isclose(self.c, self.eta_j):
            raise ValueError("funnel rate c must differ from eta_j")
        if np.isclose(self.c, self.w_N):
            raise ValueError("funnel rate c must differ from w_N")
        return self

    @classmethod
    def for_node(cls, eta: float, w_N: float, k0: float, kb: float, c: float, **kw):
        return cls(eta_j=(1.0 + eta) * w_N, w_N=w_N, k0=k0, kb=kb, c=c, **kw)

    def restart(self, t_s: float, eta: float, w_N: float) -> "ThresholdParams":
        """Thresholds for a new neighbourhood weight ``w_N`` from time ``t_s`` on.

        The current threshold values become the initial residual bounds and
        the funnel amplitude is carried forward, so the new bounds are valid
        continuations of the old ones.
        """
        return replace(self, eta_j=(1.0 + eta) * w_N, w_N=w_N,
                       k0=self.k0 * np.exp(-self.c * (t_s - self.t0)),
                       e_r0=float(threshold_r(self, t_s)),
                       e_v0=float(threshold_v(self, t_s)), t0=t_s)


def _thr_r(a, k0, kb, c, e0, s):
    ea = np.exp(-a * s)
    return ea * e0 + kb * (1.0 - ea) + a * k0 / (a - c) * (np.exp(-c * s) - ea)


def _thr_v(a, k0, kb, c, er0, ev0, s):
    ea = np.exp(-a * s)
    return (ea * ev0 + 2.0 * kb * (1.0 - ea)
            + (2.0 * a - c) * a * k0 / (a - c) ** 2 * (np.exp(-c * s) - ea)
            + a * (kb + a * k0 / (a - c) + er0) * s * ea)


def threshold_r(tp: ThresholdParams, t):
    """Threshold on ``||e_r||`` at time ``t`` (closed-form funnel bound)."""
    if tp.c == tp.eta_j:
        raise ValueError("funnel rate c equals eta_j")
    return _thr_r(tp.eta_j, tp.k0, tp.kb, tp.c, tp.e_r0, np.asarray(t) - tp.t0)


def threshold_v(tp: ThresholdParams, t):
    """Threshold on ``||e_v||`` at time ``t`` (closed-form funnel bound)."""
    if tp.c == tp.w_N:
        raise ValueError("funnel rate c equals w_N")
    return _thr_v(tp.w_N, tp.k0, tp.kb, tp.c, tp.e_r0, tp.e_v0, np.asarray(t) - tp.t0)


@dataclass
class MonitorState:
    """Filter estimates, residuals, thresholds and the latched alarm."""

    y_r_hat: np.ndarray
    v_hat: np.ndarray
    e_r: Optional[np.ndarray] = None
    e_v: Optional[np.ndarray] = None
    thr_r: float = np.inf
    thr_v: float = np.inf
    alarmed: bool = False
    t_detect: Optional[float] = None

    def update(self, t: float, y_r, v, tp: ThresholdParams, mode: str = "both"):
        """Refresh residuals and thresholds at ``t`` and latch the alarm."""
        self.e_r = np.asarray(y_r, dtype=float) - self.y_r_hat
        self.e_v = np.asarray(v, dtype=float) - self.v_hat
        self.thr_r = float(threshold_r(tp, t))
        self.thr_v = float(threshold_v(tp, t))
        _, _, alarm = arr_check(self, mode)
        if alarm and not self.alarmed:
            self.alarmed = True
            self.t_detect = t
        return self.alarmed


def filter_field(yh, vh, v, vt, y, grad_hat, W, eta: float):
    """Stacked filter derivatives for all nodes (arrays of shape ``(N, m)``).

    ``y`` are the received measurements; only neighbour rows enter through
    ``W`` (zero diagonal), so a node's own measurement is never used.
    """
    deg = W.sum(axis=1)[:, None]
    d = deg * yh - W @ y
    return -grad_hat - vt - (1.0 + eta) * d, d + deg * (v - vh)


def filter_deriv(ms: MonitorState, y_recv, v_own, vt, obj: Objective, w_row, eta: float):
    """Filter derivatives ``(yh', vh')`` of one node.

    Parameters
    ----------
    ms : MonitorState
    y_recv : ndarray, shape (N, m)
        Received measurements (own row ignored).
    v_own : ndarray, shape (m,)
        The node's own dual state.
    vt : ndarray, shape (m,)
        Dual disagreement of the node.
    obj : Objective
    w_row : ndarray, shape (N,)
        The node's weight row.
    eta : float

    Raises
    ------
    ValueError
        If the node has no neighbours.
    """
    w = np.asarray(w_row, dtype=float)
    wn = w.sum()
    if wn <= 0:
        raise ValueError("isolated node: the filter needs at least one neighbour")
    Y = np.asarray(y_recv, dtype=float)
    d = wn * ms.y_r_hat - w @ Y
    yh_dot = -obj.gradient(ms.y_r_hat) - vt - (1.0 + eta) * d
    vh_dot = d + wn * (np.asarray(v_own) - ms.v_hat)
    return yh_dot, vh_dot


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def psi_trace(a: float, h, times, hdot=None) -> np.ndarray:
    """``Psi(a, h, times[0], t_k)`` for every grid time ``t_k``.

    ``h`` holds samples of ``||h||`` (or vectors, whose norms are taken).
    Product trapezoid rule: ``||h||`` is interpolated linearly on each
    interval and the exponential kernel is integrated exactly, so the error
    does not grow with ``a dt``.

    With ``hdot`` (samples of the vector ``h'``, same shape as ``h``) the
    vector signal is interpolated by cubic Hermite polynomials instead and
    each interval is integrated by 8-point Gauss-Legendre, which is
    fourth-order accurate in the grid step.
    """
    times = np.asarray(times, dtype=float)
    if hdot is not None:
        return _psi_hermite(a, h, hdot, times)
    h = np.asarray(h, dtype=float)
    if h.ndim > 1:
        h = np.linalg.norm(h, axis=-1)
    if h.size == 0:
        raise ValueError("empty trace")
    out = np.zeros_like(h)
    for k in range(1, h.size):
        x = a * (times[k] - times[k - 1])
        one_e = -np.expm1(-x)
        e = 1.0 - one_e
        g = one_e / x if x > 0 else 1.0
        out[k] = e * out[k - 1] + h[k] * (1.0 - g) + h[k - 1] * (g - e)
    return out


def _psi_hermite(a, h, hdot, times):
    h = np.asarray(h, dtype=float)
    hd = np.asarray(hdot, dtype=float)
    if h.ndim == 1:
        h, hd = h[:, None], hd[:, None]
    if h.shape[0] == 0:
        raise ValueError("empty trace")
    if hd.shape != h.shape:
        raise ValueError("hdot must have the shape of h")
    out = np.zeros(h.shape[0])
    if h.shape[0] < 2:
        return out
    dt = np.diff(times)[:, None]
    s = 0.5 * (_GL_X + 1.0)
    b00, b10 = 2 * s**3 - 3 * s**2 + 1, s**3 - 2 * s**2 + s
    b01, b11 = -2 * s**3 + 3 * s**2, s**3 - s**2
    # interpolant at the quadrature nodes of every interval, shape (K-1, 8, m)
    P = (b00[None, :, None] * h[:-1, None] + b10[None, :, None] * (dt * hd[:-1])[:, None]
         + b01[None, :, None] * h[1:, None] + b11[None, :, None] * (dt * hd[1:])[:, None])
    ker = np.exp(a * dt * (s[None, :] - 1.0))
    inc = 0.5 * a * dt[:, 0] * ((np.linalg.norm(P, axis=-1) * ker) @ _GL_W)
    decay = np.exp(-a * dt[:, 0])
    for k in range(1, out.size):
        out[k] = decay[k - 1] * out[k - 1] + inc[k - 1]
    return out


def psi(a: float, h, t0: float, t: float, times=None) -> float:
    """Convolution ``a int_{t0}^{t} exp(a (tau - t)) ||h(tau)|| dtau`` by trapezoids.

    ``h`` is sampled on ``times`` (default: uniform grid over ``[t0, t]``).
    """
    h = np.asarray(h, dtype=float)
    if h.size == 0:
        raise ValueError("empty trace")
    if h.ndim > 1:
        h = np.linalg.norm(h, axis=-1)
    if times is None:
        times = np.linspace(t0, t, h.size)
    times = np.asarray(times, dtype=float)
    eps = 1e-12 * max(1.0, abs(t))
    sel = (times >= t0 - eps) & (times <= t + eps)
    if sel.sum() < 2:
        return 0.0
    tt, hh = times[sel], h[sel]
    return float(np.trapezoid(a * np.exp(a * (tt - t)) * hh, tt))


def arr_check(ms: MonitorState, mode: str = "both"):
    """Evaluate the relations ``||e_r|| <= thr_r`` and ``||e_v|| <= thr_v``.

    ``mode="both"`` alarms when either relation fails; ``mode="r"`` only
    watches ``e_r``; ``mode="union"`` alarms only when both fail.
    """
    ok_r = bool(np.linalg.norm(ms.e_r) <= ms.thr_r)
    ok_v = bool(np.linalg.norm(ms.e_v) <= ms.thr_v)
    if mode == "both":
        alarm = not (ok_r and ok_v)
    elif mode == "r":
        alarm = not ok_r
    elif mode == "union":
        alarm = not (ok_r or ok_v)
    else:
        raise ValueError(f"unknown ARR mode {mode!r}")
    return ok_r, ok_v, alarm


def detection_time(times, alarms) -> Optional[float]:
    """First grid time at which the alarm is raised, ``None`` if never."""
    alarms = np.asarray(alarms, dtype=bool)
    idx = np.flatnonzero(alarms)
    return float(np.asarray(times)[idx[0]]) if idx.size else None


def _window(times, t_a, t_d):
    times = np.asarray(times, dtype=float)
    eps = 1e-9
    sel = np.flatnonzero((times >= t_a - eps) & (times <= t_d + eps))
    if sel.size < 2:
        raise ValueError("detection window holds fewer than two grid points")
    return sel


def funnel_psi(a, k0, kb, c, t_a, t_d):
    """Exact ``Psi`` of the funnel bound ``k0 exp(-c t) + kb`` over ``[t_a, t_d]``."""
    s = t_d - t_a
    ea = np.exp(-a * s)
    return kb * (1.0 - ea) + a * k0 / (a - c) * (np.exp(-c * t_d) - np.exp(-c * t_a) * ea)


def detectability_margin(times, attack, e_r, e_v, z1, grad_yr, grad_yh,
                         tp: ThresholdParams, t_a: float, t_d: float):
    """Both sides of the two sufficient detectability inequalities.

    All traces are sampled on ``times``.  Returns
    ``(lhs_r, rhs_r, lhs_v, rhs_v)``; the attack is certified detectable by
    ``t_d`` if ``lhs_r > rhs_r`` or ``lhs_v > rhs_v``.

    ``tp`` must describe the thresholds in force on ``[t_a, t_d]`` (funnel
    amplitude referred to ``tp.t0``).
    """
    times = np.asarray(times, dtype=float)
    n = times.size
    arrs = [np.asarray(x, dtype=float) for x in (attack, e_r, e_v, z1, grad_yr, grad_yh)]
    if any(x.shape[0] != n for x in arrs):
        raise ValueError("all traces must share the time grid")
    attack, e_r, e_v, z1, g_r, g_h = arrs
    sel = _window(times, t_a, t_d)
    tt = times[sel]
    t_d = tt[-1]
    t_a = tt[0]
    k0_a = tp.k0 * np.exp(-tp.c * (t_a - tp.t0))
    k0_abs = tp.k0 * np.exp(tp.c * tp.t0)

    a = tp.eta_j
    ker = np.exp(a * (tt - t_d))
    lhs_r = a * np.linalg.norm(np.trapezoid(ker[:, None] * attack[sel], tt, axis=0))
    inner = np.linalg.norm(g_r[sel] - g_h[sel] + a * z1[sel], axis=-1)
    rhs_r = (2.0 * np.exp(a * (t_a - t_d)) * np.linalg.norm(e_r[sel[0]])
             + funnel_psi(a, k0_abs, tp.kb, tp.c, t_a, t_d)
             + a * np.trapezoid(ker * inner, tt))

    w = tp.w_N
    ker = np.exp(w * (tt - t_d))
    lhs_v = w * np.linalg.norm(np.trapezoid(ker[:, None] * attack[sel], tt, axis=0))
    bound = threshold_r(tp, tt) + k0_a * np.exp(-tp.c * (tt - t_a)) + tp.kb
    rhs_v = (2.0 * np.exp(w * (t_a - t_d)) * np.linalg.norm(e_v[sel[0]])
             + w * np.trapezoid(ker * bound, tt)
             + w * np.trapezoid(ker * np.linalg.norm(e_r[sel] + z1[sel], axis=-1), tt))
    return float(lhs_r), float(rhs_r), float(lhs_v), float(rhs_v)


def undetectable_bound(e_v_ta: float, w_N: float, omega_bar: float, c1: float) -> float:
    """Energy bound ``M`` that every undetected attack respects."""
    return 4.0 * e_v_ta ** 2 / w_N ** 4 + 16.0 * omega_bar / (c1 * w_N ** 2)


def attack_energy(times, attack, w_N: float, t_a: float) -> float:
    """``int (int_{t_a}^t exp(w (tau - t)) ||a(tau)|| dtau)^2 dt`` on the grid."""
    times = np.asarray(times, dtype=float)
    sel = times >= t_a - 1e-12
    tt = times[sel]
    h = np.linalg.norm(np.asarray(attack, dtype=float)[sel], axis=-1)
    inner = psi_trace(w_N, h, tt) / w_N
    return float(np.trapezoid(inner ** 2, tt))


def stack_filter_grad(objs, Yh):
    """Gradient of each node's objective at its filter estimate."""
    return objs.gradient(Yh)


__all__ = [
    "ThresholdParams", "MonitorState", "threshold_r", "threshold_v", "filter_field",
    "filter_deriv", "psi", "psi_trace", "arr_check", "detection_time",
    "detectability_margin", "funnel_psi", "undetectable_bound", "attack_energy",
    "disagreement",
]
