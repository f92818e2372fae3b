"""Acceptance checks of the library, shared by the CLI and the test suite.

Each ``check_*`` function takes a :class:`RunCache`, so the long
simulations are run once and reused, and returns one or more
:class:`CriterionResult`.  :func:`run_all` evaluates everything in order.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List

import numpy as np

from . import rov
from .cyber import consensus_optimum, quadratic
from .graph import laplacian, ring
from .monitor import _thr_r, _thr_v, psi_trace
from .plant import plant_field
from .scenario import build_scenario, random_generic
from .sim import Trace, run

TOL = 0.02
HEADING1 = -7.0 * np.pi / 96.0
CENTROID1 = np.array([0.15, 0.25, 0.625, HEADING1])
HEADING3 = -(np.pi / 6 + np.pi / 8) / 3.0
CENTROID3 = np.array([0.4 / 3, 0.5 / 3, 1.5 / 3, HEADING3])
N_GENERIC = 20
INPUTS = ("u_I", "u_O")


@dataclass
class CriterionResult:
    key: str
    title: str
    passed: bool
    detail: str = ""
    metrics: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} [{self.key}] {self.title}: {self.detail}"


class RunCache:
    """Lazily runs and memoises the scenarios the checks need."""

    def __init__(self, generic_seeds=range(N_GENERIC)):
        self.generic_seeds = list(generic_seeds)
        self._runs: Dict[str, tuple] = {}

    def _get(self, key: str, make: Callable):
        if key not in self._runs:
            cfg = make()
            t0 = time.perf_counter()
            tr = run(cfg)
            self._runs[key] = (cfg, tr, time.perf_counter() - t0)
        return self._runs[key]

    def case(self, k: int):
        # case 1 is recorded at every step for the residual-bound check
        stride = 1 if k == 1 else 10
        return self._get(f"case{k}", lambda: rov.preset_case(k, record_stride=stride))

    def l2(self):
        return self._get("l2", rov.preset_l2)

    def generic(self, seed: int):
        def make():
            d = random_generic(seed)
            d["record_stride"] = 1
            return build_scenario(d)
        return self._get(f"generic{seed}", make)

    def healthy(self):
        """``(name, cfg, trace)`` of every attack-free run."""
        out = [("rov-case1",) + self.case(1)[:2]]
        out += [(f"generic-{s}",) + self.generic(s)[:2] for s in self.generic_seeds]
        return out


# -- helpers ---------------------------------------------------------------

def _pos(tr: Trace) -> np.ndarray:
    return tr.positions()


def max_error_after(tr: Trace, target, t_from: float, nodes=None) -> float:
    k = np.searchsorted(tr.t, t_from - 1e-9)
    x = _pos(tr)[k:]
    if nodes is not None:
        x = x[:, nodes]
    return float(np.abs(x - np.asarray(target)).max())


def signal_peaks(tr: Trace) -> dict:
    return {k: float(np.nanmax(np.abs(v))) for k, v in tr.data.items()}


def healthy_rates(cfg, tr: Trace) -> tuple:
    """Time derivatives of ``z1`` and ``e_r`` rebuilt from a healthy trace.

    Evaluates the plant field and the cyber-layer right-hand sides on the
    recorded signals (no quarantine, full weights).
    """
    W = np.array(cfg.graph.weights)
    wN = W.sum(axis=1)
    K, N = len(tr.t), tr.n_nodes
    m = tr["y"].shape[-1]
    x, yr, v, y, yh = tr["x"], tr["y_r"], tr["v"], tr["y"], tr["y_r_hat"]
    x1d = np.empty((K, N, m))
    for j, ns in enumerate(cfg.nodes):
        xb = x[:, j].reshape(K, ns.plant.n, m)
        x1d[:, j] = plant_field(xb, np.zeros((K, m)), ns.plant)[:, 0]
    grad = np.empty((K, N, m))
    grad_h = np.empty((K, N, m))
    for j, ns in enumerate(cfg.nodes):
        g = ns.objective.gradient
        grad[:, j] = [g(s) for s in yr[:, j]]
        grad_h[:, j] = [g(s) for s in yh[:, j]]
    Wy = np.einsum("ij,kjm->kim", W, y)
    vt = wN[None, :, None] * v - np.einsum("ij,kjm->kim", W, v)
    yr_dot = -grad - vt - (1.0 + cfg.eta) * (wN[None, :, None] * y - Wy)
    yh_dot = -grad_h - vt - (1.0 + cfg.eta) * (wN[None, :, None] * yh - Wy)
    return x1d - yr_dot, yr_dot - yh_dot


def residual_bound_margins(cfg, tr: Trace) -> tuple:
    """Largest ``||e|| - bound`` of both healthy residual bounds over all nodes.

    The convolutions are evaluated by the cubic Hermite product rule of
    :func:`psi_trace`, with slopes from :func:`healthy_rates`.
    """
    W = np.array(cfg.graph.weights)
    wN = W.sum(axis=1)
    eta_j = (1.0 + cfg.eta) * wN
    t = tr.t
    er, ev, z1 = tr["e_r"], tr["e_v"], tr["z1"]
    z1d, erd = healthy_rates(cfg, tr)
    worst_r = worst_v = -np.inf
    for j in range(tr.n_nodes):
        nr = np.linalg.norm(er[:, j], axis=1)
        nv = np.linalg.norm(ev[:, j], axis=1)
        br = np.exp(-eta_j[j] * t) * nr[0] + psi_trace(eta_j[j], z1[:, j], t, z1d[:, j])
        bv = np.exp(-wN[j] * t) * nv[0] + psi_trace(wN[j], er[:, j] + z1[:, j], t,
                                                     erd[:, j] + z1d[:, j])
        worst_r = max(worst_r, float(np.max(nr - br)))
        worst_v = max(worst_v, float(np.max(nv - bv)))
    return worst_r, worst_v


def funnel_margin(cfg, tr: Trace) -> float:
    """Largest ``||z1|| / (sqrt(m) delta)`` over nodes and recorded times."""
    worst = 0.0
    for j, ns in enumerate(cfg.nodes):
        f = ns.funnel
        lim = np.sqrt(f.m) * f.value(tr.t)
        worst = max(worst, float(np.max(np.linalg.norm(tr["z1"][:, j], axis=1) / lim)))
    return worst


def sample_dominance(n: int = 1000, seed: int = 0) -> tuple:
    """Compare the closed-form bounds with integrated ``Psi`` of admissible traces.

    Returns the smallest margins ``closed - Psi`` of the r and v bounds.
    Traces are ``h(tau) = s(tau) * bound(tau)`` with random smooth
    ``s`` in ``[0, 1]``, including ``s = 1``; the v-bound samples use
    ``c < w_N``.
    """
    from scipy.integrate import quad

    rng = np.random.default_rng(seed)
    worst_r = worst_v = np.inf
    for i in range(n):
        w = rng.uniform(0.5, 4.0)
        eta = rng.uniform(2.1, 6.0)
        a = (1.0 + eta) * w
        c = rng.uniform(0.05, 0.95) * w
        k0 = rng.uniform(0.1, 5.0)
        kb = rng.uniform(0.01, 0.5)
        er0 = rng.uniform(0.0, 1.0)
        t = rng.uniform(0.05, 15.0)
        if i < 20:
            s = lambda tau: 1.0
        else:
            f1, f2, p1, p2 = rng.uniform(0.1, 5.0, 2).tolist() + rng.uniform(0, 2 * np.pi, 2).tolist()
            s = lambda tau, f1=f1, f2=f2, p1=p1, p2=p2: (
                0.25 * (1 + np.sin(f1 * tau + p1)) * (1 + np.cos(f2 * tau + p2)) * 0.999 + 0.001)
        bound = lambda tau: k0 * np.exp(-c * tau) + kb
        if i % 2 == 0:
            val = quad(lambda tau: a * np.exp(a * (tau - t)) * s(tau) * bound(tau), 0.0, t,
                       epsabs=1e-13, epsrel=1e-12, limit=400)[0]
            closed = _thr_r(a, k0, kb, c, 0.0, t)
            worst_r = min(worst_r, closed - val)
        else:
            env = lambda tau: _thr_r(a, k0, kb, c, er0, tau) + bound(tau)
            val = quad(lambda tau: w * np.exp(w * (tau - t)) * s(tau) * env(tau), 0.0, t,
                       epsabs=1e-13, epsrel=1e-12, limit=400)[0]
            closed = _thr_v(w, k0, kb, c, er0, 0.0, t)
            worst_v = min(worst_v, closed - val)
    return worst_r, worst_v


def rk4_order(horizon: float = 1.0, dt: float = 0.002) -> dict:
    """Case-1 position error against a ``dt/8`` reference for ``dt`` and ``dt/2``."""
    def positions(h):
        stride = int(round(dt / h)) * 10
        tr = run(rov.preset_case(1, dt=h, horizon=horizon, record_stride=stride))
        return tr.positions()

    ref = positions(dt / 8)
    e1 = float(np.abs(positions(dt) - ref).max())
    e2 = float(np.abs(positions(dt / 2) - ref).max())
    return dict(err_dt=e1, err_half=e2, ratio=e1 / e2)


def fd_checks(n: int = 100, seed: int = 0) -> tuple:
    """Worst relative errors of gradient and Hessian against central differences."""
    rng = np.random.default_rng(seed)
    g_err = h_err = 0.0
    for _ in range(n):
        m = int(rng.integers(1, 5))
        B = rng.normal(size=(m, m))
        obj = quadratic(rng.uniform(-2, 2, m), B @ B.T + 0.2 * np.eye(m))
        y = rng.uniform(-3, 3, m)
        eps = 1e-5
        E = np.eye(m) * eps
        fd_g = np.array([(obj.value(y + e) - obj.value(y - e)) / (2 * eps) for e in E])
        fd_h = np.stack([(obj.gradient(y + e) - obj.gradient(y - e)) / (2 * eps) for e in E], axis=1)
        g, H = obj.gradient(y), obj.hessian(y)
        g_err = max(g_err, float(np.linalg.norm(fd_g - g) / max(np.linalg.norm(g), 1e-12)))
        h_err = max(h_err, float(np.linalg.norm(fd_h - H) / max(np.linalg.norm(H), 1e-12)))
    return g_err, h_err


# -- criteria --------------------------------------------------------------

def check_1(cache: RunCache) -> List[CriterionResult]:
    cfg, tr, wall = cache.case(1)
    err = max_error_after(tr, CENTROID1, 30.0)
    peaks = signal_peaks(tr)
    states = {k: v for k, v in peaks.items() if k not in INPUTS}
    s_peak = max(states.values())
    ok = tr.ok and err < TOL and s_peak < 1e3 and wall < 60.0
    res = [CriterionResult(
        "1", "healthy optimality (case 1)", ok,
        f"status={tr.status}, max error after 30 s = {err:.4g} (< {TOL}), "
        f"largest non-input signal = {s_peak:.4g} (< 1e3), runtime = {wall:.1f} s (< 60)",
        dict(err=err, peak=s_peak, wall=wall))]
    u_peak = max(peaks[k] for k in INPUTS)
    res.append(CriterionResult(
        "1b", "input signals below 1e3 (force units)", u_peak < 1e3,
        f"largest |u_I|, |u_O| = {u_peak:.4g} N", dict(peak=u_peak)))
    return res


def check_2(cache: RunCache) -> List[CriterionResult]:
    worst_L = worst_d = 0.0
    bad = []
    for s in cache.generic_seeds:
        cfg, tr, _ = cache.generic(s)
        opt = consensus_optimum([ns.objective for ns in cfg.nodes])
        y = _pos(tr)[-1]
        nL = float(np.linalg.norm(laplacian(cfg.graph) @ y))
        dist = float(np.abs(y - opt).max())
        worst_L, worst_d = max(worst_L, nL), max(worst_d, dist)
        if not (tr.ok and tr.t[-1] >= cfg.horizon - 1e-9 and nL < 1e-2 and dist < 1e-2):
            bad.append(s)
    ok = not bad
    return [CriterionResult(
        "2", f"generic consensus/optimality ({len(cache.generic_seeds)} random scenarios)", ok,
        f"worst ||L y|| = {worst_L:.3g}, worst distance = {worst_d:.3g} (< 1e-2)"
        + (f", failing seeds {bad}" if bad else ""), dict(L=worst_L, dist=worst_d))]


def check_3(cache: RunCache) -> List[CriterionResult]:
    cfg, tr, _ = cache.case(3)
    td = tr.t_detect
    t4 = td[3]
    others = [j for j in range(3) if td[j] is not None]
    ok = tr.ok and t4 is not None and 30.0 <= t4 <= 33.0 and not others
    return [CriterionResult(
        "3", "detection and isolation (case 3)", ok,
        f"T_d(node 4) = {t4}, alarms on nodes 1-3: {[j + 1 for j in others] or 'none'}",
        dict(t_detect=t4))]


def check_4(cache: RunCache) -> List[CriterionResult]:
    cfg, tr, _ = cache.case(3)
    y = _pos(tr)[-1]
    e_trio = float(np.abs(y[:3] - CENTROID3).max())
    e4 = float(np.abs(y[3]).max())
    ok = tr.ok and e_trio < TOL and e4 < TOL
    return [CriterionResult(
        "4", "secure consensus (case 3)", ok,
        f"nodes 1-3 error = {e_trio:.4g}, node 4 distance to origin = {e4:.4g} (< {TOL})",
        dict(trio=e_trio, node4=e4))]


def check_5(cache: RunCache) -> List[CriterionResult]:
    cfg, tr, _ = cache.case(2)
    ok = tr.status == "diverged" and tr.t_end < 45.0
    return [CriterionResult(
        "5", "unprotected failure (case 2)", ok,
        f"status={tr.status} ({tr.message or 'no message'})", dict(t_end=tr.t_end))]


def check_6(cache: RunCache) -> List[CriterionResult]:
    cfg, tr, _ = cache.l2()
    alarms = [j for j, t in enumerate(tr.t_detect) if t is not None]
    err = max_error_after(tr, CENTROID1, 30.0)
    ok = tr.ok and not alarms and err < 0.05
    return [CriterionResult(
        "6", "undetectable L2 attack is harmless", ok,
        f"alarms: {alarms or 'none'}, max error after 30 s = {err:.4g} (< 0.05)",
        dict(err=err))]


def check_7(cache: RunCache) -> List[CriterionResult]:
    worst_r = worst_v = -np.inf
    for name, cfg, tr in cache.healthy():
        r, v = residual_bound_margins(cfg, tr)
        worst_r, worst_v = max(worst_r, r), max(worst_v, v)
    dom_r, dom_v = sample_dominance(1000)
    ok_a = worst_r <= 1e-4 and worst_v <= 1e-4
    ok_b = dom_r >= -1e-9 and dom_v >= -1e-9
    return [CriterionResult(
        "7", "threshold soundness", ok_a and ok_b,
        f"max(||e_r|| - bound) = {worst_r:.3g}, max(||e_v|| - bound) = {worst_v:.3g} (<= 1e-4); "
        f"closed-form margins over 1000 samples: r {dom_r:.3g}, v {dom_v:.3g} (>= -1e-9)",
        dict(res_r=worst_r, res_v=worst_v, dom_r=dom_r, dom_v=dom_v))]


def check_8(cache: RunCache) -> List[CriterionResult]:
    worst = 0.0
    for name, cfg, tr in cache.healthy():
        worst = max(worst, funnel_margin(cfg, tr))
    return [CriterionResult(
        "8", "funnel containment on healthy runs", worst < 1.0,
        f"max ||z1|| / (sqrt(m) delta) = {worst:.4g} (< 1)", dict(ratio=worst))]


def check_9(cache: RunCache) -> List[CriterionResult]:
    g_err, h_err = fd_checks()
    spec = np.sort(np.linalg.eigvalsh(laplacian(ring(4))))
    s_err = float(np.abs(spec - np.array([0.0, 2.0, 2.0, 4.0])).max())
    order = rk4_order()
    a = run(rov.preset_case(1, horizon=1.0, record_stride=1))
    b = run(rov.preset_case(1, horizon=1.0, record_stride=1))
    same = all(np.array_equal(a.data[k], b.data[k], equal_nan=True) for k in a.data)
    ok = g_err < 1e-6 and h_err < 1e-5 and s_err < 1e-9 and 12.0 <= order["ratio"] <= 20.0 and same
    return [CriterionResult(
        "9", "numerics", ok,
        f"FD gradient {g_err:.2g} (< 1e-6), Hessian {h_err:.2g} (< 1e-5); ring-4 spectrum error "
        f"{s_err:.2g}; RK4 halving ratio {order['ratio']:.2f} (16 expected); "
        f"bit-exact repeat: {same}", dict(order=order, g=g_err, h=h_err))]


CHECKS = (check_1, check_2, check_3, check_4, check_5, check_6, check_7, check_8, check_9)


def run_all(cache: RunCache = None, echo: Callable = None) -> List[CriterionResult]:
    cache = cache or RunCache()
    out = []
    for chk in CHECKS:
        for res in chk(cache):
            out.append(res)
            if echo is not None:
                echo(res.line())
    return out


__all__ = ["CriterionResult", "RunCache", "run_all", "CHECKS", "CENTROID1", "CENTROID3",
           "residual_bound_margins", "healthy_rates", "funnel_margin", "sample_dominance", "rk4_order", "fd_checks",
           "max_error_after", "signal_peaks"] + [c.__name__ for c in CHECKS]
