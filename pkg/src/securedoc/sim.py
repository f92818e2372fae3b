"""Fixed-step simulation of the coupled optimizer, plant, controller and monitor.

All nodes are integrated together with the classical four-stage
Runge-Kutta scheme.  Couplings between nodes (measurements, dual states,
commands) are re-evaluated at every stage; the alarm state and the
communication weights are held over a step and updated at step
boundaries.  Nodes must share one plant structure so that the controller
can be evaluated on stacked arrays.
"""
from __future__ import annotations

import time as _time
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .control import (R_STRICT, AdaptiveState, ControlGains, Funnel, inner_control_generic,
                      inner_control_n2, outer_control, outer_control_n2)
from .cyber import AgentState, Command, Objective, ObjectiveStack, disagreement
from .graph import Graph, is_connected, prune
from .monitor import ThresholdParams, _thr_r, _thr_v, filter_field
from .plant import AttackScript, PlantParams, no_attack, plant_field
from .secure import DisconnectedWarning, SecurityConfig, active_weights

R_GUARD = 0.95
BLOWUP = 1e3


class ScenarioError(ValueError):
    """Invalid scenario description."""


@dataclass
class NodeSpec:
    """Everything that is private to one node.

    Without a funnel, one with ``kb = 0.05``, ``c = 0.5`` and ``k0`` from
    :func:`auto_k0` is used.
    """

    plant: PlantParams
    objective: Objective
    x0: np.ndarray
    gains: Optional[ControlGains] = None
    funnel: Optional[Funnel] = None
    attack: Optional[AttackScript] = None
    y_r0: Optional[np.ndarray] = None
    v0: Optional[np.ndarray] = None
    omega_bar: float = 50.0

    def __post_init__(self):
        p = self.plant
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if self.x0.size != p.n * p.m:
            raise ScenarioError(f"x0 has {self.x0.size} entries, expected {p.n * p.m}")
        self.y_r0 = np.zeros(p.m) if self.y_r0 is None else np.asarray(self.y_r0, float).reshape(p.m)
        self.v0 = np.zeros(p.m) if self.v0 is None else np.asarray(self.v0, float).reshape(p.m)
        if self.gains is None:
            self.gains = ControlGains.default(p.n, p.p)
        if self.attack is None:
            self.attack = no_attack(p.m)
        if self.funnel is None:
            self.funnel = _auto_funnel(self)

    @property
    def z1_0(self) -> np.ndarray:
        return self.x0[: self.plant.m] - self.y_r0


def auto_k0(z1_0, m: int) -> float:
    """Funnel amplitude ``2 sqrt(m) max|z1(0)|`` (1.0 when the error is zero)."""
    zmax = float(np.max(np.abs(z1_0))) if np.size(z1_0) else 0.0
    return 2.0 * np.sqrt(m) * zmax if zmax > 0 else 1.0


def _auto_funnel(ns: NodeSpec, kb: float = 0.05, c: float = 0.5) -> Funnel:
    return Funnel(k0=auto_k0(ns.z1_0, ns.plant.m), kb=kb, c=c, m=ns.plant.m)


@dataclass
class ScenarioConfig:
    """Full description of one experiment.

    Attributes
    ----------
    graph : Graph
    nodes : list of NodeSpec
    eta : float
        Consensus gain of the optimizer.
    dt, horizon : float
        Step and final time (s).
    security : SecurityConfig, optional
        Quarantine settings; ``None`` disables the countermeasure.
    arr_mode : str
        ``"both"`` (alarm when either relation fails), ``"r"`` or ``"union"``.
    funnel_policy : str
        ``"strict"`` aborts when a node leaves its funnel while the network
        is attack free; ``"record"`` only counts violations.
    record_stride : int
        Record every ``record_stride``-th step.
    """

    graph: Graph
    nodes: List[NodeSpec]
    eta: float
    dt: float = 0.002
    horizon: float = 80.0
    security: Optional[SecurityConfig] = None
    arr_mode: str = "both"
    funnel_policy: str = "strict"
    record_stride: int = 1
    name: str = "scenario"

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def problems(self) -> List[str]:
        """Human-readable list of violated invariants (empty when valid)."""
        out = []
        N = self.graph.n_nodes
        if len(self.nodes) != N:
            out.append(f"graph has {N} nodes but {len(self.nodes)} node blocks given")
            return out
        n = self.nodes[0].plant.n
        if not self.eta > 2 * (n - 1):
            out.append(f"consensus gain must satisfy eta > 2(n-1) = {2 * (n - 1)}, got eta = {self.eta}")
        if not self.dt > 0:
            out.append("dt must be positive")
        if not self.horizon > 0:
            out.append("horizon must be positive")
        if self.arr_mode not in ("both", "r", "union"):
            out.append(f"unknown arr_mode {self.arr_mode!r}")
        if self.funnel_policy not in ("strict", "record"):
            out.append(f"unknown funnel_policy {self.funnel_policy!r}")
        if int(self.record_stride) < 1:
            out.append("record_stride must be >= 1")
        if not is_connected(self.graph):
            out.append("communication graph is not connected")
        ref = self.nodes[0].plant.structure()
        deg = self.graph.degree
        for j, ns in enumerate(self.nodes):
            if ns.plant.structure() != ref:
                out.append(f"node {j}: plant structure differs from node 0 (nodes must share one plant model)")
            f = ns.funnel
            if not f.admits(ns.z1_0):
                out.append(f"node {j}: funnel does not admit the initial error "
                           f"(max|z1(0)| = {np.max(np.abs(ns.z1_0)):.4g} >= delta(0) = {f.value(0.0):.4g})")
            a = (1.0 + self.eta) * deg[j]
            if np.isclose(f.c, a):
                out.append(f"node {j}: funnel rate c = {f.c} equals eta_j = {a}")
            if np.isclose(f.c, deg[j]):
                out.append(f"node {j}: funnel rate c = {f.c} equals w_N = {deg[j]}")
            if deg[j] <= 0:
                out.append(f"node {j}: isolated node")
        if self.security is not None and self.security.y_s.shape[-1] != self.nodes[0].plant.m:
            out.append("secure setpoint dimension does not match m")
        return out

    def validate(self) -> "ScenarioConfig":
        probs = self.problems()
        if probs:
            raise ScenarioError("; ".join(probs))
        for j, ns in enumerate(self.nodes):
            if ns.funnel.c > self.graph.degree[j]:
                warnings.warn(f"node {j}: funnel rate c exceeds w_N; the closed-form "
                              "v-threshold is then not guaranteed to dominate", stacklevel=2)
        return self


# -- trace -----------------------------------------------------------------

SIGNALS = ("x", "y", "y_r", "v", "lambda_hat", "rho_hat", "pi_hat", "u_I", "u_O", "z1",
           "ratio", "y_r_hat", "v_hat", "e_r", "e_v", "thr_r", "thr_v", "alarm", "flag")


@dataclass
class Trace:
    """Recorded signals on a uniform grid.

    ``data[name]`` has shape ``(K, N, d)``.  ``status`` is ``"ok"``,
    ``"diverged"`` or ``"funnel"``; ``t_end`` is the last recorded time.
    """

    t: np.ndarray
    data: dict
    status: str = "ok"
    message: str = ""
    t_end: float = 0.0
    t_detect: list = field(default_factory=list)
    max_ratio: Optional[np.ndarray] = None
    violations: Optional[np.ndarray] = None
    wall: float = 0.0
    warnings: list = field(default_factory=list)

    def __getitem__(self, name) -> np.ndarray:
        return self.data[name]

    @property
    def n_nodes(self) -> int:
        return self.data["y"].shape[1]

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def at(self, t: float) -> int:
        """Index of the grid time closest to ``t``."""
        return int(np.argmin(np.abs(self.t - t)))

    def positions(self) -> np.ndarray:
        """First state block ``x1`` of every node, shape ``(K, N, m)``."""
        m = self.data["y"].shape[-1]
        return self.data["x"][..., :m]


# -- world -----------------------------------------------------------------

class World:
    """Stacked simulation state plus the discrete bookkeeping."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        nodes = cfg.nodes
        p0 = nodes[0].plant
        self.plant = p0
        self.N = N = len(nodes)
        self.n, self.m, self.p = n, m, p = p0.n, p0.m, p0.p
        self.q = p + 1
        self.objs = ObjectiveStack([ns.objective for ns in nodes])
        self.theta = np.stack([ns.plant.theta for ns in nodes])
        qs = [ns.plant.q for ns in nodes]
        self.Q = np.stack(qs) if all(np.shape(a) == np.shape(qs[0]) for a in qs) and qs[0].size else p0.q
        self.c1 = np.array([ns.gains.c[0] for ns in nodes])
        self.c2 = np.array([ns.gains.c[-1] for ns in nodes])
        self.Gamma = np.stack([ns.gains.Gamma for ns in nodes])
        self.g0 = np.array([ns.gains.gamma0 for ns in nodes])
        self.g1 = np.array([ns.gains.gamma1 * ns.gains.pi_sign for ns in nodes])
        self.k0 = np.array([ns.funnel.k0 for ns in nodes])
        self.kb = np.array([ns.funnel.kb for ns in nodes])
        self.fc = np.array([ns.funnel.c for ns in nodes])
        self.sqm = np.sqrt(m)
        self.attacks = [ns.attack for ns in nodes]
        self.sec = cfg.security
        self.secure_on = self.sec is not None and self.sec.enabled
        self.zero_mode = self.secure_on and self.sec.mode == "zero"
        # state layout
        sizes = dict(x=n * m, yr=m, v=m, lam=self.q, rho=1, pi=m, yh=m, vh=m)
        self.sl, off = {}, 0
        for k, s in sizes.items():
            self.sl[k] = slice(off, off + s)
            off += s
        self.D = off
        X = np.zeros((N, off))
        for j, ns in enumerate(nodes):
            X[j, self.sl["x"]] = ns.x0
            X[j, self.sl["yr"]] = ns.y_r0
            X[j, self.sl["v"]] = ns.v0
            X[j, self.sl["yh"]] = ns.y_r0
            X[j, self.sl["vh"]] = ns.v0
        self.X = X
        self.t = 0.0
        self.k = 0
        self.flags = np.zeros(N, bool)
        self.alarm = np.zeros(N, bool)
        self.t_detect = [None] * N
        self.W = np.array(cfg.graph.weights)
        deg = self.W.sum(axis=1)
        self.tps = [ThresholdParams.for_node(cfg.eta, deg[j], ns.funnel.k0, ns.funnel.kb,
                                             ns.funnel.c, omega_bar=ns.omega_bar,
                                             c1=ns.gains.c[0]) for j, ns in enumerate(nodes)]
        self.monitored = deg > 0
        self.max_ratio = np.zeros(N)
        self.violations = np.zeros(N, int)
        self.warnings: List[str] = []
        self.generic = n != 2
        self._thr_cache = None

    # -- pieces -----------------------------------------------------------
    def attack_values(self, t):
        return np.stack([a(t, self) for a in self.attacks])

    def attacked(self, t) -> np.ndarray:
        return np.array([a.active(t) for a in self.attacks])

    def r_sat(self, t) -> np.ndarray:
        """Barrier saturation per node.

        The funnel is only guaranteed while the whole network is attack
        free.  Once an attack is active anywhere or a node is flagged, every
        node uses the guarded barrier and violations are only recorded.
        """
        guard = self.cfg.funnel_policy == "record" or self.flags.any() or self.attacked(t).any()
        return np.full(self.N, R_GUARD if guard else R_STRICT)

    def unpack(self, X):
        s = self.sl
        return (X[:, s["x"]].reshape(self.N, self.n, self.m), X[:, s["yr"]], X[:, s["v"]],
                X[:, s["lam"]], X[:, s["rho"]][:, 0], X[:, s["pi"]], X[:, s["yh"]], X[:, s["vh"]])

    def _dphi1(self, x1, th):
        p = self.plant
        if p.phi1_jac is not None:
            return p.phi1_jac(x1, th, self.Q)
        h = 1e-6
        out = np.empty(x1.shape + (self.m,))
        xb = np.zeros((self.N, self.n, self.m))
        for k in range(self.m):
            xp, xm = x1.copy(), x1.copy()
            xp[:, k] += h
            xm[:, k] -= h
            xb[:, 0] = xp
            fp = np.einsum("nij,nj->ni", p.regressor(xb, self.Q)[:, 0], th)
            xb[:, 0] = xm
            fm = np.einsum("nij,nj->ni", p.regressor(xb, self.Q)[:, 0], th)
            out[..., k] = (fp - fm) / (2 * h)
        return out

    def rhs(self, t, X, A, rsat, full=False):
        """Stacked derivative; ``A`` holds the attack values at ``t``."""
        N, m = self.N, self.m
        xb, yr, v, lam, rho, pi, yh, vh = self.unpack(X)
        flags = self.flags if self.secure_on else np.zeros(N, bool)
        W = self.W
        eta = self.cfg.eta
        Y = xb[:, 0] + A
        Yx, Vx = Y, v
        if self.zero_mode and flags.any():
            Yx, Vx = Y.copy(), v.copy()
            Yx[flags] = 0.0
            Vx[flags] = 0.0
        deg = W.sum(axis=1)[:, None]
        grad = self.objs.gradient(yr)
        cons = deg * Yx - W @ Yx
        vt = deg * v - W @ Vx
        yr_dot = -grad - vt - (1.0 + eta) * cons
        v_dot = cons
        # commands after switching
        if flags.any():
            f = flags[:, None]
            ys = np.broadcast_to(self.sec.y_s, yr.shape)
            yr_c = np.where(f, ys, yr)
            g_c = np.where(f, 0.0, grad)
            vt_c = np.where(f, 0.0, vt)
            yr_dot = np.where(f, 0.0, yr_dot)
            v_dot = np.where(f, 0.0, v_dot)
        else:
            yr_c, g_c, vt_c = yr, grad, vt
        hess = self.objs.hessian(yr_c)
        delta = (self.k0 * np.exp(-self.fc * t) + self.kb) / self.sqm
        if self.generic:
            out = self._generic_control(t, X, yr_c, g_c, vt_c, hess, delta, rsat)
            u_O = out["u_O"]
        else:
            Q = self.Q
            phi = self.plant.regressor(xb, Q)
            beta = self.plant.beta(xb, Q)
            drift = self.plant.drift(xb, Q) if self.plant.drift is not None else None
            binv = (self.plant.beta_inv(xb, Q) if self.plant.beta_inv is not None
                    else np.linalg.inv(beta))
            u_O, a1O = outer_control_n2(g_c, vt_c, hess, beta, binv)
            z1 = xb[:, 0] - yr_c
            pi_dot = self.g1[:, None] * z1
            out = inner_control_n2(xb[:, 0], xb[:, 1], yr_c, a1O, lam, rho, pi, pi_dot,
                                   self.c1, self.c2, self.Gamma, delta, phi[:, 0], phi[:, 1],
                                   self._dphi1(xb[:, 0], lam[:, : self.p]), beta, drift, rsat,
                                   beta_inv=binv)
        u = out["u_I"] + u_O
        if self.generic:
            xdot = plant_field(xb, u, self.plant, theta=self.theta, q=self.Q, t=t)
        else:
            xdot = plant_field(xb, u, self.plant, theta=self.theta, q=self.Q, t=t,
                               phi=phi, beta=beta, drift=drift)
        z1 = out["z1"]
        dX = np.empty_like(X)
        s = self.sl
        dX[:, s["x"]] = xdot.reshape(N, -1)
        dX[:, s["yr"]] = yr_dot
        dX[:, s["v"]] = v_dot
        dX[:, s["lam"]] = np.einsum("nij,nj->ni", self.Gamma, out["tau"])
        dX[:, s["rho"]] = (self.g0 * np.einsum("ni,ni->n", z1, z1))[:, None]
        dX[:, s["pi"]] = self.g1[:, None] * z1
        yh_dot, vh_dot = filter_field(yh, vh, v, vt, Yx, self.objs.gradient(yh), W, eta)
        if flags.any():
            yh_dot[flags] = 0.0
            vh_dot[flags] = 0.0
        dX[:, s["yh"]] = yh_dot
        dX[:, s["vh"]] = vh_dot
        if full:
            return dX, dict(y=Y, u_I=out["u_I"], u_O=u_O, z1=z1, z2=out.get("z2"),
                           ratio=np.abs(out["r"]).max(axis=1))
        return dX

    def _generic_control(self, t, X, yr_c, g_c, vt_c, hess, delta, rsat):
        N = self.N
        xb, yr, v, lam, rho, pi, yh, vh = self.unpack(X)
        uI = np.empty((N, self.m))
        uO = np.empty((N, self.m))
        tau = np.empty((N, self.q))
        for j, ns in enumerate(self.cfg.nodes):
            cmd = Command(yr_c[j], g_c[j], vt_c[j])
            a = AdaptiveState(lam[j], rho[j], pi[j])
            obj = ns.objective

            def grad_fn(s, obj=obj):
                return obj.gradient(s)

            if self.flags[j] and self.secure_on:
                def grad_fn(s):
                    return np.zeros_like(s)
                hj = np.zeros_like(hess[j])
            else:
                hj = hess[j]
            res = inner_control_generic(X[j, self.sl["x"]], a, cmd, ns.gains, ns.funnel,
                                        ns.plant, t, hess=hj, grad_fn=grad_fn, r_sat=rsat[j])
            uI[j], tau[j] = res["u_I"], res["tau"]
            uO[j] = outer_control(cmd, hj, ns.plant.beta_at(xb[j]), n=self.n, grad_fn=grad_fn)[0]
        z1 = xb[:, 0] - yr_c
        return dict(u_I=uI, u_O=uO, tau=tau, z1=z1, r=z1 / delta[:, None])

    # -- discrete updates -----------------------------------------------------
    def thresholds(self, t):
        if self._thr_cache is None:
            f = lambda k: np.array([getattr(tp, k) for tp in self.tps])
            self._thr_cache = {k: f(k) for k in ("eta_j", "w_N", "k0", "kb", "c", "e_r0", "e_v0", "t0")}
        P = self._thr_cache
        s = t - P["t0"]
        tr = _thr_r(P["eta_j"], P["k0"], P["kb"], P["c"], P["e_r0"], s)
        tv = _thr_v(P["w_N"], P["k0"], P["kb"], P["c"], P["e_r0"], P["e_v0"], s)
        return tr, tv

    def residuals(self):
        _, yr, v, _, _, _, yh, vh = self.unpack(self.X)
        return yr - yh, v - vh

    def check_alarms(self, t):
        """Evaluate the ARR at a step boundary; returns newly alarmed nodes."""
        er, ev = self.residuals()
        tr, tv = self.thresholds(t)
        nr = np.linalg.norm(er, axis=1)
        nv = np.linalg.norm(ev, axis=1)
        ok_r, ok_v = nr <= tr, nv <= tv
        mode = self.cfg.arr_mode
        if mode == "both":
            bad = ~(ok_r & ok_v)
        elif mode == "r":
            bad = ~ok_r
        else:
            bad = ~(ok_r | ok_v)
        bad &= self.monitored & ~self.alarm
        new = np.flatnonzero(bad)
        for j in new:
            self.alarm[j] = True
            self.t_detect[j] = t
        return new, er, ev, tr, tv

    def apply_flags(self, new, t):
        if not self.secure_on or len(new) == 0:
            return
        self.flags[new] = True
        old_deg = self.W.sum(axis=1)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", DisconnectedWarning)
            self.W = active_weights(self.cfg.graph, self.flags, self.sec)
        for w in caught:
            self.warnings.append(f"t={t:.6g}: {w.message}")
        deg = self.W.sum(axis=1)
        for j in range(self.N):
            if self.flags[j]:
                continue
            if deg[j] <= 0:
                self.monitored[j] = False
                self.warnings.append(f"t={t:.6g}: node {j} isolated; monitor stopped")
            elif deg[j] != old_deg[j]:
                self.tps[j] = self.tps[j].restart(t, self.cfg.eta, deg[j])
        self._thr_cache = None


def step(world: World, dt: float, record: bool = False):
    """Advance ``world`` by one RK4 step of size ``dt``.

    Returns the stage-one diagnostics (inputs, errors) at the start of the
    step when ``record`` is true.
    """
    t, X = world.t, world.X
    rs = world.r_sat(t)
    A1 = world.attack_values(t)
    Ah = world.attack_values(t + 0.5 * dt)
    A4 = world.attack_values(t + dt)
    if record:
        k1, diag = world.rhs(t, X, A1, rs, full=True)
    else:
        k1, diag = world.rhs(t, X, A1, rs), None
    k2 = world.rhs(t + 0.5 * dt, X + 0.5 * dt * k1, Ah, rs)
    k3 = world.rhs(t + 0.5 * dt, X + 0.5 * dt * k2, Ah, rs)
    k4 = world.rhs(t + dt, X + dt * k3, A4, rs)
    world.X = X + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    world.k += 1
    world.t = world.k * dt
    return diag


def _diagnostics(world: World):
    rs = world.r_sat(world.t)
    _, d = world.rhs(world.t, world.X, world.attack_values(world.t), rs, full=True)
    return d


def run(cfg: ScenarioConfig, validate: bool = True) -> Trace:
    """Integrate ``cfg`` to its horizon, or until divergence or funnel loss.

    The returned trace always covers ``[0, t_end]``; ``status`` and
    ``message`` explain an early stop.
    """
    if validate:
        cfg.validate()
    t0 = _time.perf_counter()
    w = World(cfg)
    dt = cfg.dt
    K = int(round(cfg.horizon / dt))
    stride = int(cfg.record_stride)
    nrec = K // stride + 1
    N, m = w.N, w.m
    dims = dict(x=w.n * m, y=m, y_r=m, v=m, lambda_hat=w.q, rho_hat=1, pi_hat=m, u_I=m,
                u_O=m, z1=m, ratio=1, y_r_hat=m, v_hat=m, e_r=m, e_v=m, thr_r=1, thr_v=1,
                alarm=1, flag=1)
    data = {k: np.full((nrec, N, d), np.nan) for k, d in dims.items()}
    times = np.arange(nrec) * stride * dt
    status, msg = "ok", ""
    _, er, ev, tr, tv = w.check_alarms(0.0)
    new = np.flatnonzero(w.alarm)
    w.apply_flags(new, 0.0)

    def store(i, diag, X):
        xb, yr, v, lam, rho, pi, yh, vh = w.unpack(X)
        data["x"][i] = X[:, w.sl["x"]]
        data["y"][i] = diag["y"]
        data["y_r"][i] = yr
        data["v"][i] = v
        data["lambda_hat"][i] = lam
        data["rho_hat"][i, :, 0] = rho
        data["pi_hat"][i] = pi
        data["u_I"][i] = diag["u_I"]
        data["u_O"][i] = diag["u_O"]
        data["z1"][i] = diag["z1"]
        data["ratio"][i, :, 0] = diag["ratio"]
        data["y_r_hat"][i] = yh
        data["v_hat"][i] = vh
        data["e_r"][i] = er
        data["e_v"][i] = ev
        data["thr_r"][i, :, 0] = tr
        data["thr_v"][i, :, 0] = tv
        data["alarm"][i, :, 0] = w.alarm
        data["flag"][i, :, 0] = w.flags

    last = 0
    for k in range(K):
        rec = k % stride == 0
        X0 = w.X
        diag = step(w, dt, record=rec)
        if rec:
            store(k // stride, diag, X0)
            last = k // stride
        X = w.X
        if not np.all(np.isfinite(X)) or np.abs(X).max() > BLOWUP:
            status = "diverged"
            bad = np.nan_to_num(np.abs(X), nan=np.inf).max(axis=1).argmax()
            msg = f"state diverged at t={w.t:.6g} s (node {bad})"
            break
        # funnel bookkeeping at the step boundary
        xb, yr = X[:, w.sl["x"]].reshape(N, w.n, m), X[:, w.sl["yr"]]
        yr_c = yr
        if w.secure_on and w.flags.any():
            yr_c = np.where(w.flags[:, None], np.broadcast_to(w.sec.y_s, yr.shape), yr)
        delta = (w.k0 * np.exp(-w.fc * w.t) + w.kb) / w.sqm
        ratio = np.abs(xb[:, 0] - yr_c).max(axis=1) / delta
        w.max_ratio = np.maximum(w.max_ratio, ratio)
        out = ratio >= 1.0
        w.violations += out
        strict = (w.r_sat(w.t) == R_STRICT) & out
        if strict.any():
            j = int(np.flatnonzero(strict)[0])
            status = "funnel"
            msg = f"node {j} left its funnel at t={w.t:.6g} s (|z1/delta| = {ratio[j]:.4g})"
            break
        new, er, ev, tr, tv = w.check_alarms(w.t)
        w.apply_flags(new, w.t)
    else:
        if K % stride == 0:
            store(K // stride, _diagnostics(w), w.X)
            last = K // stride
    if status != "ok":
        # record the state at the stopping time when it falls on the grid
        if w.k % stride == 0 and w.k // stride < nrec:
            try:
                with np.errstate(all="ignore"):
                    store(w.k // stride, _diagnostics(w), w.X)
                last = w.k // stride
            except Exception:
                pass
    keep = last + 1
    data = {k: v[:keep] for k, v in data.items()}
    tr = Trace(times[:keep], data, status, msg, float(times[last]), list(w.t_detect),
               w.max_ratio.copy(), w.violations.copy(), _time.perf_counter() - t0,
               list(w.warnings))
    return tr


__all__ = ["NodeSpec", "ScenarioConfig", "ScenarioError", "Trace", "World", "step", "run",
           "auto_k0", "SIGNALS", "R_GUARD", "BLOWUP"]
