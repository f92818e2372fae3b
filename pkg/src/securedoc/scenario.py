"""Scenario documents.

A scenario is a nested mapping (written as YAML on disk).  Example::

    name: demo
    preset: rov-case3          # optional base document, see PRESETS
    eta: 2.5
    dt: 0.002
    horizon: 80
    record_stride: 10
    arr_mode: r                # both | r | union
    funnel_policy: strict      # strict | record
    graph:
      n: 4
      edges: [[0, 1, 1.0], [1, 2, 1.0], [2, 3, 1.0], [3, 0, 1.0]]
    plant:
      model: rov               # rov | generic
      params: {}               # RovParams overrides, or m / n for generic
    security: {enabled: true, mode: prune, y_s: [0, 0, 0, 0]}
    defaults:                  # merged into every node block
      funnel: {k0: auto, kb: 0.05, c: 0.25}
      gains: {c: [2, 2], Gamma: 1.0, gamma0: 1, gamma1: 1, pi_sign: -1}
      threshold: {omega_bar: 50}
    nodes:
      - x0: [0.3, 0.4, 1.0, 0, 0, 0, 0, 0]
        y_r0: [0, 0, 0, 0]
        objective: {center: [0.3, 0.4, 1.0, 0]}
        attack: {kind: exp_oscillation, onset: 30, rate: 0.5, offset: -1}
        plant: {theta: [...], b: [...]}     # generic model only

When ``preset`` is given the document is deep-merged onto the preset;
node lists are merged entry by entry.  ``funnel.k0: auto`` sizes the
funnel from the initial errors (``fleet`` uses the largest error of all
nodes for every node, ``fleet2`` twice that).  ``Gamma`` may be a scalar
multiple of the identity.  Attack kinds are ``none``,
``exp_oscillation`` (``onset``, ``rate``, ``offset``), ``l2_decaying``
(``onset``, ``amplitude``, ``rate``) and ``bias`` (``value``, ``onset``).
"""
from __future__ import annotations

import copy
from typing import Any, Mapping

import numpy as np
import yaml

from .control import ControlGains, Funnel
from .cyber import quadratic
from .graph import build_graph
from .plant import (AttackScript, PlantParams, l2_decaying, no_attack,
                    exp_oscillation)
from .secure import SecurityConfig
from .sim import NodeSpec, ScenarioConfig, ScenarioError, auto_k0


# -- generic plant family ---------------------------------------------------

def _generic_structure(n: int, m: int):
    def regressor(x, q):
        out = np.zeros(x.shape[:-2] + (n, m, 2))
        out[..., 0, :, 0] = np.sin(x[..., 0, :])
        for i in range(1, n):
            out[..., i, :, 1] = np.tanh(x[..., i, :]) + 0.5 * np.sin(x[..., 0, :])
        return out

    def beta(x, q):
        b = np.broadcast_to(q, x.shape[:-2] + (m,))
        return b[..., :, None] * np.eye(m)

    def phi1_jac(x1, th, q):
        return (np.cos(x1) * th[..., :1])[..., :, None] * np.eye(m)

    return regressor, beta, phi1_jac


_GENERIC = {}


def generic_plant(n: int, m: int, theta, b) -> PlantParams:
    """Chain with ``phi_1 = [sin x1 | 0]``, ``phi_i = [0 | tanh x_i + sin(x1)/2]``.

    The input map is ``diag(b)``.  Plants with equal ``(n, m)`` share their
    callables and can be simulated together.
    """
    if n < 2:
        raise ScenarioError("generic plants need n >= 2")
    b = np.asarray(b, dtype=float).reshape(m)
    if np.any(np.abs(b) < 1e-9):
        raise ScenarioError("input gains b must be nonzero")
    if (n, m) not in _GENERIC:
        _GENERIC[(n, m)] = _generic_structure(n, m)
    reg, beta, jac = _GENERIC[(n, m)]
    return PlantParams(n=n, m=m, p=2, regressor=reg, beta=beta,
                       theta=np.asarray(theta, dtype=float).reshape(2), q=b,
                       phi1_jac=jac, name="generic")


def random_generic(seed: int, horizon: float = 60.0, dt: float = 0.005) -> dict:
    """Random connected network of generic two-stage plants.

    ``N`` in 3..6, ``m`` in {1, 2}, weights in [0.5, 1.5], ``theta`` in
    [-1, 1]^2, ``b`` in [0.5, 2]^m, objective centres in [-1, 1]^m and
    ``eta = 2(n - 1) + 0.5``.  The weights are then rescaled to unit
    algebraic connectivity, and both stage gains are set to
    ``2 + (1 + eta) lambda_max(L)``.
    """
    rng = np.random.default_rng(seed)
    N = int(rng.integers(3, 7))
    m = int(rng.integers(1, 3))
    edges = {}
    order = rng.permutation(N)
    for k in range(1, N):
        i, j = int(order[k]), int(order[rng.integers(0, k)])
        edges[(min(i, j), max(i, j))] = None
    for _ in range(int(rng.integers(0, N))):
        i, j = rng.choice(N, 2, replace=False)
        edges[(int(min(i, j)), int(max(i, j)))] = None
    edge_list = [[i, j, float(rng.uniform(0.5, 1.5))] for (i, j) in sorted(edges)]
    # rescale so the algebraic connectivity is one
    L = np.zeros((N, N))
    for i, j, w in edge_list:
        L[i, j] -= w
        L[j, i] -= w
        L[i, i] += w
        L[j, j] += w
    lam = np.linalg.eigvalsh(L)
    for e in edge_list:
        e[2] = float(e[2] / lam[1])
    # stage gains dominate the consensus coupling (1 + eta) L acting on z1
    eta = 2.5
    k = float(2.0 + (1.0 + eta) * lam[-1] / lam[1])
    nodes = []
    for _ in range(N):
        x1 = rng.uniform(-1, 1, m)
        nodes.append(dict(x0=np.concatenate([x1, np.zeros(m)]).tolist(),
                          objective=dict(center=rng.uniform(-1, 1, m).tolist()),
                          plant=dict(theta=rng.uniform(-1, 1, 2).tolist(),
                                     b=rng.uniform(0.5, 2.0, m).tolist())))
    return dict(name=f"generic-{seed}", eta=eta, dt=dt, horizon=horizon, record_stride=10,
                arr_mode="both", funnel_policy="strict",
                graph=dict(n=N, edges=edge_list),
                plant=dict(model="generic", params=dict(n=2, m=m)),
                security=dict(enabled=True, y_s=[0.0] * m),
                defaults=dict(funnel=dict(k0="fleet2", kb=0.05, c=0.25),
                              gains=dict(c=[k, k], Gamma=1.0, gamma0=1.0, gamma1=1.0,
                                         pi_sign=-1)),
                nodes=nodes)


# -- presets ---------------------------------------------------------------

def _preset(name: str) -> dict:
    from .rov import preset_spec
    table = {"rov-case1": 1, "rov-case2": 2, "rov-case3": 3}
    if name in table:
        return preset_spec(table[name])
    if name == "rov-l2":
        from .rov import preset_l2_spec
        return preset_l2_spec()
    raise ScenarioError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")


PRESETS = ("rov-case1", "rov-case2", "rov-case3", "rov-l2")


def deep_merge(base: Any, over: Any) -> Any:
    """Merge ``over`` onto ``base``; mappings recursively, lists of mappings by index."""
    if isinstance(base, Mapping) and isinstance(over, Mapping):
        out = dict(base)
        for k, v in over.items():
            out[k] = deep_merge(base[k], v) if k in base else copy.deepcopy(v)
        return out
    if (isinstance(base, list) and isinstance(over, list) and over
            and all(isinstance(x, Mapping) for x in over)
            and all(isinstance(x, Mapping) for x in base)):
        n = max(len(base), len(over))
        return [deep_merge(base[i], over[i]) if i < len(base) and i < len(over)
                else copy.deepcopy(base[i] if i < len(base) else over[i]) for i in range(n)]
    return copy.deepcopy(over)


def resolve(doc: Mapping) -> dict:
    """Apply the ``preset`` base, if any."""
    doc = dict(doc)
    name = doc.pop("preset", None)
    if name is None:
        return doc
    return deep_merge(_preset(str(name)), doc)


# -- building ----------------------------------------------------------------

_TOP = {"name", "preset", "eta", "dt", "horizon", "record_stride", "arr_mode", "funnel_policy",
        "graph", "plant", "security", "defaults", "nodes"}
_NODE = {"x0", "y_r0", "v0", "objective", "attack", "gains", "funnel", "threshold", "plant"}


def _attack(spec, m: int) -> AttackScript:
    if spec is None:
        return no_attack(m)
    spec = dict(spec)
    kind = spec.pop("kind", "none")
    if kind == "none":
        return no_attack(m)
    if kind == "exp_oscillation":
        return exp_oscillation(m, **spec)
    if kind == "l2_decaying":
        return l2_decaying(m, **spec)
    if kind == "bias":
        value = np.asarray(spec.pop("value"), dtype=float).reshape(m)
        onset = float(spec.pop("onset", 0.0))
        return AttackScript("custom", m, onset, lambda t, ctx: value.copy(), dict(value=value))
    raise ScenarioError(f"unknown attack kind {kind!r}")


def _gains(spec, n: int, p: int) -> ControlGains:
    spec = dict(spec or {})
    if "Gamma" in spec:
        G = np.asarray(spec["Gamma"], dtype=float)
        spec["Gamma"] = G * np.eye(p + 1) if G.ndim == 0 else G
    if "c" in spec:
        c = np.atleast_1d(np.asarray(spec["c"], dtype=float))
        spec["c"] = np.full(n, c[0]) if c.size == 1 else c
    try:
        return ControlGains.default(n, p, **spec)
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"invalid gains: {e}") from None


def _graph(spec):
    if spec is None:
        raise ScenarioError("graph block missing")
    if "ring" in spec:
        from .graph import ring
        return ring(int(spec["ring"]), float(spec.get("weight", 1.0)))
    try:
        return build_graph(int(spec["n"]), spec.get("edges", []))
    except KeyError as e:
        raise ScenarioError(f"graph block needs {e}") from None


def build_scenario(doc: Mapping) -> ScenarioConfig:
    """Turn a scenario mapping into a :class:`ScenarioConfig` (not yet validated)."""
    doc = resolve(doc)
    unknown = set(doc) - _TOP
    if unknown:
        raise ScenarioError(f"unknown top-level keys: {sorted(unknown)}")
    if "eta" not in doc:
        raise ScenarioError("eta missing")
    g = _graph(doc.get("graph"))
    node_docs = doc.get("nodes") or []
    if len(node_docs) != g.n_nodes:
        raise ScenarioError(f"graph has {g.n_nodes} nodes but {len(node_docs)} node blocks given")
    defaults = doc.get("defaults") or {}
    pspec = dict(doc.get("plant") or {"model": "rov"})
    model = pspec.get("model", "rov")
    params = dict(pspec.get("params") or {})
    merged = [deep_merge(defaults, nd) for nd in node_docs]
    for j, nd in enumerate(merged):
        bad = set(nd) - _NODE
        if bad:
            raise ScenarioError(f"node {j}: unknown keys {sorted(bad)}")
    if model == "rov":
        from .rov import RovParams, embed_strict_feedback
        try:
            plant = embed_strict_feedback(RovParams(**params))
        except TypeError as e:
            raise ScenarioError(f"invalid vehicle parameters: {e}") from None
        plants = [plant] * len(merged)
    elif model == "generic":
        n, m = int(params.get("n", 2)), int(params.get("m", 1))
        plants = []
        for j, nd in enumerate(merged):
            ps = nd.get("plant") or {}
            plants.append(generic_plant(n, m, ps.get("theta", [0.0, 0.0]), ps.get("b", [1.0] * m)))
    else:
        raise ScenarioError(f"unknown plant model {model!r}")
    m = plants[0].m
    # funnel sizing
    z0 = []
    for nd, pl in zip(merged, plants):
        x0 = np.asarray(nd.get("x0", np.zeros(pl.n * pl.m)), dtype=float).reshape(-1)
        yr0 = np.asarray(nd.get("y_r0", np.zeros(pl.m)), dtype=float).reshape(-1)
        z0.append(x0[: pl.m] - yr0)
    fleet = auto_k0(np.array(z0), m)
    nodes = []
    for j, (nd, pl) in enumerate(zip(merged, plants)):
        fs = dict(nd.get("funnel") or {})
        k0 = fs.get("k0", "auto")
        if k0 == "auto":
            k0 = auto_k0(z0[j], m)
        elif k0 == "fleet":
            k0 = fleet
        elif k0 == "fleet2":
            k0 = 2.0 * fleet
        try:
            funnel = Funnel(k0=float(k0), kb=float(fs.get("kb", 0.05)),
                            c=float(fs.get("c", 0.25)), m=m)
        except ValueError as e:
            raise ScenarioError(f"node {j}: {e}") from None
        obj = nd.get("objective") or {}
        if "center" not in obj:
            raise ScenarioError(f"node {j}: objective centre missing")
        try:
            objective = quadratic(obj["center"], obj.get("weight"))
        except ValueError as e:
            raise ScenarioError(f"node {j}: {e}") from None
        th = nd.get("threshold") or {}
        nodes.append(NodeSpec(plant=pl, objective=objective,
                              x0=nd.get("x0", np.zeros(pl.n * pl.m)),
                              gains=_gains(nd.get("gains"), pl.n, pl.p), funnel=funnel,
                              attack=_attack(nd.get("attack"), m), y_r0=nd.get("y_r0"),
                              v0=nd.get("v0"), omega_bar=float(th.get("omega_bar", 50.0))))
    sec = doc.get("security")
    security = None
    if sec is not None:
        ys = np.asarray(sec.get("y_s", np.zeros(m)), dtype=float)
        if ys.ndim == 1:
            ys = np.tile(ys, (g.n_nodes, 1))
        security = SecurityConfig(ys, enabled=bool(sec.get("enabled", True)),
                                  mode=sec.get("mode", "prune"))
    return ScenarioConfig(graph=g, nodes=nodes, eta=float(doc["eta"]),
                          dt=float(doc.get("dt", 0.002)), horizon=float(doc.get("horizon", 80.0)),
                          security=security, arr_mode=doc.get("arr_mode", "both"),
                          funnel_policy=doc.get("funnel_policy", "strict"),
                          record_stride=int(doc.get("record_stride", 1)),
                          name=str(doc.get("name", "scenario")))


def load_document(path) -> dict:
    """Read a YAML scenario document."""
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as e:
        raise ScenarioError(f"cannot read scenario {path}: {e}") from None
    except yaml.YAMLError as e:
        raise ScenarioError(f"malformed scenario {path}: {e}") from None
    if not isinstance(doc, Mapping):
        raise ScenarioError("scenario document must be a mapping")
    return dict(doc)


def load_scenario(path) -> ScenarioConfig:
    return build_scenario(load_document(path))


__all__ = ["build_scenario", "load_scenario", "load_document", "resolve", "deep_merge",
           "generic_plant", "random_generic", "PRESETS"]
