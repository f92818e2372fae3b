"""Reduced four-degree-of-freedom underwater vehicle and rendezvous presets.

Pose ``eta = (x, y, z, psi)`` lives in the earth frame, velocity
``nu = (u, v, w, r)`` in the body frame.  The dynamics are

    eta' = J(psi) nu
    M nu' + C(nu) nu + D(nu) nu + g = tau

and are linear in the 13 hydrodynamic constants

    sigma = (m-X_ud, m-Y_vd, X_u, X_uu, Y_v, Y_vv, m-Z_wd, Z_w, Z_ww,
             W-B, I_z-N_rd, N_r, N_rr).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .plant import PlantParams
from .sim import ScenarioConfig, auto_k0

SIGMA_NAMES = ("m-X_ud", "m-Y_vd", "X_u", "X_uu", "Y_v", "Y_vv", "m-Z_wd", "Z_w", "Z_ww",
               "W-B", "I_z-N_rd", "N_r", "N_rr")

INITIAL_POSES = np.array([[0.3, 0.4, 1.0, 0.0],
                          [0.1, 0.1, 0.5, -np.pi / 6],
                          [0.0, 0.0, 0.0, -np.pi / 8],
                          [0.2, 0.5, 1.0, 0.0]])


@dataclass(frozen=True)
class RovParams:
    """Vehicle constants (SI units)."""

    m_v: float = 2500.0
    I_z: float = 1250.0
    X_ud: float = -2140.0
    Y_vd: float = -1636.0
    Z_wd: float = -3000.0
    N_rd: float = -1524.0
    X_u: float = -3610.0
    Y_v: float = -4660.0
    Z_w: float = -11772.0
    N_r: float = -7848.0
    X_uu: float = -952.0
    Y_vv: float = -1361.0
    Z_ww: float = -3561.0
    N_rr: float = -773.0
    W: float = 24525.0
    B: float = 24525.0

    def __post_init__(self):
        if np.any(np.diag(self.M) <= 0):
            raise ValueError("inertia matrix must be positive definite")

    @property
    def M(self) -> np.ndarray:
        return np.diag([self.m_v - self.X_ud, self.m_v - self.Y_vd,
                        self.m_v - self.Z_wd, self.I_z - self.N_rd])

    @property
    def sigma(self) -> np.ndarray:
        return np.array([self.m_v - self.X_ud, self.m_v - self.Y_vd, self.X_u, self.X_uu,
                         self.Y_v, self.Y_vv, self.m_v - self.Z_wd, self.Z_w, self.Z_ww,
                         self.W - self.B, self.I_z - self.N_rd, self.N_r, self.N_rr])


def wrap_angle(a):
    """Map angles to ``(-pi, pi]``."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + np.pi, 2 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


@dataclass
class RovState:
    """Pose and body velocity; the heading is wrapped on construction."""

    eta: np.ndarray
    nu: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def __post_init__(self):
        self.eta = np.array(self.eta, dtype=float).reshape(4)
        self.nu = np.array(self.nu, dtype=float).reshape(4)
        if not (np.all(np.isfinite(self.eta)) and np.all(np.isfinite(self.nu))):
            raise ValueError("vehicle state must be finite")
        self.eta[3] = float(wrap_angle(self.eta[3]))


def rotation(psi) -> np.ndarray:
    """Earth-from-body map ``J(psi)``, batched over leading axes of ``psi``."""
    psi = np.asarray(psi, dtype=float)
    c, s = np.cos(psi), np.sin(psi)
    J = np.zeros(psi.shape + (4, 4))
    J[..., 0, 0] = c
    J[..., 0, 1] = -s
    J[..., 1, 0] = s
    J[..., 1, 1] = c
    J[..., 2, 2] = 1.0
    J[..., 3, 3] = 1.0
    return J


def coriolis(nu, p: RovParams) -> np.ndarray:
    """Skew-symmetric ``C(nu)`` of the reduced model."""
    u, v, _, _ = nu
    a1, a2 = p.m_v - p.X_ud, p.m_v - p.Y_vd
    C = np.zeros((4, 4))
    C[0, 3] = -a2 * v
    C[1, 3] = a1 * u
    C[3, 0] = a2 * v
    C[3, 1] = -a1 * u
    return C


def damping(nu, p: RovParams) -> np.ndarray:
    """Diagonal ``D(nu)`` with linear and quadratic terms (``D nu`` opposes motion)."""
    u, v, w, r = nu
    return -np.diag([p.X_u + p.X_uu * abs(u), p.Y_v + p.Y_vv * abs(v),
                     p.Z_w + p.Z_ww * abs(w), p.N_r + p.N_rr * abs(r)])


def restoring(eta, p: RovParams) -> np.ndarray:
    return np.array([0.0, 0.0, -(p.W - p.B), 0.0])


def rov_deriv(s: RovState, tau, p: RovParams = RovParams()):
    """Time derivatives ``(eta', nu')`` under the force/torque ``tau``."""
    tau = np.asarray(tau, dtype=float)
    if not np.all(np.isfinite(tau)):
        raise ValueError("non-finite input")
    nu = s.nu
    eta_dot = rotation(s.eta[3]) @ nu
    rhs = tau - coriolis(nu, p) @ nu - damping(nu, p) @ nu - restoring(s.eta, p)
    return eta_dot, rhs / np.diag(p.M)


def rov_regressor(nu, nu_v_dot, eta=None) -> np.ndarray:
    """Regressor ``Phi^T`` with ``Phi^T sigma = M nu_v' + C(nu) nu + D(nu) nu + g``.

    Batched over leading axes of ``nu`` and ``nu_v_dot``; returns
    ``(..., 4, 13)``.
    """
    nu = np.asarray(nu, dtype=float)
    nd = np.broadcast_to(np.asarray(nu_v_dot, dtype=float), nu.shape)
    u, v, w, r = (nu[..., k] for k in range(4))
    P = np.zeros(nu.shape[:-1] + (4, 13))
    P[..., 0, 0] = nd[..., 0]
    P[..., 0, 1] = -v * r
    P[..., 0, 2] = -u
    P[..., 0, 3] = -np.abs(u) * u
    P[..., 1, 1] = nd[..., 1]
    P[..., 1, 0] = u * r
    P[..., 1, 4] = -v
    P[..., 1, 5] = -np.abs(v) * v
    P[..., 2, 6] = nd[..., 2]
    P[..., 2, 7] = -w
    P[..., 2, 8] = -np.abs(w) * w
    P[..., 2, 9] = -1.0
    P[..., 3, 10] = nd[..., 3]
    P[..., 3, 1] = u * v
    P[..., 3, 0] = -u * v
    P[..., 3, 11] = -r
    P[..., 3, 12] = -np.abs(r) * r
    return P


# -- strict-feedback embedding ------------------------------------------------

def _rov_structure(Minv):
    def regressor(x, q):
        J = rotation(x[..., 0, 3])
        nu = np.einsum("...ji,...j->...i", J, x[..., 1, :])
        phi2 = -(J @ Minv) @ rov_regressor(nu, 0.0)
        out = np.zeros(x.shape[:-2] + (2, 4, 13))
        out[..., 1, :, :] = phi2
        return out

    M = np.linalg.inv(Minv)

    def beta(x, q):
        return rotation(x[..., 0, 3]) @ Minv

    def beta_inv(x, q):
        return M @ np.swapaxes(rotation(x[..., 0, 3]), -1, -2)

    def drift(x, q):
        x2 = x[..., 1, :]
        r = x2[..., 3]
        out = np.zeros_like(x2)
        out[..., 0] = -r * x2[..., 1]
        out[..., 1] = r * x2[..., 0]
        return out

    def phi1_jac(x1, th, q):
        return np.zeros(x1.shape + (4,))

    return regressor, beta, drift, phi1_jac, beta_inv


_STRUCTURES = {}


def embed_strict_feedback(p: RovParams = RovParams()) -> PlantParams:
    """Plant description with ``x1 = eta`` and ``x2 = J(psi) nu``.

    ``x1' = x2`` exactly.  ``x2' = J M^-1 tau - J M^-1 Phi^T(nu, 0) sigma +
    J' nu``; the last term is known and enters as drift.  Vehicles with the
    same inertia share the callables, so they can be simulated together.
    """
    key = tuple(np.diag(p.M))
    if key not in _STRUCTURES:
        _STRUCTURES[key] = _rov_structure(np.linalg.inv(p.M))
    reg, beta, drift, jac, binv = _STRUCTURES[key]
    return PlantParams(n=2, m=4, p=13, regressor=reg, beta=beta, theta=p.sigma,
                       drift=drift, phi1_jac=jac, beta_inv=binv, name="rov")


def to_strict(s: RovState) -> np.ndarray:
    """Flat strict-feedback state ``(eta, J nu)``."""
    return np.concatenate([s.eta, rotation(s.eta[3]) @ s.nu])


def from_strict(x) -> RovState:
    x = np.asarray(x, dtype=float)
    return RovState(x[:4], rotation(x[3]).T @ x[4:8])


# -- presets ---------------------------------------------------------------

def preset_spec(case: int, dt: float = 0.002, horizon: float = 80.0, record_stride: int = 10,
                k0="fleet2", kb: float = 0.05, c: float = 0.25, attack=None) -> dict:
    """Scenario document of the four-vehicle rendezvous.

    Case 1 is attack free; cases 2 and 3 add the growing oscillation on the
    fourth vehicle's sensor from 30 s on (``attack`` replaces it).  Case 2
    runs without detection and quarantine, case 3 sends a flagged vehicle
    to the origin.

    The optimizers start at ``y_r = 0``.  All vehicles share one funnel; by
    default ``k0`` is twice :func:`auto_k0` of the largest initial error,
    which keeps every component of ``z1`` well inside the barrier.
    """
    if case not in (1, 2, 3):
        raise ValueError("case must be 1, 2 or 3")
    nodes = []
    for j, pose in enumerate(INITIAL_POSES):
        nd = dict(x0=np.concatenate([pose, np.zeros(4)]).tolist(), y_r0=[0.0] * 4,
                  objective=dict(center=pose.tolist()))
        if case >= 2 and j == 3:
            nd["attack"] = dict(attack or dict(kind="exp_oscillation", onset=30.0,
                                               rate=0.5, offset=-1.0))
        nodes.append(nd)
    return dict(name=f"rov-case{case}", eta=2.5, dt=dt, horizon=horizon,
                record_stride=record_stride, arr_mode="r",
                funnel_policy="record" if case == 2 else "strict",
                graph=dict(ring=4, weight=1.0),
                plant=dict(model="rov", params={}),
                security=dict(enabled=case != 2, mode="prune", y_s=[0.0] * 4),
                defaults=dict(funnel=dict(k0=k0, kb=kb, c=c),
                              gains=dict(c=[2.0, 2.0], Gamma=1.0, gamma0=1.0, gamma1=1.0,
                                         pi_sign=-1),
                              threshold=dict(omega_bar=50.0)),
                nodes=nodes)


def preset_case(case: int, **kw) -> ScenarioConfig:
    """:class:`ScenarioConfig` of :func:`preset_spec`."""
    from .scenario import build_scenario
    return build_scenario(preset_spec(case, **kw))


def preset_l2_spec(amplitude: float = 0.05, rate: float = 0.3, kb: float = 0.2, **kw) -> dict:
    """Case 3 with a decaying bias ``amplitude exp(-rate (t - 30))`` on vehicle 4.

    The wider ``kb`` puts the bias inside the thresholds' dead zone, so the
    attack stays below every alarm level.
    """
    doc = preset_spec(3, kb=kb, attack=dict(kind="l2_decaying", onset=30.0,
                                            amplitude=amplitude, rate=rate), **kw)
    doc["name"] = "rov-l2"
    return doc


def preset_l2(**kw) -> ScenarioConfig:
    from .scenario import build_scenario
    return build_scenario(preset_l2_spec(**kw))


__all__ = ["preset_l2", "preset_l2_spec", "preset_spec", "RovParams", "RovState", "SIGMA_NAMES", "INITIAL_POSES", "wrap_angle", "rotation",
           "coriolis", "damping", "restoring", "rov_deriv", "rov_regressor",
           "embed_strict_feedback", "to_strict", "from_strict", "preset_case"]
