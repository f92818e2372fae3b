import dataclasses

import numpy as np
import pytest

from securedoc.cyber import Command, ObjectiveStack, optimizer_field, quadratic
from securedoc.graph import build_graph, prune, ring
from securedoc.monitor import MonitorState
from securedoc.rov import preset_case
from securedoc.secure import (DisconnectedWarning, SecurityConfig, active_weights, notify,
                              secure_command, secure_round)
from securedoc.sim import run


def _ms(t_detect):
    ms = MonitorState(np.zeros(1), np.zeros(1))
    ms.t_detect = t_detect
    return ms


def test_notify_examples():
    assert notify(_ms(None), 40.0) == 0
    assert notify(_ms(31.5), 40.0) == 1
    assert notify(_ms(31.5), 31.5) == 1
    assert notify(_ms(31.5), 31.4) == 0


def test_secure_command_switches_and_is_idempotent():
    cfg = SecurityConfig(y_s=np.zeros(4))
    cmd = Command(np.arange(4.0), np.ones(4), -np.ones(4))
    assert secure_command(cmd, 0, cfg) is cmd
    out = secure_command(cmd, 1, cfg)
    assert not out.y_r.any() and not out.grad.any() and not out.v_tilde.any()
    again = secure_command(out, 1, cfg)
    assert np.array_equal(again.y_r, out.y_r) and np.array_equal(again.grad, out.grad)
    off = SecurityConfig(y_s=np.zeros(4), enabled=False)
    assert secure_command(cmd, 1, off) is cmd


def test_security_config_validation():
    with pytest.raises(ValueError):
        SecurityConfig(y_s=[np.nan])
    with pytest.raises(ValueError):
        SecurityConfig(y_s=[0.0], mode="drop")


def _setup(N=4, m=2, seed=0):
    rng = np.random.default_rng(seed)
    objs = ObjectiveStack([quadratic(rng.normal(size=m)) for _ in range(N)])
    Yr, V, Y = (rng.normal(size=(N, m)) for _ in range(3))
    return objs, Yr, V, Y


def test_no_flags_reduces_to_plain_optimizer():
    g = ring(4)
    objs, Yr, V, Y = _setup()
    out = secure_round(Yr, V, Y, [False] * 4, g, objs, 2.5, SecurityConfig(np.zeros(2)))
    yd, vd = optimizer_field(Yr, V, Y, objs.gradient(Yr), g.weights, 2.5)
    assert np.array_equal(out["yr_dot"], yd) and np.array_equal(out["v_dot"], vd)
    assert np.array_equal(out["y_r"], Yr)


def test_all_flagged_sends_everyone_to_setpoint():
    g = ring(4)
    objs, Yr, V, Y = _setup()
    ys = np.array([0.5, -0.5])
    out = secure_round(Yr, V, Y, [True] * 4, g, objs, 2.5, SecurityConfig(ys))
    assert np.allclose(out["y_r"], ys) and not out["grad"].any() and not out["v_tilde"].any()
    assert not out["yr_dot"].any()


def test_pruned_dynamics_match_rebuilt_subgraph():
    g = ring(5)
    objs, Yr, V, Y = _setup(N=5, seed=3)
    flags = np.array([False, False, True, False, False])
    out = secure_round(Yr, V, Y, flags, g, objs, 2.5, SecurityConfig(np.zeros(2)))
    keep = np.flatnonzero(~flags)
    sub = prune(g, [2])
    sub_objs = ObjectiveStack([objs.objs[k] for k in keep])
    yd, vd = optimizer_field(Yr[keep], V[keep], Y[keep], sub_objs.gradient(Yr[keep]),
                             sub.weights, 2.5)
    assert np.allclose(out["yr_dot"][keep], yd, atol=1e-12)
    assert np.allclose(out["v_dot"][keep], vd, atol=1e-12)


def test_disconnected_subgraph_warns():
    path = build_graph(3, [(0, 1), (1, 2)])
    with pytest.warns(DisconnectedWarning):
        active_weights(path, [False, True, False])
    W = active_weights(path, [False, True, False], SecurityConfig(np.zeros(1), enabled=False))
    assert np.array_equal(W, path.weights)


def test_zero_mode_keeps_edges():
    g = ring(4)
    objs, Yr, V, Y = _setup()
    flags = [False, False, False, True]
    out = secure_round(Yr, V, Y, flags, g, objs, 2.5, SecurityConfig(np.zeros(2), mode="zero"))
    assert np.array_equal(out["W"], g.weights)
    Yz, Vz = Y.copy(), V.copy()
    Yz[3] = Vz[3] = 0.0
    # v-disagreement uses the node's own v but zeros for the flagged neighbour
    vt = g.weights.sum(1)[:, None] * V - g.weights @ Vz
    assert np.allclose(out["yr_dot"][:3], (-objs.gradient(Yr) - vt
                                            - 3.5 * (g.weights.sum(1)[:, None] * Yz
                                                     - g.weights @ Yz))[:3])


def test_security_is_a_no_op_without_attack():
    cfg = preset_case(1, horizon=0.5, record_stride=1)
    a = run(cfg)
    b = run(dataclasses.replace(cfg, security=None))
    for k in a.data:
        assert np.array_equal(a[k], b[k], equal_nan=True), k


def test_flagged_command_is_frozen(runs):
    _, tr, _ = runs.case(3)
    td = tr.t_detect[3]
    assert td is not None
    after = tr.t > td + 0.05
    yr = tr["y_r"][after, 3]
    assert np.array_equal(yr, np.broadcast_to(yr[0], yr.shape))
    assert tr["flag"][after, 3].all() and not tr["flag"][:, :3].any()
