import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from securedoc.cyber import (AgentState, command, consensus_optimum, disagreement,
                             optimality_residual, optimizer_deriv, optimizer_field,
                             quadratic, v_tilde)
from securedoc.graph import build_graph, laplacian, ring
from securedoc.rov import INITIAL_POSES

ETA = 2.5


def test_v_tilde_examples():
    g = ring(4)
    assert np.allclose(v_tilde(0, np.full((4, 1), 3.0), g), 0)
    assert v_tilde(0, np.array([[1.0], [0.0]]), build_graph(2, [(0, 1)]))[0] == 1.0
    assert v_tilde(0, np.arange(1.0, 5.0)[:, None], g)[0] == -4.0


def test_v_tilde_accepts_agent_states():
    states = [AgentState(np.zeros(1), np.array([k])) for k in (1.0, 2.0, 3.0, 4.0)]
    assert v_tilde(0, states, ring(4))[0] == -4.0


def test_optimizer_equilibrium():
    g = ring(3)
    obj = quadratic([0.7])
    a = AgentState(np.array([0.7]), np.array([0.2]))
    yd, vd = optimizer_deriv(0, a, np.full((3, 1), 0.7), np.full((3, 1), 0.2), obj, ETA, g)
    assert np.allclose(yd, 0) and np.allclose(vd, 0)


def test_optimizer_two_node_symmetry():
    g = build_graph(2, [(0, 1)])
    objs = [quadratic([1.0]), quadratic([-1.0])]
    Y = np.array([[0.3], [-0.3]])
    V = np.zeros((2, 1))
    vd = [optimizer_deriv(j, AgentState(Y[j], V[j]), Y, V, objs[j], ETA, g)[1] for j in range(2)]
    assert np.allclose(vd[0], -vd[1])


def test_optimizer_single_node_decay():
    g = build_graph(1, [])
    obj = quadratic([0.0])
    yd, _ = optimizer_deriv(0, AgentState(np.array([0.8]), np.zeros(1)),
                            np.array([[0.8]]), np.zeros((1, 1)), obj, ETA, g)
    assert yd[0] == pytest.approx(-1.6)


def test_command_examples():
    obj = quadratic([0.0])
    cmd = command(AgentState(np.zeros(1), np.zeros(1)), obj, np.array([0.4]))
    assert cmd.y_r[0] == 0 and cmd.grad[0] == 0 and cmd.v_tilde[0] == 0.4
    c = np.array([0.5, -1.0])
    y = np.array([0.1, 0.2])
    cmd = command(AgentState(y, np.zeros(2)), quadratic(c), np.zeros(2))
    assert np.allclose(cmd.grad, 2 * (y - c))


def test_optimality_residual_at_centroid():
    g = ring(4)
    objs = [quadratic(p) for p in INITIAL_POSES]
    opt = consensus_optimum(objs)
    assert np.allclose(opt, INITIAL_POSES.mean(axis=0), atol=1e-15)
    assert np.allclose(opt[:3], [0.15, 0.25, 0.625])
    cons, stat = optimality_residual(np.tile(opt, (4, 1)), objs, g)
    assert cons < 1e-12 and stat < 1e-12
    cons, _ = optimality_residual(INITIAL_POSES, objs, g)
    assert cons > 0


def test_consensus_optimum_weighted_and_bfgs():
    A1, A2 = np.diag([1.0, 3.0]), np.diag([2.0, 1.0])
    objs = [quadratic([1.0, 0.0], A1), quadratic([0.0, 1.0], A2)]
    exact = np.linalg.solve(A1 + A2, A1 @ [1.0, 0.0] + A2 @ [0.0, 1.0])
    assert np.allclose(consensus_optimum(objs), exact)
    # a non-quadratic wrapper goes through the numerical minimiser
    from dataclasses import replace
    objs_nq = [replace(o, A=None) for o in objs]
    assert np.allclose(consensus_optimum(objs_nq, m=2), exact, atol=1e-6)


def _fd_grad(obj, s, h=1e-6):
    return np.array([(obj.value(s + h * e) - obj.value(s - h * e)) / (2 * h) for e in np.eye(s.size)])


@settings(max_examples=100, deadline=None)
@given(arrays(float, 3, elements=st.floats(-2, 2)), arrays(float, 3, elements=st.floats(-2, 2)),
       st.integers(0, 10_000))
def test_gradient_and_hessian_match_finite_differences(c, s, seed):
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(3, 3))
    obj = quadratic(c, B @ B.T + 0.5 * np.eye(3))
    g = obj.gradient(s)
    scale = max(np.linalg.norm(g), 1e-3)
    assert np.linalg.norm(_fd_grad(obj, s) - g) / scale < 1e-6
    h = 1e-5
    H_fd = np.column_stack([(obj.gradient(s + h * e) - obj.gradient(s - h * e)) / (2 * h)
                            for e in np.eye(3)])
    H = obj.hessian(s)
    assert np.linalg.norm(H_fd - H) / np.linalg.norm(H) < 1e-5


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 6), st.integers(1, 3), st.integers(0, 10_000))
def test_saddle_point_is_fixed_point(N, m, seed):
    rng = np.random.default_rng(seed)
    g = ring(N, weight=float(rng.uniform(0.5, 2.0)))
    objs = [quadratic(rng.uniform(-1, 1, m)) for _ in range(N)]
    ys = consensus_optimum(objs)
    Y = np.tile(ys, (N, 1))
    grad = np.stack([o.gradient(ys) for o in objs])
    L = laplacian(g)
    V, *_ = np.linalg.lstsq(L, -grad, rcond=None)
    yd, vd = optimizer_field(Y, V, Y, grad, g.weights, ETA)
    assert np.abs(yd).max() < 1e-10 and np.abs(vd).max() < 1e-12


def test_disagreement_is_laplacian_product():
    g = build_graph(3, [(0, 1, 0.5), (1, 2, 2.0)])
    X = np.array([[1.0, 0.0], [0.0, 2.0], [3.0, -1.0]])
    assert np.allclose(disagreement(g.weights, X), laplacian(g) @ X)
