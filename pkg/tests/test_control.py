import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from securedoc.control import (AdaptiveState, ControlGains, Funnel, FunnelViolation,
                               adaptive_deriv, funnel_value, inner_control,
                               inner_control_generic, outer_control, s_funnel,
                               s_funnel_guarded, total_control)
from securedoc.cyber import Command
from securedoc.plant import chain_plant
from securedoc.scenario import generic_plant


def test_funnel_value_examples():
    f = Funnel(k0=1.0, kb=0.1, c=0.5, m=4)
    assert funnel_value(f, 0.0) == pytest.approx(1.1 / 2)
    assert funnel_value(f, 2.0) == pytest.approx((np.exp(-1) + 0.1) / 2)
    assert funnel_value(f, 1e4) == pytest.approx(0.1 / 2)
    assert np.all(np.diff(funnel_value(f, np.linspace(0, 20, 50))) < 0)


@pytest.mark.parametrize("k0, kb, c", [(0, 1, 1), (1, 0, 1), (1, 1, 0), (-1, 1, 1)])
def test_funnel_rejects_nonpositive(k0, kb, c):
    with pytest.raises(ValueError):
        Funnel(k0, kb, c)


def test_s_funnel_examples():
    assert s_funnel(np.zeros(2), 1.0).tolist() == [0.0, 0.0]
    assert s_funnel(np.array([0.5]), 1.0)[0] == pytest.approx(0.5 * np.log(3))
    assert s_funnel(np.array([0.1]), 1.0)[0] == pytest.approx(0.10033534773107558)
    with pytest.raises(FunnelViolation):
        s_funnel(np.array([1.0 - 1e-13]), 1.0)
    with pytest.raises(FunnelViolation):
        s_funnel(np.array([0.0, -2.0]), 1.0)


@settings(max_examples=200, deadline=None)
@given(arrays(float, 3, elements=st.floats(-0.999, 0.999)), st.floats(0.01, 10.0))
def test_s_funnel_odd_and_sector(r, delta):
    z = r * delta
    S = s_funnel(z, delta)
    assert np.array_equal(s_funnel(-z, delta), -S)
    assert float(z @ S) >= 0.0


@settings(max_examples=200, deadline=None)
@given(st.floats(-5, 5), st.floats(0.5, 0.99))
def test_guarded_barrier_is_exact_inside_and_monotone(r, r_sat):
    S, ds, _ = s_funnel_guarded(np.array([r]), 1.0, r_sat)
    if abs(r) <= r_sat:
        assert S[0] == pytest.approx(np.arctanh(r))
    assert ds[0] >= 1.0
    S2, _, _ = s_funnel_guarded(np.array([r + 1e-3]), 1.0, r_sat)
    assert S2[0] > S[0]


def _flat_plant(m=1):
    return chain_plant(2, m, p=0)


def test_inner_control_equilibrium():
    p = _flat_plant(2)
    gains = ControlGains.default(2, 0)
    z = np.zeros(2)
    out = inner_control(np.zeros(4), AdaptiveState.zeros(0, 2), Command(z, z, z), gains,
                        Funnel(1.0, 0.05, 0.5, m=2), p, 0.0)
    assert np.allclose(out["u_I"], 0)


def test_alpha1_hand_value():
    p = _flat_plant(1)
    gains = ControlGains.default(2, 0, c=[1.0, 1.0])
    z = np.zeros(1)
    f = Funnel(k0=0.9, kb=0.1, c=0.5, m=1)  # delta(0) = 1
    out = inner_control(np.array([0.1, 0.0]), AdaptiveState.zeros(0, 1), Command(z, z, z),
                        gains, f, p, 0.0)
    assert out["alpha1I"][0] == pytest.approx(-0.1 - 0.10033534773107558, abs=1e-12)


def test_inner_control_rejects_funnel_exit():
    p = _flat_plant(1)
    z = np.zeros(1)
    with pytest.raises(FunnelViolation):
        inner_control(np.array([2.0, 0.0]), AdaptiveState.zeros(0, 1), Command(z, z, z),
                      ControlGains.default(2, 0), Funnel(0.9, 0.1, 0.5), p, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_generic_recursion_matches_closed_form(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 3))
    p = generic_plant(2, m, rng.uniform(-1, 1, 2), rng.uniform(0.5, 2, m))
    gains = ControlGains.default(2, p.p, c=[1.5, 2.5])
    a = AdaptiveState(rng.normal(size=p.p + 1), float(rng.uniform(0, 2)), rng.normal(size=m))
    cmd = Command(rng.normal(size=m) * 0.3, rng.normal(size=m), rng.normal(size=m))
    x = np.concatenate([cmd.y_r + rng.uniform(-0.3, 0.3, m), rng.normal(size=m)])
    f = Funnel(k0=1.0, kb=0.05, c=0.3, m=m)
    ref = inner_control(x, a, cmd, gains, f, p, 0.4)
    gen = inner_control_generic(x, a, cmd, gains, f, p, 0.4, hess=2 * np.eye(m))
    assert np.allclose(gen["u_I"], ref["u_I"], rtol=1e-5, atol=1e-6)
    assert np.allclose(gen["tau"], ref["tau"], rtol=1e-5, atol=1e-6)


def test_adaptive_update_examples():
    g = ControlGains.default(2, 2, gamma0=2.0)
    dl, dr, dp = adaptive_deriv(AdaptiveState.zeros(2, 2), np.zeros(3), np.zeros(2), g)
    assert not dl.any() and dr == 0 and not dp.any()
    _, dr, _ = adaptive_deriv(AdaptiveState.zeros(2, 2), np.zeros(3), np.array([3.0, 0.0]), g)
    assert dr == 18.0
    dl, _, _ = adaptive_deriv(AdaptiveState.zeros(2, 2), np.array([0.0, 1.0, 0.0]), np.zeros(2), g)
    assert dl.tolist() == [0.0, 1.0, 0.0]
    z1 = np.array([0.2, -0.1])
    assert np.allclose(adaptive_deriv(AdaptiveState.zeros(2, 2), np.zeros(3), z1, g)[2], -z1)
    g_plus = ControlGains.default(2, 2, pi_sign=1.0)
    assert np.allclose(adaptive_deriv(AdaptiveState.zeros(2, 2), np.zeros(3), z1, g_plus)[2], z1)


@pytest.mark.parametrize("kw", [dict(c=[1.0, -1.0]), dict(Gamma=-np.eye(3)),
                                dict(gamma0=0.0), dict(pi_sign=0.5)])
def test_gains_validation(kw):
    with pytest.raises(ValueError):
        ControlGains.default(2, 2, **kw)


def test_outer_control_examples():
    one = np.eye(1)
    u, al = outer_control(Command(np.zeros(1), np.zeros(1), np.zeros(1)), 2 * one, one)
    assert u[0] == 0 and al[0][0] == 0
    u, al = outer_control(Command(np.zeros(1), np.array([0.4]), np.array([0.1])), 2 * one, one)
    assert u[0] == pytest.approx(1.0)
    assert al[0][0] == pytest.approx(-0.6)
    g0 = np.array([0.7, -0.2])
    u, _ = outer_control(Command(np.zeros(2), g0, -g0), np.diag([3.0, 5.0]), np.eye(2))
    assert np.allclose(u, 0)


def test_total_control():
    assert total_control([0.0], [0.0])[0] == 0
    assert total_control([1.0], [-1.0])[0] == 0
    assert total_control([0.3], [0.7])[0] == pytest.approx(1.0)
