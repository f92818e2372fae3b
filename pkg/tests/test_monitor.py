import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from securedoc import acceptance as acc
from securedoc.cyber import quadratic
from securedoc.monitor import (MonitorState, ThresholdParams, arr_check, detectability_margin,
                               detection_time, filter_deriv, funnel_psi, psi, psi_trace,
                               threshold_r, threshold_v)


def _ms(yh, vh):
    return MonitorState(np.atleast_1d(np.asarray(yh, float)), np.atleast_1d(np.asarray(vh, float)))


# -- filter ------------------------------------------------------------------

def test_filter_equilibrium():
    obj = quadratic([0.4])
    ms = _ms(0.4, 0.3)
    yd, vd = filter_deriv(ms, np.full((3, 1), 0.4), np.array([0.3]), np.zeros(1), obj,
                          np.array([0.0, 1.0, 1.0]), 2.5)
    assert np.allclose(yd, 0) and np.allclose(vd, 0)


def test_filter_hand_values():
    obj = quadratic([1.0])  # zero gradient at y_r_hat = 1
    ms = _ms(1.0, 0.0)
    # own row is ignored; the single neighbour sits at 0
    yd, _ = filter_deriv(ms, np.array([[5.0], [0.0]]), np.zeros(1), np.zeros(1), obj,
                         np.array([0.0, 1.0]), 2.5)
    assert yd[0] == pytest.approx(-3.5)
    ms = _ms(0.0, 0.0)
    _, vd = filter_deriv(ms, np.zeros((3, 1)), np.array([0.7]), np.zeros(1), quadratic([0.0]),
                         np.array([0.0, 0.5, 1.5]), 2.5)
    assert vd[0] == pytest.approx(2.0 * 0.7)


def test_filter_rejects_isolated_node():
    with pytest.raises(ValueError):
        filter_deriv(_ms(0, 0), np.zeros((2, 1)), np.zeros(1), np.zeros(1), quadratic([0.0]),
                     np.zeros(2), 2.5)


# -- convolution -------------------------------------------------------------

def test_psi_examples():
    t = np.linspace(0.0, 1.0, 2001)
    assert psi(2.0, np.zeros_like(t), 0.0, 1.0, t) == 0.0
    assert psi(2.0, np.ones_like(t), 0.0, 1.0, t) == pytest.approx(1 - np.exp(-2), abs=1e-6)
    T = np.linspace(0.0, 60.0, 60001)
    assert psi(1.0, np.ones_like(T), 0.0, 60.0, T) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ValueError):
        psi(1.0, [], 0.0, 1.0)


def test_psi_trace_exact_for_constants_and_matches_quad():
    t = np.linspace(0.0, 3.0, 31)
    out = psi_trace(7.0, np.full(t.size, 0.4), t)
    assert np.allclose(out, 0.4 * (1 - np.exp(-7.0 * t)), atol=1e-14)
    # Hermite variant on a smooth signal against adaptive quadrature
    t = np.linspace(0.0, 3.0, 301)
    h = np.stack([np.sin(t), np.cos(2 * t)], axis=1)
    hd = np.stack([np.cos(t), -2 * np.sin(2 * t)], axis=1)
    got = psi_trace(7.0, h, t, hd)[-1]
    ref = quad(lambda s: 7.0 * np.exp(7.0 * (s - 3.0)) * np.hypot(np.sin(s), np.cos(2 * s)),
               0.0, 3.0, epsabs=1e-13, limit=200)[0]
    assert got == pytest.approx(ref, abs=1e-6)


# -- thresholds ----------------------------------------------------------------

def test_threshold_r_examples():
    tp = ThresholdParams(eta_j=7.5, w_N=2.0, k0=1.0, kb=0.05, c=0.5, e_r0=0.2)
    assert threshold_r(tp, 0.0) == pytest.approx(0.2)
    assert threshold_r(tp, 1e3) == pytest.approx(0.05)
    a = 7.5
    expect = (np.exp(-a) * 0.2 + 0.05 * (1 - np.exp(-a))
              + a / (a - 0.5) * (np.exp(-0.5) - np.exp(-a)))
    assert threshold_r(tp, 1.0) == pytest.approx(expect, rel=1e-14)
    # the funnel part is the exact convolution of the funnel bound
    ref = quad(lambda s: a * np.exp(a * (s - 1.0)) * (np.exp(-0.5 * s) + 0.05), 0, 1,
               epsabs=1e-14)[0]
    assert threshold_r(tp, 1.0) - np.exp(-a) * 0.2 == pytest.approx(ref, abs=1e-12)


def test_threshold_v_examples():
    tp = ThresholdParams(eta_j=7.5, w_N=2.0, k0=1.0, kb=0.05, c=0.5, e_r0=0.2, e_v0=0.3)
    assert threshold_v(tp, 0.0) == pytest.approx(0.3)
    assert threshold_v(tp, 1e3) == pytest.approx(0.1)
    assert threshold_v(tp, 2.0) == threshold_v(tp, 2.0)


def test_threshold_rejects_resonant_rate():
    with pytest.raises(ValueError):
        threshold_r(ThresholdParams(eta_j=0.5, w_N=2.0, k0=1, kb=0.05, c=0.5), 1.0)
    with pytest.raises(ValueError):
        threshold_v(ThresholdParams(eta_j=7.0, w_N=0.5, k0=1, kb=0.05, c=0.5), 1.0)
    with pytest.raises(ValueError):
        ThresholdParams(eta_j=7.0, w_N=0.5, k0=1, kb=0.05, c=0.5).validate()


def test_restart_is_continuous():
    tp = ThresholdParams.for_node(2.5, 2.0, k0=8.0, kb=0.05, c=0.25)
    new = tp.restart(31.0, 2.5, 1.0)
    assert threshold_r(new, 31.0) == pytest.approx(threshold_r(tp, 31.0))
    assert threshold_v(new, 31.0) == pytest.approx(threshold_v(tp, 31.0))
    assert threshold_r(new, 500.0) == pytest.approx(0.05)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_closed_forms_dominate_sampled_convolutions(seed):
    r, v = acc.sample_dominance(n=4, seed=seed)
    assert r >= -1e-9 and v >= -1e-9


# -- decision logic ------------------------------------------------------------

def test_arr_examples():
    ms = _ms(0, 0)
    ms.e_r, ms.e_v, ms.thr_r, ms.thr_v = np.zeros(2), np.zeros(2), 0.1, 0.2
    assert arr_check(ms) == (True, True, False)
    ms.e_r = np.array([0.06, 0.08])  # norm exactly 0.1
    ms.thr_r = float(np.linalg.norm(ms.e_r))
    assert arr_check(ms)[0] is True
    ms.e_v = np.array([ms.thr_v + 1e-12, 0.0])
    assert arr_check(ms) == (True, False, True)
    assert arr_check(ms, "r")[2] is False
    assert arr_check(ms, "union")[2] is False
    with pytest.raises(ValueError):
        arr_check(ms, "xor")


def test_alarm_latches():
    tp = ThresholdParams.for_node(2.5, 2.0, k0=1.0, kb=0.05, c=0.25)
    ms = _ms([0.0], [0.0])
    assert not ms.update(0.0, [0.0], [0.0], tp)
    assert ms.update(1.0, [5.0], [0.0], tp)
    assert ms.update(2.0, [0.0], [0.0], tp)
    assert ms.t_detect == 1.0


def test_detection_time():
    t = np.arange(5) * 0.5
    assert detection_time(t, [0, 0, 0, 0, 0]) is None
    assert detection_time(t, [0, 0, 1, 1, 1]) == 1.0


# -- detectability ---------------------------------------------------------------

def test_zero_attack_is_not_certified():
    t = np.linspace(0, 5, 501)
    z = np.zeros((t.size, 2))
    tp = ThresholdParams.for_node(2.5, 2.0, k0=1.0, kb=0.05, c=0.25)
    lr, rr, lv, rv = detectability_margin(t, z, z, z, z, z, z, tp, 1.0, 4.0)
    assert lr == 0 <= rr and lv == 0 <= rv


def test_grid_mismatch_raises():
    t = np.linspace(0, 1, 11)
    tp = ThresholdParams.for_node(2.5, 2.0, k0=1.0, kb=0.05, c=0.25)
    with pytest.raises(ValueError):
        detectability_margin(t, np.zeros((10, 1)), *[np.zeros((11, 1))] * 5, tp, 0.0, 1.0)


def test_funnel_psi_matches_quadrature():
    a, k0, kb, c = 7.0, 2.0, 0.05, 0.25
    ref = quad(lambda s: a * np.exp(a * (s - 35.0)) * (k0 * np.exp(-c * s) + kb), 30.0, 35.0)[0]
    assert funnel_psi(a, k0, kb, c, 30.0, 35.0) == pytest.approx(ref, rel=1e-10)


def _margins(cfg, tr, j, t_d):
    m = tr["y"].shape[-1]
    obj = cfg.nodes[j].objective
    attack = tr["y"][:, j] - tr["x"][:, j, :m]
    g_r = np.array([obj.gradient(s) for s in tr["y_r"][:, j]])
    g_h = np.array([obj.gradient(s) for s in tr["y_r_hat"][:, j]])
    f = cfg.nodes[j].funnel
    tp = ThresholdParams.for_node(cfg.eta, cfg.graph.degree[j], f.k0, f.kb, f.c)
    return detectability_margin(tr.t, attack, tr["e_r"][:, j], tr["e_v"][:, j], tr["z1"][:, j],
                                g_r, g_h, tp, 30.0, t_d)


def test_exponential_attack_is_certified_detectable(runs):
    cfg, tr, _ = runs.case(3)
    lr, rr, _, _ = _margins(cfg, tr, 3, 31.5)
    assert lr > rr


def test_l2_attack_is_never_certified(runs):
    cfg, tr, _ = runs.l2()
    for t_d in (30.5, 32.0, 40.0, 60.0, 80.0):
        lr, rr, lv, rv = _margins(cfg, tr, 3, t_d)
        assert lr <= rr and lv <= rv


def test_healthy_thresholds_and_residuals_settle(runs):
    cfg, tr, _ = runs.case(1)
    kb = cfg.nodes[0].funnel.kb
    assert np.allclose(tr["thr_r"][-1], kb, rtol=1e-3)
    assert np.allclose(tr["thr_v"][-1], 2 * kb, rtol=1e-3)
    # residuals end an order of magnitude below the threshold floor
    assert np.linalg.norm(tr["e_r"][-1], axis=-1).max() < 0.1 * kb
    assert np.linalg.norm(tr["e_v"][-1], axis=-1).max() < 0.1 * kb
