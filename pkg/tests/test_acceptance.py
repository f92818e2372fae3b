"""Acceptance criteria, one test per criterion.

Every test prints a single ``PASS``/``FAIL`` line; the lines are repeated
in the terminal summary.  Tolerances are the ones the checks are written
with in :mod:`securedoc.acceptance` and are not relaxed here.

1   healthy optimality of the vehicle rendezvous (case 1)
1b  the same run's force/torque inputs below 1e3 (known to fail, see README)
2   consensus and optimality on 20 random generic networks
3   detection of the attacked vehicle and isolation (case 3)
4   secure consensus of the healthy vehicles (case 3)
5   divergence without the countermeasure (case 2)
6   a square-integrable attack stays undetected and harmless
7   healthy residual bounds and closed-form threshold dominance
8   funnel containment on every healthy run
9   finite differences, ring spectrum, RK4 order and determinism
"""
import pytest

from securedoc import acceptance as acc

_memo = {}


def _results(fn, runs):
    if fn.__name__ not in _memo:
        _memo[fn.__name__] = {r.key: r for r in fn(runs)}
    return _memo[fn.__name__]


def _report(res, lines):
    line = res.line()
    print(line)
    lines.append(line)
    return res


@pytest.mark.parametrize("key, fn", [
    ("1", acc.check_1), ("2", acc.check_2), ("3", acc.check_3), ("4", acc.check_4),
    ("5", acc.check_5), ("6", acc.check_6), ("7", acc.check_7), ("8", acc.check_8),
    ("9", acc.check_9),
])
def test_criterion(key, fn, runs, acceptance_lines):
    res = _report(_results(fn, runs)[key], acceptance_lines)
    assert res.passed, res.line()


@pytest.mark.xfail(strict=True, reason="vehicle forces are O(1e4) N: heave damping alone is "
                   "11772 N per m/s, so a 1e3 bound on u cannot hold while reaching the "
                   "optimum by 30 s")
def test_criterion_1b_input_bound(runs, acceptance_lines):
    res = _report(_results(acc.check_1, runs)["1b"], acceptance_lines)
    assert res.passed, res.line()
