import json
import math

import numpy as np
import pytest

from walkbell.tables import JointTable, bell_report, check_admissible, check_no_signaling


def _table(fn) -> JointTable:
    p = np.zeros((2, 2, 2, 2))
    for ai, a in enumerate((1, -1)):
        for bi, b in enumerate((1, -1)):
            for i in (0, 1):
                for j in (0, 1):
                    p[ai, bi, i, j] = fn(a, b, i, j)
    return JointTable(p)


def pr_box(a, b, i, j):
    # a b = (-1)^(i j), uniform marginals
    return 0.5 if a * b == (-1) ** (i * j) else 0.0


def test_pr_box():
    rep = bell_report(_table(pr_box))
    assert rep.S == pytest.approx(4.0, abs=1e-15)
    assert rep.admissible and rep.no_signaling
    assert rep.correlators == (1.0, 1.0, 1.0, -1.0)


def test_signaling_counterexample():
    # Bob outputs Alice's setting: admissible but signaling
    t = _table(lambda a, b, i, j: 0.5 if b == (1 if i == 0 else -1) else 0.0)
    ok, dev = check_no_signaling(t)
    assert not ok and dev == pytest.approx(1.0)
    assert check_admissible(t)[0]
    assert not bell_report(t).accepted


def test_negative_entry_rejected():
    t = _table(lambda a, b, i, j: 0.3 if (a, b) == (1, 1) else (-0.1 if (a, b) == (-1, -1) else 0.4))
    ok, min_p = check_admissible(t)
    assert not ok and min_p == pytest.approx(-0.1)
    assert check_admissible(JointTable(t.p, tol=0.2))[0]


def test_unnormalized_rejected():
    t = _table(lambda *args: 0.3)
    assert t.normalization_error() == pytest.approx(0.2)
    assert not check_admissible(t)[0]


def test_uniform_table():
    rep = bell_report(_table(lambda *args: 0.25))
    assert rep.S == 0.0 and rep.accepted and rep.min_p == 0.25


def test_chsh_from_reported_correlators():
    E = (0.6324, 0.2198, 0.6627, -0.1517)
    S = E[0] + E[1] + E[2] - E[3]
    assert abs(abs(S) - 1.6666) <= 2e-4


def test_round_trip():
    rng = np.random.default_rng(1)
    p = rng.random((2, 2, 2, 2))
    p /= p.sum(axis=(0, 1), keepdims=True)
    t = JointTable(p, tol=1e-7)
    back = JointTable.from_dict(json.loads(json.dumps(t.to_dict())))
    assert np.array_equal(back.p, t.p) and back.tol == t.tol
    assert t.prob(-1, 1, 0, 1) == p[1, 0, 0, 1]
    assert len(list(t.rows())) == 16


def test_shape_checked():
    with pytest.raises(ValueError):
        JointTable(np.zeros((2, 2, 2)))


def test_local_deterministic_bound():
    # every deterministic local strategy gives |S| <= 2
    best = 0.0
    for a0 in (1, -1):
        for a1 in (1, -1):
            for b0 in (1, -1):
                for b1 in (1, -1):
                    A, B = (a0, a1), (b0, b1)
                    t = _table(lambda a, b, i, j: float(a == A[i] and b == B[j]))
                    best = max(best, abs(t.chsh()))
    assert best == 2.0
    assert math.isclose(bell_report(_table(pr_box)).S, 4.0)
