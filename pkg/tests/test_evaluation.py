import numpy as np
import pytest
from hypothesis import given, strategies as st

from dchawkes.evaluation import (EvalConfig, auc_score, dynamic_link_auc, link_probability, monotone_within_se,
                                 test_loglik_per_event as loglik_per_event, trend_diagnostics)
from dchawkes.events import EventLog
from dchawkes.model import Membership, SRParams
from dchawkes.simulate import SimConfig, simulate
from oracles import quad_compensator


def const(K, M, an=0.0, ar=0.0, bn=1.0, br=1.0):
    f = lambda v: np.full((K, K), float(v))
    return SRParams(f(M), f(an), f(ar), f(bn), f(br))


def test_poisson_test_loglik_closed_form():
    z = Membership([0, 0, 0], 1)
    mu = 0.3
    p = const(1, mu)
    full = simulate(p, z, 100.0, SimConfig(seed=1))
    train, test = full.window(0.0, 70.0), full.window(70.0, 100.0, closed_left=False)
    m = len(test)
    expected = (m * np.log(mu) - mu * 6 * 30.0) / m
    assert loglik_per_event(train, test, p, z) == pytest.approx(expected, rel=1e-12)


def test_test_loglik_empty_raises():
    z = Membership([0, 0], 1)
    with pytest.raises(ValueError):
        loglik_per_event(EventLog.empty(2, 1.0), EventLog.empty(2, 2.0, start=1.0), const(1, 0.1), z)


def test_link_probability_poisson_and_zero():
    z = Membership([0, 0], 1)
    h = EventLog.empty(2, 10.0)
    assert link_probability(h, const(1, 0.2), z, (0, 1), (3.0, 4.5)) == pytest.approx(1 - np.exp(-0.3))
    assert link_probability(h, const(1, 0.0), z, (0, 1), (3.0, 4.5)) == 0.0
    with pytest.raises(ValueError):
        link_probability(h, const(1, 0.2), z, (0, 1), (3.0, 3.0))


def test_link_probability_with_history_matches_quadrature():
    z = Membership([0, 0], 1)
    p = const(1, 0.1, an=0.4, ar=0.3, bn=1.5, br=0.7)
    h = EventLog([0, 1], [1, 0], [2.0, 4.0], 2, 10.0)
    t, d = 5.0, 0.5
    L = quad_compensator(t, t + d, np.array([2.0]), np.array([4.0]), 0.1, 0.4, 1.5, 0.3, 0.7)
    assert link_probability(h, p, z, (0, 1), (t, t + d)) == pytest.approx(1 - np.exp(-L), rel=1e-9)
    # events at or after t are not history
    h2 = EventLog([0, 1, 0], [1, 0, 1], [2.0, 4.0, 5.2], 2, 10.0)
    assert link_probability(h2, p, z, (0, 1), (t, t + d)) == link_probability(h, p, z, (0, 1), (t, t + d))


@given(st.floats(0.01, 5.0), st.floats(0.01, 5.0))
def test_link_probability_monotone_in_delta(d1, d2):
    z = Membership([0, 0], 1)
    p = const(1, 0.05, an=0.5, bn=2.0)
    h = EventLog([0], [1], [1.0], 2, 20.0)
    lo, hi = sorted((d1, d2))
    assert link_probability(h, p, z, (0, 1), (2.0, 2.0 + lo)) <= link_probability(h, p, z, (0, 1), (2.0, 2.0 + hi))


def test_auc_basics():
    y = [0, 0, 1, 1, 0, 1]
    s = np.array([0.1, 0.3, 0.35, 0.8, 0.4, 0.2])
    assert auc_score(y, s) == pytest.approx(auc_score(y, np.exp(3 * s) - 7))
    assert auc_score(y, np.zeros(6)) == 0.5
    assert auc_score([0, 0, 1], [0.1, 0.2, 0.9]) == 1.0


def test_dynamic_auc_informative_model():
    z = Membership.equal_blocks(10, 2)
    M = np.array([[0.05, 0.001], [0.001, 0.05]])
    p = SRParams(M, np.full((2, 2), 0.4), np.full((2, 2), 0.3), np.ones((2, 2)), np.ones((2, 2)))
    log = simulate(p, z, 300.0, SimConfig(seed=3))
    cfg = EvalConfig(delta=1.0, n_intervals=40, seed=0)
    res = dynamic_link_auc(log, p, z, cfg, test_start=200.0)
    assert res.aucs.size + res.skipped == 40
    assert res.mean > 0.75
    flat = dynamic_link_auc(log, const(2, 0.01), z, cfg, test_start=200.0)
    assert res.mean > flat.mean
    with pytest.raises(ValueError):
        EvalConfig(delta=0.0)


def test_true_params_beat_no_excitation_on_test():
    z = Membership.equal_blocks(8, 2)
    p = const(2, 0.02, an=0.4, ar=0.3)
    full = simulate(p, z, 600.0, SimConfig(seed=7))
    train, test = full.window(0.0, 400.0), full.window(400.0, 600.0, closed_left=False)
    assert loglik_per_event(train, test, p, z) > loglik_per_event(train, test, const(2, 0.02), z)


def test_monotone_within_se():
    assert monotone_within_se([0.1, 0.2, 0.3], [0, 0, 0])
    assert monotone_within_se([0.1, 0.09, 0.3], [0.01, 0.01, 0.01])
    assert not monotone_within_se([0.1, 0.05, 0.3], [0.01, 0.01, 0.01])
    assert not monotone_within_se([0.1, 0.1], [0.1, 0.1], strict=True)
    assert monotone_within_se([3, 2, 1], [0, 0, 0], direction="decreasing", strict=True)


def test_trend_diagnostics():
    rows = [dict(n=n, K=2, T=T, ari=n * T / 1000 + 0.01 * r, spectral_error=1.0) for n in (10, 20) for T in (5, 10)
            for r in range(3)]
    out = trend_diagnostics(rows, metrics={"ari": "increasing"}, mu_max=0.01)
    assert out.verdicts["ari"] == {"n": True, "T": True}
    assert len(out.table) == 4 and "bound_proxy" in out.table
    assert out.table["ari_count"].eq(3).all()
    row = out.table[(out.table.n == 10) & (out.table["T"] == 5)].iloc[0]
    assert row.bound_proxy == pytest.approx(4 * np.log(10) * np.log(5) / (50 * 0.01))
    single = trend_diagnostics([dict(n=5, T=5, ari=0.3)])
    assert single.verdicts == {}
