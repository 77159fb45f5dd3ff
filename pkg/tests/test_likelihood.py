import numpy as np
import pytest

from dchawkes.events import EventLog
from dchawkes.likelihood import sr_compensator, sr_intensity, sr_loglik
from dchawkes.model import Membership, SRParams
from dchawkes.simulate import SimConfig, simulate
from oracles import hawkes_pair_intensity, quad_compensator


def hetero_params():
    return SRParams(M=np.array([[0.05, 0.02], [0.03, 0.04]]),
                    alpha_n=np.array([[0.3, 0.1], [0.2, 0.25]]),
                    alpha_r=np.array([[0.2, 0.15], [0.05, 0.1]]),
                    beta_n=np.array([[1.0, 2.0], [0.5, 1.5]]),
                    beta_r=np.array([[0.7, 1.2], [2.5, 0.9]]))


def brute_loglik(log, z, p, t0, t1):
    zz = z.z
    total = 0.0
    for i in range(log.n):
        for j in range(log.n):
            if i == j:
                continue
            a, b = zz[i], zz[j]
            args = (p.M[a, b], p.alpha_n[a, b], p.beta_n[a, b], p.alpha_r[a, b], p.beta_r[a, b])
            own = log.time[(log.sender == i) & (log.receiver == j) & (log.time <= t1)]
            rev = log.time[(log.sender == j) & (log.receiver == i) & (log.time <= t1)]
            total -= quad_compensator(t0, t1, own, rev, *args)
            for t in own[own >= t0]:
                total += np.log(hawkes_pair_intensity(t, own, rev, *args))
    return total


def test_single_event_closed_form():
    # two nodes, Poisson rate 0.5 per dyad, one event in [0, 1]
    z = Membership([0, 0], 1)
    p = SRParams(np.full((1, 1), 0.5), np.zeros((1, 1)), np.zeros((1, 1)), np.ones((1, 1)), np.ones((1, 1)))
    log = EventLog([0], [1], [0.4], 2, 1.0)
    assert sr_loglik(log, z, p) == pytest.approx(-1.693147, abs=1e-6)
    assert sr_loglik(EventLog.empty(2, 1.0), z, p) == pytest.approx(-1.0)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_matches_quadrature_oracle(seed):
    z = Membership([0, 0, 1, 1, 1], 2)
    p = hetero_params()
    log = simulate(p, z, 40.0, SimConfig(seed=seed))
    assert len(log) > 5
    assert sr_loglik(log, z, p) == pytest.approx(brute_loglik(log, z, p, 0.0, 40.0), abs=1e-6)
    # window with history before t0
    assert sr_loglik(log, z, p, window=(15.0, 40.0)) == pytest.approx(
        brute_loglik(log, z, p, 15.0, 40.0), abs=1e-6)


def test_per_dyad_terms_sum_to_total():
    z = Membership([0, 0, 1, 1], 2)
    p = hetero_params()
    log = simulate(p, z, 60.0, SimConfig(seed=5))
    total, index, terms = sr_loglik(log, z, p, per_dyad=True)
    sizes = z.sizes
    base = 60.0 * (sizes @ p.M @ sizes - np.diag(p.M) @ sizes)
    assert total == pytest.approx(terms.sum() - base, rel=1e-12)
    assert index.n_dyads == terms.size


def test_compensator_and_intensity_vs_oracle():
    z = Membership([0, 1, 1], 2)
    p = hetero_params()
    log = simulate(p, z, 30.0, SimConfig(seed=9))
    for i, j in [(0, 1), (1, 0), (1, 2)]:
        a, b = z.z[i], z.z[j]
        args = (p.M[a, b], p.alpha_n[a, b], p.beta_n[a, b], p.alpha_r[a, b], p.beta_r[a, b])
        own = log.time[(log.sender == i) & (log.receiver == j)]
        rev = log.time[(log.sender == j) & (log.receiver == i)]
        assert sr_compensator(log, z, p, i, j, 5.0, 30.0) == pytest.approx(
            quad_compensator(5.0, 30.0, own, rev, *args), abs=1e-6)
        ts = np.linspace(0.5, 29.5, 7)
        ref = [hawkes_pair_intensity(t, own, rev, *args) for t in ts]
        assert np.allclose(sr_intensity(log, z, p, i, j, ts), ref, rtol=1e-12)


def test_zero_intensity_raises():
    z = Membership([0, 0], 1)
    p = SRParams(np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)), np.ones((1, 1)), np.ones((1, 1)))
    with pytest.raises(FloatingPointError):
        sr_loglik(EventLog([0], [1], [0.5], 2, 1.0), z, p)


def test_true_params_beat_poisson():
    z = Membership.equal_blocks(6, 2)
    p = hetero_params()
    log = simulate(p, z, 200.0, SimConfig(seed=2))
    pois = SRParams(p.M, 0 * p.alpha_n, 0 * p.alpha_r, p.beta_n, p.beta_r)
    assert sr_loglik(log, z, p) > sr_loglik(log, z, pois)
