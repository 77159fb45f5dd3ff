import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import optimize

from dchawkes.estimate import (BlockPairMoments, fit_params, gmm_fit, mle_beta, population_moments, refine,
                               sample_moments)
from dchawkes.likelihood import sr_loglik
from dchawkes.model import BlockPairTheta, Membership, SRParams
from dchawkes.simulate import SimConfig, simulate
from oracles import random_feasible_theta


def test_sample_moments_hand_example():
    N = np.zeros((3, 3))
    N[0, 1], N[0, 2] = 2, 4
    N[1, 0], N[2, 0] = 4, 2
    z = Membership([0, 1, 1], 2)
    m = sample_moments(N, z, 0, 1, T=10.0)
    assert (m.lambda_ab, m.lambda_ba) == pytest.approx((0.3, 0.3))
    assert m.c_abab == pytest.approx(0.1)
    assert m.c_baba == pytest.approx(0.1)
    assert m.c_abba == pytest.approx(-0.1)
    assert m.n_ab == 2


def test_constant_counts_zero_covariance():
    N = np.full((4, 4), 3.0)
    m = sample_moments(N, Membership([0, 0, 1, 1], 2), 0, 1, T=5.0)
    assert np.all(m.C == 0)
    assert m.lambda_ab == pytest.approx(0.6)


def test_population_moments_poisson():
    lam, C = population_moments(BlockPairTheta(0.01, 0.02, 0, 0, 0))
    assert lam == pytest.approx([0.01, 0.02])
    assert np.allclose(C, np.diag([0.01, 0.02]))


def test_population_moments_symbolic_values():
    # exact rational values for M = 0.002 and all jumps 0.2
    lam, C = population_moments(BlockPairTheta(0.002, 0.002, 0.2, 0.2, 0.2))
    assert lam == pytest.approx([1 / 300, 1 / 300], rel=1e-14)
    assert C == pytest.approx(np.array([[17 / 2700, 2 / 675], [2 / 675, 17 / 2700]]), rel=1e-13)


def test_population_moments_rejects_unstable():
    with pytest.raises(ValueError):
        population_moments(BlockPairTheta(0.01, 0.01, 0.6, 0.6, 0.5))


@given(st.integers(0, 10_000))
def test_population_covariance_psd(seed):
    th = random_feasible_theta(np.random.default_rng(seed))
    _, C = population_moments(th)
    assert np.linalg.eigvalsh(C).min() > 0


def exact_moments(th, n_ab=100, T=1000.0):
    lam, C = population_moments(th)
    return BlockPairMoments(lam[0], lam[1], C[0, 0], C[1, 1], C[0, 1], n_ab, T)


@pytest.mark.parametrize("seed", range(5))
def test_gmm_identifies_from_exact_moments(seed):
    th = random_feasible_theta(np.random.default_rng(100 + seed))
    res = gmm_fit(exact_moments(th), variant="restricted_r")
    assert np.max(np.abs(res.theta.as_array() - th.as_array())) < 1e-6
    assert res.theta.alpha_r_ab == res.theta.alpha_r_ba


def test_gmm_poisson_moments_give_zero_alpha():
    res = gmm_fit(exact_moments(BlockPairTheta(0.004, 0.006, 0, 0, 0)))
    assert np.allclose(res.theta.as_array(), [0.004, 0.006, 0, 0, 0, 0], atol=1e-8)


def uniform_sr(K, M, an, ar, beta):
    f = lambda v: np.full((K, K), float(v))
    return SRParams(f(M), f(an), f(ar), f(beta), f(beta), "restricted_r")


def test_mle_beta_flags_non_identifiable():
    z = Membership.equal_blocks(6, 2)
    p = uniform_sr(2, 0.05, 0.0, 0.0, 1.0)
    log = simulate(p, z, 100.0, SimConfig(seed=0))
    out, fits = mle_beta(log, z, p)
    assert all(f.identifiable == (False, False) for f in fits.values())
    assert np.all(out.beta_n == 1.0) and np.all(out.beta_r == 1.0)


def test_mle_beta_univariate_matches_scalar_optimizer():
    z = Membership([0, 0], 1)
    p = SRParams(np.full((1, 1), 0.2), np.full((1, 1), 0.5), np.zeros((1, 1)), np.full((1, 1), 2.0),
                 np.ones((1, 1)), "restricted_r")
    log = simulate(p, z, 3000.0, SimConfig(seed=4))
    out, fits = mle_beta(log, z, p, init_beta=1.0)
    assert fits[(0, 0)].identifiable[0] and not fits[(0, 0)].identifiable[1]

    def nll(logb):
        b = np.exp(logb)
        q = SRParams(p.M, p.alpha_n, p.alpha_r, np.full((1, 1), b), np.ones((1, 1)), "restricted_r")
        return -sr_loglik(log, z, q)

    ref = np.exp(optimize.minimize_scalar(nll, bounds=(-5, 5), method="bounded",
                                          options={"xatol": 1e-10}).x)
    assert out.beta_n[0, 0] == pytest.approx(ref, rel=1e-3)
    assert out.beta_n[0, 0] == pytest.approx(2.0, rel=0.25)


def refine_setup(seed=0, T=400.0):
    z = Membership.equal_blocks(12, 2)
    M = np.array([[0.02, 0.002], [0.002, 0.02]])
    p = SRParams(M, np.full((2, 2), 0.2), np.full((2, 2), 0.2), np.ones((2, 2)), np.ones((2, 2)), "restricted_r")
    return z, p, simulate(p, z, T, SimConfig(seed=seed))


def test_refine_fixed_point_and_correction():
    z, p, log = refine_setup()
    res = refine(log, z, p, reestimate=False)
    assert res.changed == 0 and np.array_equal(res.membership.z, z.z)
    wrong = z.z.copy()
    wrong[0] = 1
    res = refine(log, Membership(wrong, 2), p, reestimate=False)
    assert np.array_equal(res.membership.z, z.z)
    assert res.moves == [(0, 1, 0)]


@pytest.mark.parametrize("seed", range(3))
def test_refine_loglik_never_decreases(seed):
    z, p, log = refine_setup(seed, T=150.0)
    start = np.random.default_rng(seed).integers(0, 2, 12)
    start[:2] = [0, 1]
    res = refine(log, Membership(start, 2), p, reestimate=False, track_loglik=True, sweeps=2)
    assert np.all(np.diff(res.loglik_trace) >= -1e-9)


def test_refine_refuses_to_empty_a_block():
    z, p, log = refine_setup()
    lonely = np.zeros(12, dtype=int)
    lonely[0] = 1  # node 0 truly belongs to block 0
    res = refine(log, Membership(lonely, 2), p, reestimate=False)
    assert 0 in res.blocked
    assert np.bincount(res.membership.z, minlength=2).min() >= 1


def test_fit_params_end_to_end():
    z, p, log = refine_setup(T=2000.0)
    fit = fit_params(log, z)
    assert fit.params.variant == "restricted_r"
    assert np.allclose(fit.params.alpha_r, fit.params.alpha_r.T)
    assert fit.params.M[0, 0] == pytest.approx(0.02, rel=0.5)
