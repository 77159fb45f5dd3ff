import numpy as np
import pytest
from hypothesis import given, strategies as st

from dchawkes.model import (BHMParams, BlockPairTheta, CHIPParams, Membership, MULCHParams, SRParams,
                            build_excitation, diagnostics, expected_count_matrix, gamma_max, params_from_dict,
                            params_to_dict, stability_check)
from oracles import dense_gamma


def sr_uniform(K, an=0.2, ar=0.2, M=0.002, variant="full"):
    f = lambda v: np.full((K, K), v)
    return SRParams(f(M), f(an), f(ar), f(1.0), f(1.0), variant)


def gamma_design(s):
    M = np.array([[0.002, 0.001 - 0.0001 * s], [0.0001, 0.002]])
    return SRParams(M, np.zeros((2, 2)), np.array([[0, s], [0, 0]]), np.ones((2, 2)), np.ones((2, 2)))


# --- Membership / parameter validation -------------------------------------

def test_membership_validation():
    with pytest.raises(ValueError):
        Membership([0, 1, 2], 2)
    with pytest.raises(ValueError):
        Membership([0, -1], 2)
    z = Membership.equal_blocks(7, 3)
    assert z.sizes.tolist() == [3, 2, 2]
    assert z.relabel(0, 2).z[0] == 2


def test_restricted_variant_requires_symmetric_alpha_r():
    ar = np.array([[0.1, 0.2], [0.1, 0.1]])
    with pytest.raises(ValueError):
        SRParams(np.ones((2, 2)), np.zeros((2, 2)), ar, np.ones((2, 2)), np.ones((2, 2)), "restricted_r")


@pytest.mark.parametrize("field,value", [("M", -1e-3), ("alpha_n", -0.1), ("beta_r", 0.0)])
def test_sr_params_reject_bad_values(field, value):
    mats = {k: np.full((2, 2), 0.5) for k in ("M", "alpha_n", "alpha_r", "beta_n", "beta_r")}
    mats[field][0, 1] = value
    with pytest.raises(ValueError):
        SRParams(**mats)


def test_params_dict_round_trip_all_families():
    K = 2
    one = np.ones((K, K))
    for p in (sr_uniform(K), CHIPParams(one * 0.01, one * 0.3, one), BHMParams(one * 0.01, one * 0.3, one),
              MULCHParams.grid_ss_mulch(12, 2)):
        q = params_from_dict(params_to_dict(p))
        assert type(q) is type(p)
        for k, v in params_to_dict(p).items():
            assert params_to_dict(q)[k] == v


# --- stability --------------------------------------------------------------

def test_stability_examples():
    r = stability_check(BlockPairTheta(1, 1, 0.2, 0.2, 0.2))
    assert r.stable and r.rho == pytest.approx(0.4, abs=1e-15)
    r = stability_check(BlockPairTheta(1, 1, 0, 0, 0))
    assert r.stable and r.rho == 0.0
    r = stability_check(BlockPairTheta(1, 1, 0.9, 0.9, 0.5))
    assert not r.stable and r.rho == pytest.approx(1.4, abs=1e-14)


def test_stability_rejects_negative_alpha():
    with pytest.raises(ValueError):
        stability_check(np.array([[0.1, -0.1], [0.0, 0.2]]))


def test_stability_closed_form_agrees_with_eigenvalues():
    rng = np.random.default_rng(1)
    s = 0.99
    for _ in range(1000):
        an = rng.uniform(0, 1.2, 2)
        ar = rng.uniform(0, 1.0)
        G = np.array([[an[0], ar], [ar, an[1]]])
        numeric = np.max(np.abs(np.linalg.eigvals(G))) <= s
        closed = an[0] <= s and an[1] <= s and ar ** 2 <= (s - an[0]) * (s - an[1])
        assert stability_check(G, s).stable == numeric == closed


# --- operator vs dense brute force -----------------------------------------

def families(K, rng):
    one = np.ones((K, K))
    u = lambda lo, hi: rng.uniform(lo, hi, (K, K))
    yield SRParams(u(0.1, 1), u(0, 0.3), u(0, 0.3), one, one)
    yield CHIPParams(u(0.1, 1), u(0, 0.6), one)
    yield BHMParams(u(0.1, 1), u(0, 0.6), one)
    yield MULCHParams(u(0.1, 1), rng.uniform(0, 0.1, (K, K, 6)), 1.0)


@pytest.mark.parametrize("n,K", [(2, 1), (4, 2), (5, 2), (6, 3), (6, 2)])
def test_operator_matches_dense_assembly(n, K):
    rng = np.random.default_rng(n * 10 + K)
    z = Membership(np.concatenate([np.arange(K), rng.integers(0, K, n - K)]), K)
    for params in families(K, rng):
        for self_edges in (False, True):
            if isinstance(params, MULCHParams) and self_edges:
                continue
            op = build_excitation(params, z, self_edges)
            G, pairs = dense_gamma(params, z, self_edges)
            idx = {p: k for k, p in enumerate(pairs)}
            perm = [idx[tuple(p)] for p in op.pair_order()]
            np.testing.assert_allclose(op.to_dense(), G[np.ix_(perm, perm)], atol=1e-15)
            rho = np.max(np.abs(np.linalg.eigvals(G)))
            assert op.spectral_radius() == pytest.approx(rho, abs=1e-12)


def test_sr_example_n4_k2():
    z = Membership([0, 0, 1, 1], 2)
    p = sr_uniform(2)
    op = build_excitation(p, z)
    G, _ = dense_gamma(p, z)
    assert op.to_dense().shape == G.shape == (12, 12)
    assert gamma_max(op) == pytest.approx(0.4)


def test_chip_operator_is_diagonal():
    K = 2
    p = CHIPParams(np.ones((K, K)), np.full((K, K), 0.7), np.ones((K, K)))
    D = build_excitation(p, Membership([0, 1, 1], 2)).to_dense()
    np.testing.assert_array_equal(D, 0.7 * np.eye(D.shape[0]))


def test_zero_alpha_zero_operator():
    op = build_excitation(sr_uniform(2, an=0, ar=0), Membership([0, 0, 1, 1], 2))
    assert op.spectral_radius() == 0.0 and gamma_max(op) == 0.0


def test_sub_blocks_share_row_and_column_sums():
    rng = np.random.default_rng(3)
    z = Membership([0, 0, 0, 1, 1, 1, 1], 2)
    for params in families(2, rng):
        op = build_excitation(params, z)
        for blk in op.blocks.values():
            D = blk.to_dense()
            P = blk.pairs_per_direction()
            for t in range(blk.n_directions):
                for s in range(blk.n_directions):
                    sub = D[t * P:(t + 1) * P, s * P:(s + 1) * P]
                    assert np.ptp(sub.sum(axis=1)) < 1e-15
                    assert np.ptp(sub.sum(axis=0)) < 1e-15


def test_power_iteration_radius_matches_closed_form():
    z = Membership([0, 0, 0, 1, 1], 2)
    op = build_excitation(MULCHParams.grid_ss_mulch(12, 2), Membership.equal_blocks(12, 2))
    assert op.spectral_radius("power") == pytest.approx(op.spectral_radius("closed"), abs=1e-9)
    op = build_excitation(sr_uniform(2), z)
    assert op.spectral_radius("power") == pytest.approx(0.4, abs=1e-9)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        build_excitation(sr_uniform(3), Membership([0, 1], 2))
    with pytest.raises(ValueError):
        build_excitation(MULCHParams.grid_ss_mulch(12, 2), Membership.equal_blocks(12, 2), True)


# --- expected counts --------------------------------------------------------

@pytest.mark.parametrize("s", [0.0, 0.3, 0.8])
def test_expected_counts_gamma_design(s):
    z = Membership.equal_blocks(6, 2)
    E = expected_count_matrix(gamma_design(s), z, 1.0)
    zz = z.z
    want = np.where(zz[:, None] == zz[None, :], 0.002, np.where(zz[:, None] == 0, 0.001, 0.0001))
    np.fill_diagonal(want, 0)
    np.testing.assert_allclose(E, want, rtol=1e-12, atol=1e-18)
    assert gamma_max(build_excitation(gamma_design(s), z)) == pytest.approx(s)


def test_expected_counts_poisson_and_sr_rate():
    z = Membership([0, 0, 1], 2)
    p = sr_uniform(2, an=0, ar=0, M=0.3)
    E = expected_count_matrix(p, z, 10.0)
    want = np.full((3, 3), 3.0)
    np.fill_diagonal(want, 0)
    np.testing.assert_allclose(E, want)
    E = expected_count_matrix(sr_uniform(2), z, 1.0)
    assert E[0, 1] == pytest.approx(1 / 300, rel=1e-12)
    assert E[0, 2] == pytest.approx(1 / 300, rel=1e-12)


def test_expected_counts_linear_in_T():
    z = Membership.equal_blocks(12, 2)
    p = MULCHParams.grid_ss_mulch(12, 2)
    np.testing.assert_allclose(expected_count_matrix(p, z, 200.0), 2 * expected_count_matrix(p, z, 100.0), rtol=1e-14)


def test_expected_counts_match_dense_resolvent():
    rng = np.random.default_rng(5)
    z = Membership([0, 1, 0, 1, 1], 2)
    for params in families(2, rng):
        op = build_excitation(params, z)
        G = op.to_dense()
        mu = op.vec(params.baseline[np.ix_(z.z, z.z)])
        want = op.unvec(np.linalg.solve(np.eye(G.shape[0]) - G, mu) * 7.0)
        np.testing.assert_allclose(expected_count_matrix(params, z, 7.0), want, rtol=1e-12, atol=1e-15)


def test_ss_mulch_two_values():
    n, K = 12, 2
    z = Membership.equal_blocks(n, K)
    E = expected_count_matrix(MULCHParams.grid_ss_mulch(n, K), z, 1.0)
    off = ~np.eye(n, dtype=bool)
    same = z.z[:, None] == z.z[None, :]
    np.testing.assert_allclose(E[off & same], 0.005 / 0.4, rtol=1e-12)
    np.testing.assert_allclose(E[~same], 0.003 / 0.7, rtol=1e-12)


def test_unstable_expected_counts_raise():
    with pytest.raises(ValueError):
        expected_count_matrix(sr_uniform(2, an=0.6, ar=0.6), Membership([0, 1], 2), 1.0)


# --- diagnostics ------------------------------------------------------------

def test_diagnostics_ss_mulch():
    n, K = 12, 2
    z = Membership.equal_blocks(n, K)
    p = MULCHParams.grid_ss_mulch(n, K)
    d = diagnostics(p, z, 100.0)
    assert d.sigma_star == pytest.approx(0.6, abs=1e-12)
    assert d.gamma_within == pytest.approx(0.6) and d.gamma_between == pytest.approx(0.3)
    assert d.sigma_star / 2 <= d.gamma_max <= d.sigma_star + 1e-12
    v1, v2 = 0.005 / 0.4, 0.003 / 0.7
    svals = np.linalg.svd(expected_count_matrix(p, z, 1.0), compute_uv=False)
    assert d.lambda_K == pytest.approx(svals[K - 1], rel=1e-12)
    # zero diagonal: the population matrix is (n/K)(v1-v2) I_K - v1 I_n shifted
    assert d.lambda_K == pytest.approx((n / K) * (v1 - v2) - v1, rel=1e-12)
    assert d.lambda_K == pytest.approx(0.036786, abs=1e-6)
    assert d.h_value == pytest.approx((1 / 0.4 - (1 / 0.7) * 0.003 / 0.005) ** 2)
    assert d.mu_max == 0.005
    assert d.bound_proxy == pytest.approx(K ** 2 * np.log(n) * np.log(100) / (n * 100 * 0.005))


def test_diagnostics_zero_alpha_equal_mu():
    d = diagnostics(sr_uniform(2, an=0, ar=0), Membership.equal_blocks(6, 2), 10.0)
    assert d.sigma_star == 0 and d.h_value == 0


@given(st.floats(0, 0.45), st.floats(0, 0.45), st.floats(0.001, 1))
def test_expected_rate_identity(an, ar, mu):
    z = Membership([0, 0, 1], 2)
    E = expected_count_matrix(sr_uniform(2, an, ar, mu), z, 1.0)
    assert E[0, 1] == pytest.approx(mu / (1 - an - ar), rel=1e-10)
