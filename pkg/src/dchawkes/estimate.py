"""Estimation for the restricted SR model.

Per block pair the GMM step matches the first two integrated cumulants of the
counts::

    Lambda = R M,    C = R diag(Lambda) R^T,    R = (I - Gamma)^{-1}

to their sample versions.  Sample covariances centre the counts by
``Lambda_hat * T`` and divide by ``T * n_ab``, so they estimate
``Cov(N_T) / T``.  Decays are then fitted by maximum likelihood with the GMM
estimates held fixed, and labels can be refined one node at a time.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from types import SimpleNamespace
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import least_squares, minimize

from .events import EventLog
from .likelihood import DyadIndex, baseline_mass, dyad_terms, index_log, sr_loglik
from .model import (
    DEFAULT_SIGMA_STAR, BlockPairTheta, Membership, ModelDiagnostics, SRParams, spectral_radius_2x2,
)
from .spectral import CountMatrix

BETA_BOUNDS = (1e-4, 1e4)
GMM_STARTS = 8
EXACT_FIT = 1e-24  # scaled objective treated as an exact fit
PENALTY_WEIGHT = 1e3


@dataclass(frozen=True)
class BlockPairMoments:
    """Sample moments of one block pair.

    For a diagonal pair (a, a), ``lambda_ab == lambda_ba``, ``c_abab ==
    c_baba`` is the count variance and ``c_abba`` the covariance between the
    two directions of a dyad, all taken over ordered pairs i != j.
    """

    lambda_ab: float
    lambda_ba: float
    c_abab: float
    c_baba: float
    c_abba: float
    n_ab: int
    T: float
    diagonal: bool = False

    @property
    def lam(self) -> np.ndarray:
        return np.array([self.lambda_ab, self.lambda_ba])

    @property
    def C(self) -> np.ndarray:
        return np.array([[self.c_abab, self.c_abba], [self.c_abba, self.c_baba]])


def _block_counts(N, z: Membership, a: int, b: int):
    A = np.asarray(N.counts if isinstance(N, CountMatrix) else N, dtype=float)
    ia, ib = z.members(a), z.members(b)
    X = A[np.ix_(ia, ib)]
    Y = A[np.ix_(ib, ia)].T  # Y[i, j] = N_{ji}
    if a == b:
        off = ~np.eye(ia.size, dtype=bool)
        return X[off], Y[off]
    return X.ravel(), Y.ravel()


def sample_moments(N, z: Membership, a: int, b: int, T: Optional[float] = None) -> BlockPairMoments:
    """Sample moments of block pair (a, b) from the count matrix.

    Raises
    ------
    ValueError
        If the block pair has no node pairs.
    """
    T = float(N.horizon_T if T is None else T)
    x, y = _block_counts(N, z, a, b)
    n_ab = x.size
    if n_ab == 0:
        raise ValueError(f"block pair ({a},{b}) has no node pairs")
    lab, lba = x.mean() / T, y.mean() / T
    dx, dy = x - lab * T, y - lba * T
    c_abab = float(dx @ dx) / (T * n_ab)
    c_baba = float(dy @ dy) / (T * n_ab)
    c_abba = float(dx @ dy) / (T * n_ab)
    return BlockPairMoments(float(lab), float(lba), c_abab, c_baba, c_abba, n_ab, T, a == b)


def population_moments(theta: BlockPairTheta) -> Tuple[np.ndarray, np.ndarray]:
    """Exact (Lambda, C) of a block pair.

    Raises
    ------
    ValueError
        If the 2 x 2 excitation block has spectral radius >= 1.
    """
    G = theta.gamma
    if spectral_radius_2x2(G) >= 1.0:
        raise ValueError("infeasible theta: spectral radius >= 1")
    (p, q), (r, s) = G
    det = (1 - p) * (1 - s) - q * r
    R = np.array([[1 - s, q], [r, 1 - p]]) / det
    lam = R @ theta.baseline
    C = R @ np.diag(lam) @ R.T
    return lam, 0.5 * (C + C.T)


# ---------------------------------------------------------------------------
# GMM
# ---------------------------------------------------------------------------

@dataclass
class GMMResult:
    theta: BlockPairTheta
    objective: float
    success: bool
    start: str
    n_starts: int


def _theta_from_x(x, variant, diagonal) -> BlockPairTheta:
    if diagonal:
        M, an, ar = x
        return BlockPairTheta(M, M, an, an, ar, ar)
    if variant == "restricted_r":
        return BlockPairTheta(x[0], x[1], x[2], x[3], x[4], x[4])
    return BlockPairTheta(x[0], x[1], x[2], x[2], x[3], x[4])


def _x_from_theta(theta: BlockPairTheta, variant, diagonal) -> np.ndarray:
    if diagonal:
        return np.array([0.5 * (theta.M_ab + theta.M_ba), 0.5 * (theta.alpha_n_ab + theta.alpha_n_ba),
                         0.5 * (theta.alpha_r_ab + theta.alpha_r_ba)])
    if variant == "restricted_r":
        return np.array([theta.M_ab, theta.M_ba, theta.alpha_n_ab, theta.alpha_n_ba,
                         0.5 * (theta.alpha_r_ab + theta.alpha_r_ba)])
    return np.array([theta.M_ab, theta.M_ba, 0.5 * (theta.alpha_n_ab + theta.alpha_n_ba),
                     theta.alpha_r_ab, theta.alpha_r_ba])


def _moment_residuals(theta: BlockPairTheta, m: BlockPairMoments) -> np.ndarray:
    G = theta.gamma
    (p, q), (r, s) = G
    det = (1 - p) * (1 - s) - q * r
    R = np.array([[1 - s, q], [r, 1 - p]]) / det
    lam = R @ theta.baseline
    C = R @ np.diag(lam) @ R.T
    if m.diagonal:
        return np.array([lam[0] - m.lambda_ab, C[0, 0] - m.c_abab, C[0, 1] - m.c_abba])
    return np.array([lam[0] - m.lambda_ab, lam[1] - m.lambda_ba, C[0, 0] - m.c_abab,
                     C[1, 1] - m.c_baba, C[0, 1] - m.c_abba])


def gmm_objective(theta: BlockPairTheta, m: BlockPairMoments) -> float:
    """Unweighted least-squares objective: squared norm of the moment residuals."""
    g = _moment_residuals(theta, m)
    return float(g @ g)


def _project(theta: BlockPairTheta, m_floor: float, sigma_star: float, variant: str, diagonal: bool) -> BlockPairTheta:
    """Clip a parameter guess into the feasible set."""
    x = _x_from_theta(theta, variant, diagonal)
    x = np.where(np.isfinite(x), x, 0.0)
    nM = 1 if diagonal else 2
    x[:nM] = np.maximum(x[:nM], m_floor)
    x[nM:] = np.maximum(x[nM:], 0.0)
    th = _theta_from_x(x, variant, diagonal)
    rho = spectral_radius_2x2(th.gamma)
    if rho > sigma_star:
        x[nM:] *= sigma_star / rho * (1 - 1e-9)
        th = _theta_from_x(x, variant, diagonal)
    return th


def closed_form_theta(m: BlockPairMoments) -> Optional[BlockPairTheta]:
    """Direct moment inversion for a symmetric excitation block.

    With Gamma symmetric, R is symmetric and ``D^(1/2) C D^(1/2) =
    (D^(1/2) R D^(1/2))^2`` for ``D = diag(Lambda)``, so R follows from a
    matrix square root.  The result can be infeasible; callers project it.
    """
    lam = m.lam
    if np.any(lam <= 0):
        return None
    d = np.sqrt(lam)
    S = d[:, None] * m.C * d[None, :]
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    if np.any(w <= 0):
        return None
    root = (V * np.sqrt(w)) @ V.T
    R = root / d[:, None] / d[None, :]
    G = np.eye(2) - np.linalg.inv(R)
    M = (np.eye(2) - G) @ lam
    return BlockPairTheta(M[0], M[1], G[0, 0], G[1, 1], 0.5 * (G[0, 1] + G[1, 0]))


def _random_theta(rng, m: BlockPairMoments, sigma_star, variant, diagonal) -> BlockPairTheta:
    lam = np.maximum(m.lam, 1e-300)
    target = rng.uniform(0.05, 0.9) * sigma_star
    w = rng.dirichlet(np.ones(3))
    an_ab, an_ba, ar = w * target
    if variant == "restricted_n" and not diagonal:
        an_ab = an_ba = 0.5 * (an_ab + an_ba)
        theta = BlockPairTheta(0, 0, an_ab, an_ba, ar * rng.uniform(0.5, 1.5), ar * rng.uniform(0.5, 1.5))
    else:
        if diagonal:
            an_ba = an_ab
        theta = BlockPairTheta(0, 0, an_ab, an_ba, ar)
    M = (np.eye(2) - theta.gamma) @ lam
    return BlockPairTheta(M[0], M[1], theta.alpha_n_ab, theta.alpha_n_ba, theta.alpha_r_ab, theta.alpha_r_ba)


def gmm_fit(moments: BlockPairMoments, sigma_star: float = DEFAULT_SIGMA_STAR, variant: str = "restricted_r",
            n_starts: int = GMM_STARTS, seed: int = 0, closed_form_start: bool = True,
            tol: float = 1e-12) -> GMMResult:
    """Least-squares GMM fit of one block pair.

    Minimizes the squared moment residuals over the feasible set (M > 0,
    alpha >= 0, spectral radius <= sigma_star) with a bounded trust-region
    solver.  Starts, in order: the closed-form inversion (projected), the
    Poisson start (M = Lambda_hat, alpha = 0), then random feasible draws.
    The search stops early once a start fits the moments exactly.

    A diagonal block pair has three parameters (M, alpha_n, alpha_r): both
    directions of a within-block dyad share them.

    Returns
    -------
    GMMResult
        ``success`` is False when no start drove the scaled objective below
        ``tol`` (sample moments outside the model's range do this); the best
        feasible point is still returned.
    """
    if variant not in ("restricted_r", "restricted_n"):
        raise NotImplementedError("GMM is only identified for the restricted SR variants")
    lam = moments.lam
    if not np.all(np.isfinite(lam)) or not np.all(np.isfinite(moments.C)):
        raise ValueError("moments must be finite")
    if np.any(lam <= 0):
        raise ValueError("rates Lambda_hat must be positive")
    diagonal = moments.diagonal
    scale = float(lam.mean())
    m_floor = 1e-12 * scale
    nM = 1 if diagonal else 2
    n_par = nM + 3 if not diagonal else 3
    lo = np.concatenate([np.full(nM, m_floor), np.zeros(n_par - nM)])
    hi_alpha = sigma_star if (variant == "restricted_r" or diagonal) else 10.0
    hi = np.concatenate([np.full(nM, np.inf), np.full(n_par - nM, hi_alpha)])
    if variant == "restricted_n" and not diagonal:
        hi[nM] = sigma_star  # shared alpha_n

    def residuals(x):
        th = _theta_from_x(x, variant, diagonal)
        rho = spectral_radius_2x2(th.gamma)
        if rho >= 1.0 - 1e-12:
            g = np.full(5 if not diagonal else 3, 1e3)
        else:
            g = _moment_residuals(th, moments) / scale
        return np.concatenate([g, [PENALTY_WEIGHT * max(0.0, rho - sigma_star)]])

    starts: List[Tuple[str, BlockPairTheta]] = []
    if closed_form_start:
        cf = closed_form_theta(moments)
        if cf is not None:
            starts.append(("closed_form", cf))
    starts.append(("poisson", BlockPairTheta(lam[0], lam[1], 0, 0, 0)))
    rng = np.random.default_rng(seed)
    while len(starts) < n_starts:
        starts.append(("random", _random_theta(rng, moments, sigma_star, variant, diagonal)))

    best = None
    tried = 0
    for name, th0 in starts[:max(n_starts, 1)]:
        tried += 1
        x0 = _x_from_theta(_project(th0, m_floor, sigma_star, variant, diagonal), variant, diagonal)
        x0 = np.clip(x0, lo, np.where(np.isfinite(hi), hi, x0))
        if np.sum(residuals(x0) ** 2) <= EXACT_FIT:
            sol_x, obj = x0, float(np.sum(residuals(x0) ** 2))
        else:
            sol = least_squares(residuals, x0, bounds=(lo, hi), method="trf", xtol=1e-15, ftol=1e-15,
                                gtol=1e-15, max_nfev=2000)
            sol_x, obj = sol.x, float(np.sum(sol.fun ** 2))
        if best is None or obj < best[1]:
            best = (sol_x, obj, name)
        if obj <= EXACT_FIT:
            break
    x, obj_scaled, name = best
    theta = _project(_theta_from_x(x, variant, diagonal), m_floor, sigma_star, variant, diagonal)
    objective = gmm_objective(theta, moments)
    success = obj_scaled <= tol or objective <= tol * scale ** 2
    return GMMResult(theta, objective, bool(success), name, tried)


# ---------------------------------------------------------------------------
# Decay MLE
# ---------------------------------------------------------------------------

@dataclass
class BetaFit:
    beta_n: float
    beta_r: float
    loglik: float
    identifiable: Tuple[bool, bool]
    converged: bool


def _pair_key(a, b):
    return (a, b) if a <= b else (b, a)


def _group_dyads(index: DyadIndex, z: Membership) -> Dict[Tuple[int, int], DyadIndex]:
    zu, zv = z.z[index.u], z.z[index.v]
    lo, hi = np.minimum(zu, zv), np.maximum(zu, zv)
    out = {}
    key = lo * z.K + hi
    for k in np.unique(key):
        out[(int(k // z.K), int(k % z.K))] = index.subset(np.flatnonzero(key == k))
    return out


def _with_beta(params: SRParams, a: int, b: int, bn: float, br: float) -> SRParams:
    beta_n = params.beta_n.copy()
    beta_r = params.beta_r.copy()
    beta_n[a, b] = beta_n[b, a] = bn
    beta_r[a, b] = beta_r[b, a] = br
    return params.replace(beta_n=beta_n, beta_r=beta_r)


def _block_terms_fn(sub: DyadIndex, z: Membership, params: SRParams, a, b, t0, t1):
    zu, zv = z.z[sub.u], z.z[sub.v]
    # only attribute access is needed, so skip SRParams validation in the inner loop
    mats = SimpleNamespace(M=params.M, alpha_n=params.alpha_n, alpha_r=params.alpha_r,
                           beta_n=np.array(params.beta_n), beta_r=np.array(params.beta_r))

    def f(bn, br):
        mats.beta_n[a, b] = mats.beta_n[b, a] = bn
        mats.beta_r[a, b] = mats.beta_r[b, a] = br
        return float(dyad_terms(sub, zu, zv, mats, t0, t1).sum())
    return f


def mle_beta(events: EventLog, z: Membership, gmm_params: SRParams, init_beta=None,
             window: Optional[Tuple[float, float]] = None, index: Optional[DyadIndex] = None,
             fatol: float = 1e-8, max_iter: int = 400) -> Tuple[SRParams, Dict[Tuple[int, int], BetaFit]]:
    """Maximize the SR likelihood over decays with M and alpha held fixed.

    Each unordered block pair {a, b} gets one self decay (beta_n_ab =
    beta_n_ba) and one reciprocal decay (beta_r_ab = beta_r_ba), fitted by
    Nelder-Mead on log beta within [1e-4, 1e4].  A decay whose jump sizes are
    all zero does not affect the likelihood; it keeps its initial value and
    is flagged as non-identifiable.

    ``init_beta`` is a scalar, a ``(beta_n, beta_r)`` pair of K x K matrices,
    or None to use the decays already in ``gmm_params``.
    """
    K = z.K
    if init_beta is None:
        bn0, br0 = np.array(gmm_params.beta_n), np.array(gmm_params.beta_r)
    elif np.isscalar(init_beta):
        if init_beta <= 0:
            raise ValueError("init_beta must be positive")
        bn0 = br0 = np.full((K, K), float(init_beta))
    else:
        bn0, br0 = (np.asarray(x, dtype=float) for x in init_beta)
    params = gmm_params.replace(beta_n=bn0, beta_r=br0)
    t0, t1 = (events.start, events.horizon_T) if window is None else window
    if index is None:
        index = index_log(events, (events.time >= t0) & (events.time <= t1))
    groups = _group_dyads(index, z)
    lo, hi = np.log(BETA_BOUNDS[0]), np.log(BETA_BOUNDS[1])
    bn, br = params.beta_n.copy(), params.beta_r.copy()
    fits = {}
    for a in range(K):
        for b in range(a, K):
            idn = params.alpha_n[a, b] > 0 or params.alpha_n[b, a] > 0
            idr = params.alpha_r[a, b] > 0 or params.alpha_r[b, a] > 0
            x0 = np.log([np.clip(bn0[a, b], *BETA_BOUNDS), np.clip(br0[a, b], *BETA_BOUNDS)])
            sub = groups.get((a, b))
            if sub is None or not (idn or idr):
                fits[(a, b)] = BetaFit(float(np.exp(x0[0])), float(np.exp(x0[1])), 0.0, (bool(idn), bool(idr)), True)
                bn[a, b] = bn[b, a] = np.exp(x0[0])
                br[a, b] = br[b, a] = np.exp(x0[1])
                continue
            f = _block_terms_fn(sub, z, params, a, b, t0, t1)
            free = [k for k, ok in enumerate((idn, idr)) if ok]

            def negll(y, free=free, x0=x0, f=f):
                x = x0.copy()
                x[free] = y
                with np.errstate(over="ignore", invalid="ignore"):
                    try:
                        val = f(np.exp(x[0]), np.exp(x[1]))
                    except FloatingPointError:
                        return np.inf
                return -val if np.isfinite(val) else np.inf

            y0 = x0[free]
            if len(free) == 1:
                res = minimize(negll, y0, method="Nelder-Mead", bounds=[(lo, hi)],
                               options=dict(fatol=fatol, xatol=1e-6, maxiter=max_iter,
                                            initial_simplex=np.array([y0, y0 + 0.5])))
            else:
                simplex = np.array([y0, y0 + [0.5, 0.0], y0 + [0.0, 0.5]])
                res = minimize(negll, y0, method="Nelder-Mead", bounds=[(lo, hi)] * 2,
                               options=dict(fatol=fatol, xatol=1e-6, maxiter=max_iter, initial_simplex=simplex))
            x = x0.copy()
            x[free] = res.x
            bn[a, b] = bn[b, a] = np.exp(x[0])
            br[a, b] = br[b, a] = np.exp(x[1])
            fits[(a, b)] = BetaFit(float(np.exp(x[0])), float(np.exp(x[1])), float(-res.fun),
                                   (bool(idn), bool(idr)), bool(res.success))
    return params.replace(beta_n=bn, beta_r=br), fits


# ---------------------------------------------------------------------------
# Full parameter fit for a given membership
# ---------------------------------------------------------------------------

@dataclass
class ParamFit:
    params: SRParams
    gmm: Dict[Tuple[int, int], GMMResult]
    beta: Dict[Tuple[int, int], BetaFit]
    flags: List[str] = field(default_factory=list)


def _moments_floor(m: BlockPairMoments) -> BlockPairMoments:
    floor = 0.5 / (m.T * m.n_ab)
    return BlockPairMoments(max(m.lambda_ab, floor), max(m.lambda_ba, floor), m.c_abab, m.c_baba, m.c_abba,
                            m.n_ab, m.T, m.diagonal)


def estimate_gmm(N, z: Membership, T: float, variant: str = "restricted_r", sigma_star: float = DEFAULT_SIGMA_STAR,
                 n_starts: int = GMM_STARTS, seed: int = 0):
    """GMM step for every block pair; returns (M, alpha_n, alpha_r, results, flags).

    Block pairs without node pairs (an empty block) take the estimate
    pooled over all pairs.  A block pair with node pairs but no events gets
    the floor rate 0.5 / (T n_ab) and no excitation.
    """
    K = z.K
    M = np.zeros((K, K))
    an = np.zeros((K, K))
    ar = np.zeros((K, K))
    results = {}
    flags = []
    pooled = None
    for a in range(K):
        for b in range(a, K):
            try:
                m = sample_moments(N, z, a, b, T)
            except ValueError:
                if pooled is None:
                    pooled = _pooled_fit(N, T, variant, sigma_star, n_starts, seed)
                th = pooled.theta
                flags.append(f"block pair ({a},{b}) empty: pooled estimate used")
                results[(a, b)] = pooled
            else:
                if m.lambda_ab == 0 and m.lambda_ba == 0:
                    floor = 0.5 / (T * m.n_ab)
                    th = BlockPairTheta(floor, floor, 0, 0, 0)
                    flags.append(f"block pair ({a},{b}) has no events: floor rate used")
                    results[(a, b)] = GMMResult(th, 0.0, True, "floor", 0)
                else:
                    if m.lambda_ab == 0 or m.lambda_ba == 0:
                        flags.append(f"block pair ({a},{b}) has one silent direction: floor rate used there")
                        m = _moments_floor(m)
                    res = gmm_fit(m, sigma_star, variant, n_starts, seed)
                    if not res.success:
                        flags.append(f"block pair ({a},{b}): GMM did not reach tolerance")
                    th = res.theta
                    results[(a, b)] = res
            M[a, b], M[b, a] = th.M_ab, th.M_ba
            an[a, b], an[b, a] = th.alpha_n_ab, th.alpha_n_ba
            ar[a, b], ar[b, a] = th.alpha_r_ab, th.alpha_r_ba
    return M, an, ar, results, flags


def _pooled_fit(N, T, variant, sigma_star, n_starts, seed) -> GMMResult:
    A = np.asarray(N.counts if isinstance(N, CountMatrix) else N, dtype=float)
    z1 = Membership(np.zeros(A.shape[0], dtype=np.int64), 1)
    m = sample_moments(A, z1, 0, 0, T)
    if m.lambda_ab == 0:
        floor = 0.5 / (T * m.n_ab)
        return GMMResult(BlockPairTheta(floor, floor, 0, 0, 0), 0.0, True, "floor", 0)
    return gmm_fit(m, sigma_star, variant, n_starts, seed)


def fit_params(events: EventLog, z: Membership, variant: str = "restricted_r", sigma_star: float = DEFAULT_SIGMA_STAR,
               beta_init=1.0, fit_beta: bool = True, n_starts: int = GMM_STARTS, seed: int = 0,
               index: Optional[DyadIndex] = None) -> ParamFit:
    """GMM for (M, alpha) on every block pair, then the decay MLE."""
    from .spectral import count_matrix

    T = events.horizon_T - events.start
    N = count_matrix(events)
    M, an, ar, results, flags = estimate_gmm(N, z, T, variant, sigma_star, n_starts, seed)
    K = z.K
    if np.isscalar(beta_init):
        bn = br = np.full((K, K), float(beta_init))
    else:
        bn, br = (np.asarray(x, dtype=float) for x in beta_init)
    params = SRParams(M, an, ar, bn, br, variant)
    fits = {}
    if fit_beta:
        params, fits = mle_beta(events, z, params, None, index=index)
        flags += [f"block pair {k}: decay not identifiable, kept initial value"
                  for k, f in fits.items() if not all(f.identifiable)]
    return ParamFit(params, results, fits, flags)


# ---------------------------------------------------------------------------
# Local refinement
# ---------------------------------------------------------------------------

@dataclass
class RefineResult:
    membership: Membership
    params: SRParams
    changed: int
    moves: List[Tuple[int, int, int]]
    blocked: List[int]
    loglik_trace: List[float]
    sweeps: int
    param_fit: Optional[ParamFit] = None


class _NodeScorer:
    """Node-local log-likelihood of putting node i in each block, others fixed."""

    def __init__(self, events: EventLog, params: SRParams, t0: float, t1: float):
        self.params = params
        self.t0, self.t1 = t0, t1
        self.n = events.n
        self.self_edges = events.allow_self_edges
        counted = (events.time >= t0) & (events.time <= t1)
        self.index = index_log(events, counted)
        u, v = self.index.u, self.index.v
        self.node_dyads = [[] for _ in range(self.n)]
        for d in range(self.index.n_dyads):
            self.node_dyads[u[d]].append(d)
            if v[d] != u[d]:
                self.node_dyads[v[d]].append(d)
        self.subs = [self.index.subset(np.array(ds, dtype=np.int64)) for ds in self.node_dyads]

    def scores(self, i: int, z: np.ndarray, K: int) -> np.ndarray:
        p = self.params
        L = self.t1 - self.t0
        others = np.bincount(np.delete(z, i), minlength=K).astype(float)
        sub = self.subs[i]
        out = np.empty(K)
        for c in range(K):
            base = others @ (p.M[c, :] + p.M[:, c])
            if self.self_edges:
                base += p.M[c, c]
            val = -L * base
            if sub.n_dyads:
                zu = np.where(sub.u == i, c, z[sub.u])
                zv = np.where(sub.v == i, c, z[sub.v])
                val += dyad_terms(sub, zu, zv, p, self.t0, self.t1).sum()
            out[c] = val
        return out


def refine(events: EventLog, z_init: Membership, params: SRParams, K: Optional[int] = None, sweeps: int = 1,
           reestimate: bool = True, until_stable: bool = False, track_loglik: bool = False,
           variant: Optional[str] = None, sigma_star: float = DEFAULT_SIGMA_STAR, seed: int = 0) -> RefineResult:
    """Local likelihood refinement of community labels.

    Nodes are visited in index order; each is moved to the block with the
    largest node-local log-likelihood (the terms of dyads touching the node),
    with everyone else's label and all parameters fixed.  Ties keep the
    current label, and a move that would empty a block is refused.  After
    ``sweeps`` passes (or, with ``until_stable``, once a pass changes
    nothing) the parameters are re-estimated on the new labels.

    With ``track_loglik`` the full training log-likelihood after every
    single-node update is recorded; it never decreases.
    """
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    K = z_init.K if K is None else K
    if K != z_init.K or K != params.K:
        raise ValueError("K of labels, parameters and argument disagree")
    t0, t1 = events.start, events.horizon_T
    scorer = _NodeScorer(events, params, t0, t1)
    z = np.array(z_init.z)
    sizes = np.bincount(z, minlength=K)
    moves, blocked, trace = [], [], []
    if track_loglik:
        trace.append(sr_loglik(events, Membership(z, K), params))
    done = 0
    for sweep in range(sweeps if not until_stable else max(sweeps, 10_000)):
        changed = 0
        for i in range(events.n):
            s = scorer.scores(i, z, K)
            cur = z[i]
            best = int(np.argmax(s))
            if s[best] > s[cur] and best != cur:
                if sizes[cur] == 1:
                    blocked.append(i)
                else:
                    sizes[cur] -= 1
                    sizes[best] += 1
                    z[i] = best
                    moves.append((i, int(cur), best))
                    changed += 1
            if track_loglik:
                trace.append(sr_loglik(events, Membership(z, K), params))
        done += 1
        if until_stable and changed == 0:
            break
        if not until_stable and done >= sweeps:
            break
    membership = Membership(z, K)
    new_params, pf = params, None
    if reestimate:
        pf = fit_params(events, membership, variant or params.variant, sigma_star,
                        beta_init=(params.beta_n, params.beta_r), seed=seed, index=scorer.index)
        new_params = pf.params
    return RefineResult(membership, new_params, len(moves), moves, blocked, trace, done, pf)


# ---------------------------------------------------------------------------
# Result container
# ---------------------------------------------------------------------------

@dataclass
class FitResult:
    membership: Membership
    params: SRParams
    train_loglik: float
    gmm_objectives: Dict[Tuple[int, int], float]
    diagnostics: Optional[ModelDiagnostics]
    flags: List[str] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)
    initial_membership: Optional[Membership] = None
    refine: Optional[RefineResult] = None

    def summary(self) -> dict:
        from .model import params_to_dict
        return {
            "K": self.membership.K,
            "z": self.membership.z.tolist(),
            "params": params_to_dict(self.params),
            "train_loglik": self.train_loglik,
            "gmm_objectives": {f"{a},{b}": v for (a, b), v in self.gmm_objectives.items()},
            "flags": list(self.flags),
        }
