"""Model parameterizations and closed-form population quantities.

Every model here is a dependent community Hawkes model: node pairs are grouped
into block pairs, and a pair only receives excitation from pairs in its own
block pair or the reciprocal one.  The n^2 x n^2 excitation matrix is never
formed; each unordered block pair {a, b} is described by a small list of
pattern terms (see :class:`BlockPairOperator`), and everything downstream
(row sums, spectral radius, expected counts) is answered from those.

Labels are 0-based throughout: ``z[i]`` lies in ``{0, ..., K-1}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp

DEFAULT_SIGMA_STAR = 0.99
POWER_TOL = 1e-10
POWER_MAX_ITER = 10_000
DENSE_MAX_NODES = 64

#: MULCH excitation types, in the order used for the stacked alpha/beta arrays.
EXCITATION_TYPES = ("n", "r", "tc", "ac", "gr", "ar")
SR_VARIANTS = ("full", "restricted_r", "restricted_n")


def _frozen(x, shape=None, name="matrix"):
    arr = np.array(x, dtype=float)
    if shape is not None and arr.shape != shape:
        raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
    arr.setflags(write=False)
    return arr


def _square(x, name):
    arr = np.array(x, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be a square K x K matrix, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Membership:
    """Node-to-community assignment.

    Parameters
    ----------
    z : array_like of int, shape (n,)
        Block label of each node, in ``{0, ..., K-1}``.
    K : int
        Number of blocks.  Blocks may be empty (e.g. after clustering), but
        every label must be in range.
    """

    z: np.ndarray
    K: int

    def __post_init__(self):
        z = np.array(self.z, dtype=np.int64).ravel()
        K = int(self.K)
        if K < 1:
            raise ValueError("K must be positive")
        if z.size < K:
            raise ValueError(f"need n >= K, got n={z.size}, K={K}")
        if z.size and (z.min() < 0 or z.max() >= K):
            raise ValueError(f"labels must lie in [0, {K - 1}]")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "K", K)

    @classmethod
    def from_sizes(cls, sizes) -> "Membership":
        sizes = [int(s) for s in sizes]
        return cls(np.repeat(np.arange(len(sizes)), sizes), len(sizes))

    @classmethod
    def equal_blocks(cls, n: int, K: int) -> "Membership":
        """Contiguous blocks of (nearly) equal size; the first ``n % K`` get one extra."""
        base, extra = divmod(n, K)
        return cls.from_sizes([base + (a < extra) for a in range(K)])

    @property
    def n(self) -> int:
        return self.z.size

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.z, minlength=self.K)

    def members(self, a: int) -> np.ndarray:
        return np.flatnonzero(self.z == a)

    def indicator(self) -> np.ndarray:
        """The n x K 0/1 matrix Z with ``Z[i, z_i] = 1``."""
        Z = np.zeros((self.n, self.K))
        Z[np.arange(self.n), self.z] = 1.0
        return Z

    def relabel(self, i: int, a: int) -> "Membership":
        z = self.z.copy()
        z[i] = a
        return Membership(z, self.K)


@dataclass(frozen=True)
class SRParams:
    """Self and reciprocal excitation model.

    The intensity of ``i -> j`` with ``z_i = a, z_j = b`` is::

        M[a,b] + alpha_n[a,b] beta_n[a,b] sum_{s in T_ij} exp(-beta_n[a,b] (t - s))
               + alpha_r[a,b] beta_r[a,b] sum_{s in T_ji} exp(-beta_r[a,b] (t - s))

    ``variant='restricted_r'`` requires a symmetric ``alpha_r`` and
    ``'restricted_n'`` a symmetric ``alpha_n``.
    """

    M: np.ndarray
    alpha_n: np.ndarray
    alpha_r: np.ndarray
    beta_n: np.ndarray
    beta_r: np.ndarray
    variant: str = "full"

    model = "sr"

    def __post_init__(self):
        M = _square(self.M, "M")
        shape = M.shape
        object.__setattr__(self, "M", _frozen(M))
        for name in ("alpha_n", "alpha_r", "beta_n", "beta_r"):
            object.__setattr__(self, name, _frozen(getattr(self, name), shape, name))
        if self.variant not in SR_VARIANTS:
            raise ValueError(f"unknown SR variant {self.variant!r}")
        if np.any(self.M < 0):
            raise ValueError("baselines M must be nonnegative")
        if np.any(self.alpha_n < 0) or np.any(self.alpha_r < 0):
            raise ValueError("jump sizes alpha must be nonnegative")
        if np.any(self.beta_n <= 0) or np.any(self.beta_r <= 0):
            raise ValueError("decays beta must be positive")
        if self.variant == "restricted_r" and not np.allclose(self.alpha_r, self.alpha_r.T, rtol=0, atol=1e-12):
            raise ValueError("restricted_r variant needs a symmetric alpha_r")
        if self.variant == "restricted_n" and not np.allclose(self.alpha_n, self.alpha_n.T, rtol=0, atol=1e-12):
            raise ValueError("restricted_n variant needs a symmetric alpha_n")

    @property
    def K(self) -> int:
        return self.M.shape[0]

    @property
    def baseline(self) -> np.ndarray:
        return self.M

    def block_pair(self, a: int, b: int) -> "BlockPairTheta":
        return BlockPairTheta(
            self.M[a, b], self.M[b, a], self.alpha_n[a, b], self.alpha_n[b, a],
            self.alpha_r[a, b], self.alpha_r[b, a],
        )

    def replace(self, **changes) -> "SRParams":
        kw = dict(M=self.M, alpha_n=self.alpha_n, alpha_r=self.alpha_r,
                  beta_n=self.beta_n, beta_r=self.beta_r, variant=self.variant)
        kw.update(changes)
        return SRParams(**kw)

    @classmethod
    def two_level(cls, K, within, between, variant="full") -> "SRParams":
        """Equal parameters on all diagonal and on all off-diagonal block pairs.

        ``within`` and ``between`` are dicts with keys M, alpha_n, alpha_r,
        beta_n, beta_r.
        """
        eye = np.eye(K, dtype=bool)
        mats = {key: np.where(eye, within[key], between[key]) for key in ("M", "alpha_n", "alpha_r", "beta_n", "beta_r")}
        return cls(variant=variant, **mats)


@dataclass(frozen=True)
class CHIPParams:
    """Independent self-exciting processes on every directed pair."""

    M: np.ndarray
    alpha_n: np.ndarray
    beta_n: np.ndarray

    model = "chip"

    def __post_init__(self):
        M = _square(self.M, "M")
        object.__setattr__(self, "M", _frozen(M))
        object.__setattr__(self, "alpha_n", _frozen(self.alpha_n, M.shape, "alpha_n"))
        object.__setattr__(self, "beta_n", _frozen(self.beta_n, M.shape, "beta_n"))
        if np.any(self.M < 0) or np.any(self.alpha_n < 0) or np.any(self.beta_n <= 0):
            raise ValueError("need M >= 0, alpha >= 0, beta > 0")

    @property
    def K(self) -> int:
        return self.M.shape[0]

    @property
    def baseline(self) -> np.ndarray:
        return self.M

    def as_sr(self) -> SRParams:
        return SRParams(self.M, self.alpha_n, np.zeros_like(self.M), self.beta_n, np.ones_like(self.M))


@dataclass(frozen=True)
class BHMParams:
    """Block Hawkes model: one univariate process per ordered block pair.

    ``M[a,b]`` is the *per node pair* baseline, so the block-level process
    runs at ``n_a n_b M[a,b]`` and each event is routed to a uniformly chosen
    pair.  This keeps ``mu = Z M Z^T`` as in every other model here.
    """

    M: np.ndarray
    alpha_n: np.ndarray
    beta_n: np.ndarray

    model = "bhm"

    def __post_init__(self):
        M = _square(self.M, "M")
        object.__setattr__(self, "M", _frozen(M))
        object.__setattr__(self, "alpha_n", _frozen(self.alpha_n, M.shape, "alpha_n"))
        object.__setattr__(self, "beta_n", _frozen(self.beta_n, M.shape, "beta_n"))
        if np.any(self.M < 0) or np.any(self.alpha_n < 0) or np.any(self.beta_n <= 0):
            raise ValueError("need M >= 0, alpha >= 0, beta > 0")

    @property
    def K(self) -> int:
        return self.M.shape[0]

    @property
    def baseline(self) -> np.ndarray:
        return self.M


@dataclass(frozen=True)
class MULCHParams:
    """Six-type MULCH model.

    ``alpha`` and ``beta`` are K x K x 6 arrays, last axis ordered as
    :data:`EXCITATION_TYPES` = (n, r, tc, ac, gr, ar).
    """

    mu: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    model = "mulch"

    def __post_init__(self):
        mu = _square(self.mu, "mu")
        K = mu.shape[0]
        object.__setattr__(self, "mu", _frozen(mu))
        beta = np.array(self.beta, dtype=float)
        if beta.ndim == 0:
            beta = np.full((K, K, 6), float(beta))
        object.__setattr__(self, "alpha", _frozen(self.alpha, (K, K, 6), "alpha"))
        object.__setattr__(self, "beta", _frozen(beta, (K, K, 6), "beta"))
        if np.any(self.mu < 0) or np.any(self.alpha < 0) or np.any(self.beta <= 0):
            raise ValueError("need mu >= 0, alpha >= 0, beta > 0")

    @property
    def K(self) -> int:
        return self.mu.shape[0]

    @property
    def baseline(self) -> np.ndarray:
        return self.mu

    def alphas(self) -> Dict[str, np.ndarray]:
        return {t: self.alpha[:, :, k] for k, t in enumerate(EXCITATION_TYPES)}

    @classmethod
    def ss_mulch(cls, K, within, between, beta=1.0) -> "MULCHParams":
        """Simplified symmetric MULCH: one parameter set inside blocks, one between.

        ``within`` / ``between`` are 7-tuples (mu, n, r, tc, ac, gr, ar).
        """
        within = np.asarray(within, dtype=float)
        between = np.asarray(between, dtype=float)
        eye = np.eye(K, dtype=bool)
        mu = np.where(eye, within[0], between[0])
        alpha = np.where(eye[:, :, None], within[1:], between[1:])
        return cls(mu, alpha, beta)

    @classmethod
    def grid_ss_mulch(cls, n, K, beta=1.0) -> "MULCHParams":
        """The equal-block SS-MULCH used for the community-detection grid.

        Within: (0.005, 0.2, 0.2, 0.05/s1 x4), between: (0.003, 0.1, 0.1,
        0.025/s2 x4) with s1 = n/K - 2 and s2 = n/K - 1, giving row sums 0.6
        and 0.3 for any n, K.
        """
        s1 = n / K - 2
        s2 = n / K - 1
        if s1 <= 0:
            raise ValueError("need at least 3 nodes per block")
        within = (0.005, 0.2, 0.2) + (0.05 / s1,) * 4
        between = (0.003, 0.1, 0.1) + (0.025 / s2,) * 4
        return cls.ss_mulch(K, within, between, beta)


AnyParams = Union[SRParams, CHIPParams, BHMParams, MULCHParams]


@dataclass(frozen=True)
class BlockPairTheta:
    """Baselines and jump sizes of one block pair ``(a,b),(b,a)`` of an SR model.

    ``alpha_r_ba`` defaults to ``alpha_r_ab`` (the restricted_r model).
    """

    M_ab: float
    M_ba: float
    alpha_n_ab: float
    alpha_n_ba: float
    alpha_r_ab: float
    alpha_r_ba: Optional[float] = None

    def __post_init__(self):
        if self.alpha_r_ba is None:
            object.__setattr__(self, "alpha_r_ba", self.alpha_r_ab)
        for name in ("M_ab", "M_ba", "alpha_n_ab", "alpha_n_ba", "alpha_r_ab", "alpha_r_ba"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def gamma(self) -> np.ndarray:
        return np.array([[self.alpha_n_ab, self.alpha_r_ab], [self.alpha_r_ba, self.alpha_n_ba]])

    @property
    def baseline(self) -> np.ndarray:
        return np.array([self.M_ab, self.M_ba])

    def as_array(self) -> np.ndarray:
        return np.array([self.M_ab, self.M_ba, self.alpha_n_ab, self.alpha_n_ba, self.alpha_r_ab, self.alpha_r_ba])


# ---------------------------------------------------------------------------
# Stability
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StabilityResult:
    stable: bool
    rho: float
    sigma_star: float


def spectral_radius_2x2(G) -> float:
    """Spectral radius of a nonnegative 2 x 2 matrix (its eigenvalues are real)."""
    (p, q), (r, s) = np.asarray(G, dtype=float)
    half = 0.5 * (p + s)
    disc = 0.25 * (p - s) ** 2 + q * r
    return float(half + np.sqrt(max(disc, 0.0)))


def stability_check(theta, sigma_star: float = DEFAULT_SIGMA_STAR) -> StabilityResult:
    """Stability of one SR block pair.

    Parameters
    ----------
    theta : BlockPairTheta or array_like (2, 2)
        Block-pair parameters, or the 2 x 2 excitation matrix
        ``[[alpha_n_ab, alpha_r_ab], [alpha_r_ba, alpha_n_ba]]``.
    sigma_star : float
        Bound on the spectral radius, ``< 1``.

    Returns
    -------
    StabilityResult
        ``rho`` is the spectral radius; ``stable`` is the closed-form test
        ``alpha_n_ab <= s, alpha_n_ba <= s, alpha_r_ab alpha_r_ba <= (s - alpha_n_ab)(s - alpha_n_ba)``,
        which is equivalent to ``rho <= s``.
    """
    G = theta.gamma if isinstance(theta, BlockPairTheta) else np.asarray(theta, dtype=float)
    if G.shape != (2, 2):
        raise ValueError("expected a 2 x 2 excitation block")
    if np.any(G < 0):
        raise ValueError("jump sizes must be nonnegative")
    if not 0 < sigma_star < 1:
        raise ValueError("sigma_star must lie in (0, 1)")
    an_ab, an_ba = G[0, 0], G[1, 1]
    stable = bool(an_ab <= sigma_star and an_ba <= sigma_star
                  and G[0, 1] * G[1, 0] <= (sigma_star - an_ab) * (sigma_star - an_ba))
    return StabilityResult(stable, spectral_radius_2x2(G), sigma_star)


# ---------------------------------------------------------------------------
# Block-structured excitation operator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExcitationTerm:
    """One constant-pattern contribution to a block pair.

    ``target`` / ``source`` are directions: 0 for pairs in (a,b), 1 for pairs
    in (b,a).  ``pattern`` is one of the MULCH types or ``'uniform'`` (every
    source pair of the sub-block excites every target pair by ``alpha / P``).
    """

    target: int
    source: int
    pattern: str
    alpha: float
    beta: float


_SOURCE_DIRECTION = {"n": 0, "r": 1, "tc": 0, "ac": 0, "gr": 1, "ar": 1, "uniform": 0}


def _pair_arrays(n_a, n_b, diagonal, self_edges):
    """Local (sender, receiver, direction) of every pair in the ordering of the block pair.

    Between blocks: (a,b) pairs lexicographic in (i, j), then (b,a) pairs
    lexicographic in (j, i).  Within a block: lexicographic (i, j), skipping
    i == j unless self edges are on.
    """
    if diagonal:
        i, j = np.meshgrid(np.arange(n_a), np.arange(n_a), indexing="ij")
        i, j = i.ravel(), j.ravel()
        if not self_edges:
            keep = i != j
            i, j = i[keep], j[keep]
        return i, j, np.zeros(i.size, dtype=np.int64)
    i, j = np.meshgrid(np.arange(n_a), np.arange(n_b), indexing="ij")
    jj, ii = np.meshgrid(np.arange(n_b), np.arange(n_a), indexing="ij")
    send = np.concatenate([i.ravel(), jj.ravel()])
    recv = np.concatenate([j.ravel(), ii.ravel()])
    direction = np.repeat([0, 1], n_a * n_b)
    return send, recv, direction


@lru_cache(maxsize=256)
def _pattern_edges(n_a, n_b, diagonal, self_edges, pattern, target):
    """(source, target) local pair indices for one pattern.

    The returned arrays are read-only and shared; callers must not modify them.
    """
    send, recv, direction = _pair_arrays(n_a, n_b, diagonal, self_edges)
    P = send.size
    # index lookup: (direction, sender, receiver) -> local pair index
    size = max(n_a, n_b)
    lookup = -np.ones((2, size, size), dtype=np.int64)
    lookup[direction, send, recv] = np.arange(P)

    if diagonal:
        tgt = np.arange(P)
    else:
        tgt = np.flatnonzero(direction == target)
    ti, tj = send[tgt], recv[tgt]
    d_t = 0 if diagonal else target
    d_o = 0 if diagonal else 1 - target
    # sizes of the sender / receiver blocks of the target direction
    n_s = n_a if (diagonal or target == 0) else n_b
    n_r = n_b if (diagonal or target == 0) else n_a

    if pattern == "n":
        src, tg = lookup[d_t, ti, tj], tgt
    elif pattern == "r":
        src, tg = lookup[d_o, tj, ti], tgt
    elif pattern == "uniform":
        pool = tgt
        src = np.repeat(pool, pool.size)
        tg = np.tile(pool, pool.size)
    else:
        # candidate third node ranges over the relevant block
        if pattern in ("tc", "gr"):
            k = np.arange(n_r)
        else:
            k = np.arange(n_s)
        T, Kk = np.meshgrid(np.arange(tgt.size), k, indexing="ij")
        T, Kk = T.ravel(), Kk.ravel()
        i, j = ti[T], tj[T]
        if pattern == "tc":      # (i, y), y != j
            valid = Kk != j
            d, s, r = d_t, i, Kk
        elif pattern == "ac":    # (x, j), x != i
            valid = Kk != i
            d, s, r = d_t, Kk, j
        elif pattern == "gr":    # (x, i), x in receiver block, x != j
            valid = Kk != j
            d, s, r = d_o, Kk, i
        elif pattern == "ar":    # (j, y), y in sender block, y != i
            valid = Kk != i
            d, s, r = d_o, j, Kk
        else:
            raise ValueError(f"unknown pattern {pattern!r}")
        if diagonal:
            # within a block the third node must also avoid the other endpoint
            other = {"tc": i, "ac": j, "gr": i, "ar": j}[pattern]
            valid &= Kk != other
        s_, r_, T = s[valid], r[valid], T[valid]
        src, tg = lookup[d, s_, r_], tgt[T]
    if np.any(src < 0):
        raise RuntimeError("pattern referenced a pair outside the block pair")
    src = np.ascontiguousarray(src)
    tg = np.ascontiguousarray(tg)
    src.setflags(write=False)
    tg.setflags(write=False)
    return src, tg


@dataclass(frozen=True)
class BlockPairOperator:
    """Excitation restricted to block pair ``(a,b),(b,a)`` (``a <= b``)."""

    a: int
    b: int
    nodes_a: np.ndarray
    nodes_b: np.ndarray
    self_edges: bool
    terms: Tuple[ExcitationTerm, ...]

    @property
    def diagonal(self) -> bool:
        return self.a == self.b

    @property
    def n_a(self) -> int:
        return self.nodes_a.size

    @property
    def n_b(self) -> int:
        return self.nodes_b.size

    @property
    def n_directions(self) -> int:
        return 1 if self.diagonal else 2

    def pairs_per_direction(self) -> int:
        if self.diagonal:
            return self.n_a * self.n_a if self.self_edges else self.n_a * (self.n_a - 1)
        return self.n_a * self.n_b

    @property
    def n_pairs(self) -> int:
        return self.n_directions * self.pairs_per_direction()

    def local_pairs(self):
        return _pair_arrays(self.n_a, self.n_b, self.diagonal, self.self_edges)

    def pairs(self) -> np.ndarray:
        """Global (sender, receiver) of every pair, in block-pair order, shape (P, 2)."""
        s, r, d = self.local_pairs()
        if self.diagonal:
            return np.column_stack([self.nodes_a[s], self.nodes_a[r]])
        first = d == 0
        send = np.empty(s.size, dtype=np.int64)
        recv = np.empty(s.size, dtype=np.int64)
        send[first], recv[first] = self.nodes_a[s[first]], self.nodes_b[r[first]]
        send[~first], recv[~first] = self.nodes_b[s[~first]], self.nodes_a[r[~first]]
        return np.column_stack([send, recv])

    def multiplicity(self, term: ExcitationTerm) -> int:
        """Number of nonzero entries per row (= per column) of one term's pattern."""
        if term.pattern in ("n", "r"):
            return 1
        if term.pattern == "uniform":
            return self.pairs_per_direction()
        if self.diagonal:
            return self.n_a - 2
        n_s = self.n_a if term.target == 0 else self.n_b
        n_r = self.n_b if term.target == 0 else self.n_a
        return n_r - 1 if term.pattern in ("tc", "gr") else n_s - 1

    def coefficient(self, term: ExcitationTerm) -> float:
        """Value of each nonzero entry contributed by the term."""
        if term.pattern == "uniform":
            P = self.pairs_per_direction()
            return term.alpha / P if P else 0.0
        return term.alpha

    def quotient(self) -> np.ndarray:
        """Sub-block row sums: ``Q[t, s]`` is the row sum of Gamma_{s -> t}.

        Row and column sums within each sub-block coincide by construction,
        so Q is the quotient matrix of an equitable partition and shares the
        spectral radius of the full block.
        """
        d = self.n_directions
        Q = np.zeros((d, d))
        for term in self.terms:
            if self.diagonal:
                t, s = 0, 0
            else:
                t, s = term.target, term.source
            Q[t, s] += self.coefficient(term) * self.multiplicity(term)
        return Q

    def row_sums(self) -> np.ndarray:
        return self.quotient()

    def col_sums(self) -> np.ndarray:
        return self.quotient()

    def sparse(self) -> sp.csr_matrix:
        """The block as a sparse P x P matrix (entry [target, source])."""
        P = self.n_pairs
        rows, cols, vals = [], [], []
        for term in self.terms:
            src, tg = _pattern_edges(self.n_a, self.n_b, self.diagonal, self.self_edges,
                                     term.pattern, 0 if self.diagonal else term.target)
            rows.append(tg)
            cols.append(src)
            vals.append(np.full(src.size, self.coefficient(term)))
        if not rows:
            return sp.csr_matrix((P, P))
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(P, P))

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.sparse() @ x

    def to_dense(self) -> np.ndarray:
        if max(self.n_a, self.n_b) > DENSE_MAX_NODES:
            raise ValueError("dense assembly is limited to small blocks")
        return self.sparse().toarray()

    def spectral_radius(self, method: str = "closed") -> float:
        """Spectral radius of the block.

        ``method='closed'`` uses the quotient matrix (1 x 1 or 2 x 2);
        ``'power'`` runs power iteration on the sparse block.
        """
        if method == "closed":
            Q = self.quotient()
            return float(Q[0, 0]) if Q.shape == (1, 1) else spectral_radius_2x2(Q)
        if method == "power":
            return power_spectral_radius(self.sparse())
        raise ValueError(f"unknown method {method!r}")


def power_spectral_radius(A, tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER) -> float:
    """Perron root of a nonnegative (sparse) matrix by power iteration from the ones vector."""
    x = np.ones(A.shape[0])
    x /= np.linalg.norm(x)
    rho = 0.0
    for _ in range(max_iter):
        y = A @ x
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        new = norm
        x = y / norm
        if abs(new - rho) <= tol * max(new, 1e-300):
            return new
        rho = new
    return rho


@dataclass(frozen=True)
class ExcitationOperator:
    """Block-diagonal excitation over all node pairs, stored per block pair."""

    membership: Membership
    self_edges: bool
    blocks: Dict[Tuple[int, int], BlockPairOperator] = field(repr=False)
    model: str = "sr"

    def block_pairs(self):
        return sorted(self.blocks)

    def spectral_radius(self, method: str = "closed") -> float:
        vals = [op.spectral_radius(method) for op in self.blocks.values() if op.n_pairs]
        return max(vals, default=0.0)

    def gamma_max(self) -> float:
        return gamma_max(self)

    def pair_order(self) -> np.ndarray:
        """Global (sender, receiver) of every pair in the canonical ordering, shape (P, 2)."""
        parts = [self.blocks[k].pairs() for k in self.block_pairs()]
        return np.concatenate(parts) if parts else np.zeros((0, 2), dtype=np.int64)

    def vec(self, A: np.ndarray) -> np.ndarray:
        order = self.pair_order()
        return np.asarray(A)[order[:, 0], order[:, 1]]

    def unvec(self, v: np.ndarray) -> np.ndarray:
        n = self.membership.n
        order = self.pair_order()
        A = np.zeros((n, n))
        A[order[:, 0], order[:, 1]] = v
        return A

    def to_dense(self) -> np.ndarray:
        """The full operator on pairs in :meth:`pair_order` (small n only)."""
        if self.membership.n > DENSE_MAX_NODES:
            raise ValueError(f"dense assembly is limited to n <= {DENSE_MAX_NODES}")
        return sp.block_diag([self.blocks[k].sparse() for k in self.block_pairs()]).toarray()


def _terms_for(params, a, b) -> Tuple[ExcitationTerm, ...]:
    """Pattern terms of block pair (a, b) for each model family."""
    dirs = [(0, a, b)] if a == b else [(0, a, b), (1, b, a)]
    terms = []
    for t, s, r in dirs:
        if isinstance(params, SRParams):
            terms.append(ExcitationTerm(t, t, "n", params.alpha_n[s, r], params.beta_n[s, r]))
            terms.append(ExcitationTerm(t, 1 - t if a != b else 0, "r", params.alpha_r[s, r], params.beta_r[s, r]))
        elif isinstance(params, CHIPParams):
            terms.append(ExcitationTerm(t, t, "n", params.alpha_n[s, r], params.beta_n[s, r]))
        elif isinstance(params, BHMParams):
            terms.append(ExcitationTerm(t, t, "uniform", params.alpha_n[s, r], params.beta_n[s, r]))
        elif isinstance(params, MULCHParams):
            for k, kind in enumerate(EXCITATION_TYPES):
                src = t if (a == b or _SOURCE_DIRECTION[kind] == 0) else 1 - t
                terms.append(ExcitationTerm(t, src, kind, params.alpha[s, r, k], params.beta[s, r, k]))
        else:
            raise TypeError(f"unsupported parameter type {type(params).__name__}")
    return tuple(terms)


def build_excitation(params: AnyParams, z: Membership, allow_self_edges: bool = False) -> ExcitationOperator:
    """Structured excitation operator of a model under membership ``z``.

    Raises
    ------
    ValueError
        If the parameter K differs from ``z.K``, or for MULCH with self edges
        (its six patterns are only defined on pairs of distinct nodes).
    """
    if params.K != z.K:
        raise ValueError(f"parameters have K={params.K} but membership has K={z.K}")
    if isinstance(params, MULCHParams) and allow_self_edges:
        raise ValueError("MULCH excitation is defined without self edges")
    members = [z.members(a) for a in range(z.K)]
    blocks = {}
    for a in range(z.K):
        for b in range(a, z.K):
            blocks[(a, b)] = BlockPairOperator(a, b, members[a], members[b], allow_self_edges, _terms_for(params, a, b))
    return ExcitationOperator(z, allow_self_edges, blocks, params.model)


def gamma_max(op: ExcitationOperator) -> float:
    """Largest sub-block row/column sum over all block pairs.

    Each diagonal block pair is a single sub-block; off-diagonal ones split
    into four.
    """
    vals = [op_.quotient().max() for op_ in op.blocks.values() if op_.n_pairs]
    return float(max(vals, default=0.0))


# ---------------------------------------------------------------------------
# Population quantities
# ---------------------------------------------------------------------------

def block_rates(params: AnyParams, z: Membership, allow_self_edges: bool = False,
                op: Optional[ExcitationOperator] = None) -> np.ndarray:
    """K x K matrix of stationary per-pair event rates ``Lambda[a, b]``.

    Entries for block pairs with no node pairs are left at 0.
    """
    op = op if op is not None else build_excitation(params, z, allow_self_edges)
    base = params.baseline
    rates = np.zeros((z.K, z.K))
    for (a, b), block in op.blocks.items():
        if not block.n_pairs:
            continue
        Q = block.quotient()
        if block.spectral_radius() >= 1.0:
            raise ValueError(f"block pair ({a},{b}) is unstable (spectral radius >= 1)")
        if block.diagonal:
            rates[a, a] = base[a, a] / (1.0 - Q[0, 0])
        else:
            lam = np.linalg.solve(np.eye(2) - Q, [base[a, b], base[b, a]])
            rates[a, b], rates[b, a] = lam
    return rates


def expected_count_matrix(params: AnyParams, z: Membership, T: float, allow_self_edges: bool = False) -> np.ndarray:
    """Expected n x n count matrix ``vec^{-1}(R vec(mu) T)`` of a stationary model.

    Because every sub-block has constant row sums and the baseline is
    constant on each direction of a block pair, ``R vec(mu)`` is constant on
    each direction too and comes from a 1 x 1 or 2 x 2 solve.

    Raises
    ------
    ValueError
        If any block pair has spectral radius >= 1.
    """
    rates = block_rates(params, z, allow_self_edges)
    E = rates[np.ix_(z.z, z.z)] * float(T)
    if not allow_self_edges:
        np.fill_diagonal(E, 0.0)
    return E


@dataclass(frozen=True)
class ModelDiagnostics:
    sigma_star: float
    gamma_max: float
    mu_max: float
    lambda_K: float
    h_value: Optional[float]
    bound_proxy: float
    gamma_within: Optional[float] = None
    gamma_between: Optional[float] = None


def _two_level(A: np.ndarray) -> Optional[Tuple[float, float]]:
    K = A.shape[0]
    d = np.diag(A)
    off = A[~np.eye(K, dtype=bool)]
    if np.allclose(d, d[0]) and (off.size == 0 or np.allclose(off, off[0])):
        return float(d[0]), float(off[0]) if off.size else None
    return None


def diagnostics(params: AnyParams, z: Membership, T: float, allow_self_edges: bool = False) -> ModelDiagnostics:
    """Spectral radius, gamma_max, lambda_K and the SS-MULCH separation function.

    ``h_value`` (and the within/between row sums) are filled only when the
    model is two-level, i.e. all diagonal block pairs share one row sum and
    baseline and all off-diagonal ones share another.
    """
    op = build_excitation(params, z, allow_self_edges)
    sigma = op.spectral_radius()
    if sigma >= 1.0:
        raise ValueError(f"model is unstable (spectral radius {sigma:.4g} >= 1)")
    E = expected_count_matrix(params, z, T, allow_self_edges) / float(T)
    svals = np.linalg.svd(E, compute_uv=False)
    lam_K = float(svals[z.K - 1]) if svals.size >= z.K else 0.0

    present = np.outer(z.sizes > 0, z.sizes > 0)
    base = np.asarray(params.baseline)
    mu_max = float(base[present].max())

    within = [op.blocks[(a, a)].quotient()[0, 0] for a in range(z.K) if op.blocks[(a, a)].n_pairs]
    between = [op.blocks[(a, b)].quotient().sum(axis=1).max() for (a, b) in op.blocks if a != b and op.blocks[(a, b)].n_pairs]
    h = g1 = g2 = None
    levels = _two_level(base)
    if levels is not None and within and np.allclose(within, within[0]):
        g1 = float(within[0])
        mu1, mu2 = levels
        if between and np.allclose(between, between[0]) and mu2 is not None:
            g2 = float(between[0])
            h = (1.0 / (1.0 - g1) - (1.0 / (1.0 - g2)) * mu2 / mu1) ** 2
        elif z.K == 1:
            g2, h = None, None
    n = z.n
    bound = z.K ** 2 * np.log(n) * np.log(T) / (n * T * mu_max) if mu_max > 0 else np.inf
    return ModelDiagnostics(sigma, gamma_max(op), mu_max, lam_K, h, float(bound), g1, g2)


_PARAM_FIELDS = {
    "sr": ("M", "alpha_n", "alpha_r", "beta_n", "beta_r"),
    "chip": ("M", "alpha_n", "beta_n"),
    "bhm": ("M", "alpha_n", "beta_n"),
}


def params_to_dict(params: AnyParams) -> dict:
    """Plain-python view of a parameter object (matrices as nested lists)."""
    out = {"model": params.model, "K": params.K}
    if isinstance(params, SRParams):
        out["variant"] = params.variant
    if isinstance(params, MULCHParams):
        out["mu"] = params.mu.tolist()
        for k, kind in enumerate(EXCITATION_TYPES):
            out[f"alpha_{kind}"] = params.alpha[:, :, k].tolist()
            out[f"beta_{kind}"] = params.beta[:, :, k].tolist()
        return out
    for name in _PARAM_FIELDS[params.model]:
        out[name] = getattr(params, name).tolist()
    return out


def params_from_dict(d: dict) -> AnyParams:
    model = d.get("model", "sr").lower()
    if model == "sr":
        return SRParams(d["M"], d["alpha_n"], d["alpha_r"], d["beta_n"], d["beta_r"], d.get("variant", "full"))
    if model == "chip":
        return CHIPParams(d["M"], d["alpha_n"], d["beta_n"])
    if model == "bhm":
        return BHMParams(d["M"], d["alpha_n"], d["beta_n"])
    if model == "mulch":
        mu = np.asarray(d["mu"], dtype=float)
        alpha = np.stack([np.asarray(d[f"alpha_{k}"], dtype=float) for k in EXCITATION_TYPES], axis=-1)
        beta = np.stack([np.broadcast_to(np.asarray(d.get(f"beta_{k}", d.get("beta", 1.0)), dtype=float), mu.shape)
                         for k in EXCITATION_TYPES], axis=-1)
        return MULCHParams(mu, alpha, beta)
    raise ValueError(f"unknown model {model!r}")
