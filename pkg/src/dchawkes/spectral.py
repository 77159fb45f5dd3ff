"""Count matrices, spectral clustering of directed counts, and clustering metrics."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment
from sklearn.cluster import KMeans
from sklearn.metrics import adjusted_rand_score
from sklearn.utils.extmath import randomized_svd

from .events import EventLog
from .model import Membership

ZERO_ROW_TOL = 1e-12
DENSE_SVD_MAX_N = 2000
KMEANS_RESTARTS = 10
KMEANS_MAX_ITER = 300


@dataclass(frozen=True)
class CountMatrix:
    """Directed event counts ``counts[i, j]`` = number of events i -> j."""

    counts: np.ndarray
    horizon_T: float

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("count matrix must be square")
        if np.any(c < 0):
            raise ValueError("counts must be nonnegative")
        c = c.astype(np.int64) if np.issubdtype(c.dtype, np.integer) else c.astype(float)
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def n(self) -> int:
        return self.counts.shape[0]

    def scaled(self, c: float) -> "CountMatrix":
        return CountMatrix(self.counts * float(c), self.horizon_T)

    def to_csv(self, path, coo: bool = False) -> None:
        """Dense CSV, or ``i,j,count`` rows for the nonzero entries when ``coo``."""
        path = Path(path)
        if coo:
            i, j = np.nonzero(self.counts)
            np.savetxt(path, np.column_stack([i, j, self.counts[i, j]]), fmt="%d" if self.counts.dtype.kind == "i" else "%.17g",
                       delimiter=",", header="i,j,count", comments="")
        else:
            np.savetxt(path, self.counts, fmt="%d" if self.counts.dtype.kind == "i" else "%.17g", delimiter=",")


def count_matrix(events: EventLog, n: Optional[int] = None) -> CountMatrix:
    """Count matrix of a log.

    Raises
    ------
    ValueError
        If a node index is outside ``[0, n)``.
    """
    n = events.n if n is None else int(n)
    if len(events) and max(events.sender.max(), events.receiver.max()) >= n:
        raise ValueError(f"node index out of range [0, {n})")
    flat = np.bincount(events.sender * n + events.receiver, minlength=n * n)
    return CountMatrix(flat.reshape(n, n), events.horizon_T)


@dataclass(frozen=True)
class SpectralEmbedding:
    X_L: np.ndarray
    X_R: np.ndarray
    X: np.ndarray
    X_star: np.ndarray
    zero_rows: np.ndarray
    singular_values: np.ndarray


def _canonical_signs(U):
    # flip each column so its largest-magnitude entry is positive
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def spectral_embedding(N, K: int, seed: int = 0) -> SpectralEmbedding:
    """Top-K singular vectors of N, concatenated and row-normalized.

    Dense LAPACK SVD up to n = 2000; a randomized truncated SVD above that.
    """
    A = N.counts if isinstance(N, CountMatrix) else np.asarray(N)
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if K > n:
        raise ValueError(f"K={K} exceeds n={n}")
    if not np.all(np.isfinite(A)):
        raise ValueError("count matrix has non-finite entries")
    if n <= DENSE_SVD_MAX_N:
        U, s, Vt = np.linalg.svd(A)
        U, s, V = U[:, :K], s[:K], Vt[:K].T
    else:
        U, s, Vt = randomized_svd(sp.csr_matrix(A), K, n_oversamples=10, n_iter=2, random_state=int(seed) % 2 ** 32)
        V = Vt.T
    U = _canonical_signs(U)
    V = _canonical_signs(V)
    X = np.hstack([U, V])
    norms = np.linalg.norm(X, axis=1)
    zero = norms < ZERO_ROW_TOL
    X_star = X[~zero] / norms[~zero, None]
    return SpectralEmbedding(U, V, X, X_star, np.flatnonzero(zero), s)


def spectral_cluster(N, K: int, epsilon: Optional[float] = None, seed: int = 0,
                     n_init: int = KMEANS_RESTARTS, max_iter: int = KMEANS_MAX_ITER) -> Membership:
    """Spectral clustering of a directed count matrix.

    Takes the top-K left and right singular vectors, concatenates them, drops
    all-zero rows, normalizes the rest to unit length and runs k-means++ with
    ``n_init`` restarts.  Zero rows (nodes with no events) go to cluster 0.
    ``epsilon`` is accepted for interface compatibility; the k-means
    approximation factor is not enforced.

    Raises
    ------
    ValueError
        If ``K > n`` or N has non-finite entries.
    """
    A = N.counts if isinstance(N, CountMatrix) else np.asarray(N)
    n = A.shape[0]
    if K > n:
        raise ValueError(f"K={K} exceeds n={n}")
    if K == 1:
        return Membership(np.zeros(n, dtype=np.int64), 1)
    emb = spectral_embedding(A, K, seed)
    z = np.zeros(n, dtype=np.int64)
    keep = np.setdiff1d(np.arange(n), emb.zero_rows)
    if keep.size >= K:
        km = KMeans(K, init="k-means++", n_init=n_init, max_iter=max_iter, random_state=int(seed) % 2 ** 32)
        z[keep] = km.fit_predict(emb.X_star)
    elif keep.size:
        z[keep] = np.arange(keep.size)
    return Membership(z, K)


def ari(z1, z2) -> float:
    """Adjusted Rand index (Hubert and Arabie)."""
    a = z1.z if isinstance(z1, Membership) else np.asarray(z1)
    b = z2.z if isinstance(z2, Membership) else np.asarray(z2)
    if a.shape != b.shape:
        raise ValueError("label vectors have different lengths")
    return float(adjusted_rand_score(a, b))


def misclustering_rate(z_true, z_hat) -> float:
    """Fraction of nodes mislabeled under the best matching of labels."""
    a = z_true.z if isinstance(z_true, Membership) else np.asarray(z_true)
    b = z_hat.z if isinstance(z_hat, Membership) else np.asarray(z_hat)
    if a.shape != b.shape:
        raise ValueError("label vectors have different lengths")
    if a.size == 0:
        return 0.0
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    C = np.zeros((ia.max() + 1, ib.max() + 1))
    np.add.at(C, (ia, ib), 1)
    rows, cols = linear_sum_assignment(C, maximize=True)
    return float(1.0 - C[rows, cols].sum() / a.size)


def spectral_norm_error(N, expected, tol: float = 1e-8, max_iter: int = 10_000, seed: int = 0) -> float:
    """Largest singular value of ``N - expected`` by power iteration on Delta^T Delta."""
    A = N.counts if isinstance(N, CountMatrix) else np.asarray(N)
    E = np.asarray(expected, dtype=float)
    if A.shape != E.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {E.shape}")
    D = np.asarray(A, dtype=float) - E
    if not np.any(D):
        return 0.0
    x = np.random.default_rng(seed).standard_normal(D.shape[1])
    x /= np.linalg.norm(x)
    sigma = 0.0
    for _ in range(max_iter):
        y = D.T @ (D @ x)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        new = np.sqrt(ny)
        if abs(new - sigma) <= tol * new:
            return float(np.linalg.norm(D @ x))
        sigma = new
    return float(np.linalg.norm(D @ x))
