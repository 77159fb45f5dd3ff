"""End-to-end fitting: spectral clustering, GMM, decay MLE and optional refinement."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .estimate import FitResult, fit_params, refine
from .events import EventLog
from .likelihood import sr_loglik
from .model import DEFAULT_SIGMA_STAR, Membership, SRParams, diagnostics
from .spectral import count_matrix, spectral_cluster


class PipelineError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class FitOptions:
    variant: str = "restricted_r"
    refine: bool = False
    sweeps: int = 1
    sigma_star: float = DEFAULT_SIGMA_STAR
    beta_init: float = 1.0
    fit_beta: bool = True
    seed: int = 0
    unseen_to_largest: bool = True
    n_starts: int = 8


def assign_unseen(z: Membership, active: np.ndarray) -> Membership:
    """Move nodes with no events (``active`` False) to the largest block among the active nodes."""
    if active.all() or not active.any():
        return z
    sizes = np.bincount(z.z[active], minlength=z.K)
    zz = np.array(z.z)
    zz[~active] = int(np.argmax(sizes))
    return Membership(zz, z.K)


def fit_pipeline(train: EventLog, K: int, options: FitOptions = FitOptions(),
                 z: Optional[Membership] = None) -> FitResult:
    """Cluster, estimate and optionally refine.

    ``z`` skips clustering and uses the given labels.  With K = 1 clustering
    is skipped as well.  Nodes without training events go to the largest
    block when ``options.unseen_to_largest`` is set.

    Raises
    ------
    PipelineError
        Wrapping the failure of a stage (``cluster``, ``estimate``,
        ``refine`` or ``evaluate``).
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    timings = {}
    t_start = time.perf_counter()
    N = count_matrix(train)
    try:
        if z is None:
            z = spectral_cluster(N, K, seed=options.seed) if K > 1 else Membership(np.zeros(train.n, np.int64), 1)
        if options.unseen_to_largest:
            active = (N.counts.sum(axis=0) + N.counts.sum(axis=1)) > 0
            z = assign_unseen(z, active)
    except Exception as exc:
        raise PipelineError("cluster", exc) from exc
    timings["cluster"] = time.perf_counter() - t_start
    z0 = z
    t = time.perf_counter()
    try:
        pf = fit_params(train, z, options.variant, options.sigma_star, options.beta_init, options.fit_beta,
                        options.n_starts, options.seed)
    except Exception as exc:
        raise PipelineError("estimate", exc) from exc
    timings["estimate"] = time.perf_counter() - t
    params, flags = pf.params, list(pf.flags)
    gmm_obj = {k: r.objective for k, r in pf.gmm.items()}
    ref = None
    if options.refine and K > 1:
        t = time.perf_counter()
        try:
            ref = refine(train, z, params, K, sweeps=options.sweeps, variant=options.variant,
                         sigma_star=options.sigma_star, seed=options.seed)
        except Exception as exc:
            raise PipelineError("refine", exc) from exc
        timings["refine"] = time.perf_counter() - t
        z, params = ref.membership, ref.params
        flags += [f"refine: node {i} kept (move would empty its block)" for i in ref.blocked]
        if ref.param_fit is not None:
            flags += ref.param_fit.flags
            gmm_obj = {k: r.objective for k, r in ref.param_fit.gmm.items()}
    t = time.perf_counter()
    try:
        ll = sr_loglik(train, z, params)
        try:
            diag = diagnostics(params, z, train.horizon_T - train.start, train.allow_self_edges)
        except ValueError as exc:
            diag = None
            flags.append(f"diagnostics unavailable: {exc}")
    except Exception as exc:
        raise PipelineError("evaluate", exc) from exc
    timings["evaluate"] = time.perf_counter() - t
    timings["total"] = time.perf_counter() - t_start
    return FitResult(z, params, ll, gmm_obj, diag, flags, timings, z0, ref)


def align_labels(z_true: Membership, z_hat: Membership) -> np.ndarray:
    """Permutation ``perm`` with ``perm[estimated label] = true label`` maximizing agreement."""
    K = max(z_true.K, z_hat.K)
    C = np.zeros((K, K))
    np.add.at(C, (z_hat.z, z_true.z), 1)
    rows, cols = linear_sum_assignment(C, maximize=True)
    perm = np.empty(K, dtype=np.int64)
    perm[rows] = cols
    return perm


def permute_params(params: SRParams, perm: np.ndarray) -> SRParams:
    """Relabel blocks: estimated block k becomes block ``perm[k]``."""
    inv = np.argsort(perm)
    f = lambda A: np.asarray(A)[np.ix_(inv, inv)]
    return SRParams(f(params.M), f(params.alpha_n), f(params.alpha_r), f(params.beta_n), f(params.beta_r),
                    params.variant)


def select_K(train: EventLog, test: EventLog, K_list: Iterable[int], options: FitOptions = FitOptions()
             ) -> Tuple[int, Dict[int, float]]:
    """Pick K by held-out log-likelihood per event; ties go to the smaller K."""
    from .evaluation import test_loglik_per_event

    K_list = sorted(set(int(k) for k in K_list))
    if not K_list:
        raise ValueError("K_list is empty")
    table = {}
    for K in K_list:
        fit = fit_pipeline(train, K, options)
        table[K] = test_loglik_per_event(train, test, fit.params, fit.membership)
    best = max(K_list, key=lambda k: (table[k], -k))
    return best, table
