"""Held-out evaluation: test log-likelihood, dynamic link prediction, trend summaries."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from sklearn.metrics import roc_auc_score

from . import _kernels
from .events import EventLog
from .likelihood import dyad_params, index_log, sr_loglik
from .model import Membership, SRParams

LARGE_GRAPH_N = 2000
CANDIDATE_SAMPLE = 1000


@dataclass(frozen=True)
class EvalConfig:
    """Dynamic link prediction settings.

    ``delta`` has no default: it depends on the time scale of the data.
    ``candidate_senders`` / ``candidate_receivers`` restrict the scored
    pairs; when unset and n > 2000, 1000 of each are sampled.
    """

    delta: float
    n_intervals: int = 100
    seed: int = 0
    candidate_senders: Optional[Sequence[int]] = None
    candidate_receivers: Optional[Sequence[int]] = None

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.n_intervals < 1:
            raise ValueError("n_intervals must be >= 1")


def test_loglik_per_event(train: EventLog, test: EventLog, params: SRParams, z: Membership) -> float:
    """Log-likelihood of the test events given all earlier events, per test event.

    The window is ``[test.start, test.horizon_T]``; training events enter as
    history only.

    Raises
    ------
    ValueError
        If the test log is empty.
    """
    if len(test) == 0:
        raise ValueError("test set is empty")
    events = train.merged(test)
    counted = np.concatenate([np.zeros(len(train), bool), np.ones(len(test), bool)])
    # merged() re-sorts by time; recover which rows came from the test log
    order = np.argsort(np.concatenate([train.time, test.time]), kind="stable")
    counted = counted[order]
    ll = sr_loglik(events, z, params, window=(test.start, test.horizon_T), counted=counted,
                   allow_self_edges=train.allow_self_edges or test.allow_self_edges)
    return ll / len(test)


def _history_integrals(index, z: Membership, params: SRParams, t: float, delta: float) -> np.ndarray:
    zu, zv = z.z[index.u], z.z[index.v]
    _, _, an0, an1, ar0, ar1, bn0, bn1, br0, br1 = (np.ascontiguousarray(a, dtype=float)
                                                     for a in dyad_params(params, zu, zv))
    return _kernels.dyad_excitation_at(index.times, index.dirs, index.seg, index.loop,
                                       an0, an1, ar0, ar1, bn0, bn1, br0, br1, float(t), float(delta))


def link_compensators(history: EventLog, params: SRParams, z: Membership, t: float, delta: float,
                      index=None) -> np.ndarray:
    """n x n matrix of integrated intensities over [t, t + delta].

    Only events strictly before t drive the excitation; events inside the
    interval do not feed back.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    index = index_log(history) if index is None else index
    n = history.n
    L = params.M[np.ix_(z.z, z.z)] * delta
    if index.n_dyads:
        ex = _history_integrals(index, z, params, t, delta)
        loop = index.loop
        np.add.at(L, (index.u, index.v), ex[:, 0])
        np.add.at(L, (index.v[~loop], index.u[~loop]), ex[~loop, 1])
    return L


def link_probability(history: EventLog, params: SRParams, z: Membership, pair, interval) -> float:
    """Probability of at least one i -> j event in [t, t + delta]: 1 - exp(-integral of lambda_ij).

    Raises
    ------
    ValueError
        If ``delta <= 0`` or ``t`` precedes the start of the history window.
    """
    i, j = pair
    t, t_end = interval
    delta = t_end - t
    if not delta > 0:
        raise ValueError("interval must have positive length")
    if t < history.start:
        raise ValueError("interval starts before the history window")
    mask = (((history.sender == i) & (history.receiver == j)) | ((history.sender == j) & (history.receiver == i))) \
        & (history.time < t)
    sub = EventLog(history.sender[mask], history.receiver[mask], history.time[mask], history.n,
                   history.horizon_T, history.start, history.allow_self_edges)
    L = link_compensators(sub, params, z, t, delta)
    return float(-np.expm1(-L[i, j]))


@dataclass
class AUCResult:
    mean: float
    std: float
    aucs: np.ndarray
    skipped: int
    intervals: np.ndarray = field(repr=False)


def dynamic_link_auc(events: EventLog, params: SRParams, z: Membership, cfg: EvalConfig,
                     test_start: Optional[float] = None, test_end: Optional[float] = None) -> AUCResult:
    """Mean and std of the per-interval AUC of link probabilities.

    ``events`` holds training history and test events.  Interval starts are
    drawn uniformly from ``[test_start, test_end - delta]`` (defaults: the
    log's window).  Every candidate ordered pair i != j (unless self edges
    are allowed) is scored; the label is whether i -> j has an event in the
    interval.  Intervals whose labels are all equal are skipped and counted.
    """
    t_lo = events.start if test_start is None else float(test_start)
    t_hi = events.horizon_T if test_end is None else float(test_end)
    if t_hi - cfg.delta < t_lo:
        raise ValueError("test window shorter than delta")
    rng = np.random.default_rng(cfg.seed)
    n = events.n
    senders = np.asarray(cfg.candidate_senders) if cfg.candidate_senders is not None else None
    receivers = np.asarray(cfg.candidate_receivers) if cfg.candidate_receivers is not None else None
    if n > LARGE_GRAPH_N:
        if senders is None:
            senders = np.sort(rng.choice(n, CANDIDATE_SAMPLE, replace=False))
        if receivers is None:
            receivers = np.sort(rng.choice(n, CANDIDATE_SAMPLE, replace=False))
    senders = np.arange(n) if senders is None else senders
    receivers = np.arange(n) if receivers is None else receivers
    starts = rng.uniform(t_lo, t_hi - cfg.delta, size=cfg.n_intervals)
    index = index_log(events)
    keep = np.ones((senders.size, receivers.size), bool)
    if not events.allow_self_edges:
        keep &= senders[:, None] != receivers[None, :]
    aucs, skipped = [], 0
    for t in starts:
        L = link_compensators(events, params, z, t, cfg.delta, index)[np.ix_(senders, receivers)]
        inside = (events.time >= t) & (events.time <= t + cfg.delta)
        Y = np.zeros((n, n), bool)
        Y[events.sender[inside], events.receiver[inside]] = True
        y = Y[np.ix_(senders, receivers)][keep]
        if y.all() or not y.any():
            skipped += 1
            continue
        # -expm1 keeps small integrated intensities distinct
        aucs.append(roc_auc_score(y, -np.expm1(-L[keep])))
    aucs = np.array(aucs)
    mean = float(aucs.mean()) if aucs.size else float("nan")
    std = float(aucs.std()) if aucs.size else float("nan")
    return AUCResult(mean, std, aucs, skipped, starts)


def auc_score(labels, scores) -> float:
    """Rank AUC with ties counted as one half."""
    return float(roc_auc_score(np.asarray(labels, bool), np.asarray(scores, float)))


# ---------------------------------------------------------------------------
# Trend summaries
# ---------------------------------------------------------------------------

GRID_AXES = ("n", "K", "T", "s")


@dataclass
class TrendSummary:
    table: pd.DataFrame
    verdicts: Dict[str, Dict[str, bool]]
    details: List[dict] = field(default_factory=list)


def _steps_ok(means, ses, direction, strict):
    ok = True
    for k in range(len(means) - 1):
        diff = means[k + 1] - means[k]
        slack = np.hypot(ses[k], ses[k + 1])
        if direction == "increasing":
            ok &= diff > 0 if strict else diff >= -slack
        else:
            ok &= diff < 0 if strict else diff <= slack
    return bool(ok)


def monotone_within_se(means, ses, direction: str = "increasing", strict: bool = False) -> bool:
    """Check consecutive grid points for monotonicity.

    Non-strict checks allow each step to go the wrong way by at most the
    standard error of the difference (sqrt(se_k^2 + se_{k+1}^2)).  Strict
    checks require the means themselves to move the right way.
    """
    return _steps_ok(list(means), list(ses), direction, strict)


def trend_diagnostics(results, metrics: Dict[str, str] = None, mu_max: Optional[float] = None) -> TrendSummary:
    """Summarize replicate results over a grid and judge monotone trends.

    Parameters
    ----------
    results : DataFrame or list of dicts
        One row per replicate with grid columns among (n, K, T, s) and metric
        columns (e.g. ``ari``, ``spectral_error``).
    metrics : dict
        Metric name to expected direction, ``'increasing'`` or
        ``'decreasing'`` along every varied axis.  Defaults to ARI
        increasing and spectral error increasing.
    mu_max : float, optional
        Adds the bound proxy ``K^2 log n log T / (n T mu_max)`` per grid point.

    Returns
    -------
    TrendSummary
        ``table`` has mean, se and count per grid point; ``verdicts[metric][axis]``
        is True when the trend holds (within one SE) along that axis for
        every setting of the other axes.  With a single grid point there are
        no verdicts.
    """
    df = pd.DataFrame(results)
    metrics = metrics or {"ari": "increasing", "spectral_error": "increasing"}
    metrics = {m: d for m, d in metrics.items() if m in df.columns}
    axes = [a for a in GRID_AXES if a in df.columns]
    g = df.groupby(axes)
    table = g[list(metrics)].agg(["mean", "sem", "count"])
    table.columns = [f"{m}_{s}" for m, s in table.columns]
    table = table.reset_index()
    if mu_max is not None and {"n", "K", "T"} <= set(table.columns):
        table["bound_proxy"] = (table["K"] ** 2 * np.log(table["n"]) * np.log(table["T"])
                                / (table["n"] * table["T"] * mu_max))
    verdicts: Dict[str, Dict[str, bool]] = {m: {} for m in metrics}
    details = []
    if len(table) < 2:
        return TrendSummary(table, {}, details)
    for axis in axes:
        if table[axis].nunique() < 2:
            continue
        others = [a for a in axes if a != axis]
        groups = table.groupby(others) if others else [((), table)]
        for m, direction in metrics.items():
            ok = True
            for key, sub in groups:
                sub = sub.sort_values(axis)
                means = sub[f"{m}_mean"].to_numpy()
                ses = np.nan_to_num(sub[f"{m}_sem"].to_numpy())
                res = monotone_within_se(means, ses, direction)
                details.append({"metric": m, "axis": axis, "fixed": key, "ok": res})
                ok &= res
            verdicts[m][axis] = bool(ok)
    return TrendSummary(table, verdicts, details)
