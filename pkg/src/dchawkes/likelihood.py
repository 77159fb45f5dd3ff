"""SR log-likelihood with exponential-kernel recursions.

Events are grouped by unordered dyad {u, v} (u <= v).  Direction 0 of a dyad
is u -> v and direction 1 is v -> u, so direction 0 uses the parameters of
block pair (z_u, z_v).  Under the SR model dyads are independent, and the
log-likelihood over a window [t0, t1] is::

    -(t1 - t0) * sum over allowed ordered pairs of M[z_i, z_j]
    + sum over dyads with events of (log-intensity terms - excitation compensator)
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import _kernels
from .events import EventLog
from .model import Membership, SRParams


@dataclass(frozen=True)
class DyadIndex:
    """Events of a log regrouped by dyad (only dyads with at least one event)."""

    n: int
    u: np.ndarray          # (D,) first node of each dyad
    v: np.ndarray          # (D,) second node, u <= v
    seg: np.ndarray        # (D+1,) event offsets
    times: np.ndarray      # event times, sorted within each dyad
    dirs: np.ndarray       # 0 for u -> v, 1 for v -> u
    counted: np.ndarray    # whether the event adds a log-intensity term
    event_order: np.ndarray  # position of each regrouped event in the source arrays

    @property
    def n_dyads(self) -> int:
        return self.u.size

    @property
    def loop(self) -> np.ndarray:
        return self.u == self.v

    def subset(self, dyads: np.ndarray) -> "DyadIndex":
        """Restrict to some dyads (given by index), keeping their order."""
        dyads = np.asarray(dyads, dtype=np.int64)
        lengths = self.seg[dyads + 1] - self.seg[dyads]
        seg = np.concatenate([[0], np.cumsum(lengths)])
        idx = np.concatenate([np.arange(self.seg[d], self.seg[d + 1]) for d in dyads]) if dyads.size else np.zeros(0, np.int64)
        return DyadIndex(self.n, self.u[dyads], self.v[dyads], seg, self.times[idx], self.dirs[idx],
                         self.counted[idx], self.event_order[idx])


def dyad_index(sender, receiver, time, n: int, counted=None) -> DyadIndex:
    sender = np.asarray(sender, dtype=np.int64)
    receiver = np.asarray(receiver, dtype=np.int64)
    time = np.asarray(time, dtype=float)
    counted = np.ones(time.size, dtype=np.bool_) if counted is None else np.asarray(counted, dtype=np.bool_)
    u = np.minimum(sender, receiver)
    v = np.maximum(sender, receiver)
    dirs = (sender != u).astype(np.int64)
    key = u * n + v
    # stable: among simultaneous events the input order is kept
    order = np.lexsort((np.arange(time.size), time, key))
    key_s = key[order]
    if key_s.size:
        starts = np.flatnonzero(np.concatenate([[True], key_s[1:] != key_s[:-1]]))
    else:
        starts = np.zeros(0, np.int64)
    seg = np.concatenate([starts, [key_s.size]]).astype(np.int64)
    return DyadIndex(n, u[order][starts], v[order][starts], seg, np.ascontiguousarray(time[order]),
                     np.ascontiguousarray(dirs[order]), np.ascontiguousarray(counted[order]), order)


def index_log(events: EventLog, counted=None) -> DyadIndex:
    return dyad_index(events.sender, events.receiver, events.time, events.n, counted)


def dyad_params(params: SRParams, zu: np.ndarray, zv: np.ndarray):
    """Per-dyad parameter arrays in kernel argument order.

    ``zu``/``zv`` are the blocks of the dyad's first and second node.
    """
    return (
        params.M[zu, zv], params.M[zv, zu],
        params.alpha_n[zu, zv], params.alpha_n[zv, zu],
        params.alpha_r[zu, zv], params.alpha_r[zv, zu],
        params.beta_n[zu, zv], params.beta_n[zv, zu],
        params.beta_r[zu, zv], params.beta_r[zv, zu],
    )


def dyad_terms(index: DyadIndex, zu, zv, params: SRParams, t0: float, t1: float) -> np.ndarray:
    """Log-intensity minus excitation compensator, per dyad in ``index``.

    Raises
    ------
    FloatingPointError
        If some counted event has zero intensity.
    """
    if index.n_dyads == 0:
        return np.zeros(0)
    vals, ok = _kernels.dyad_loglik(index.times, index.dirs, index.counted, index.seg, index.loop,
                                    *[np.ascontiguousarray(a, dtype=float) for a in dyad_params(params, zu, zv)],
                                    float(t0), float(t1))
    if not ok.all():
        bad = np.flatnonzero(~ok)[0]
        raise FloatingPointError(f"zero intensity at an event of dyad ({index.u[bad]}, {index.v[bad]})")
    return vals


def baseline_mass(params: SRParams, z: Membership, allow_self_edges: bool) -> float:
    """Sum of M[z_i, z_j] over all allowed ordered pairs."""
    sizes = z.sizes.astype(float)
    total = float(sizes @ params.M @ sizes)
    if not allow_self_edges:
        total -= float(np.diag(params.M) @ sizes)
    return total


def sr_loglik(events: EventLog, z: Membership, params: SRParams, window: Optional[Tuple[float, float]] = None,
              counted=None, per_dyad: bool = False, allow_self_edges: Optional[bool] = None):
    """Exact SR log-likelihood over a window.

    Parameters
    ----------
    events : EventLog
        Events up to the window end.  Events before ``t0`` only act as
        history (their excitation still enters the compensator inside the
        window); events after ``t1`` are ignored.
    window : (t0, t1), optional
        Defaults to ``(events.start, events.horizon_T)``.
    counted : bool array, optional
        Which events contribute log-intensity terms.  Defaults to the events
        with ``t0 <= t <= t1``.
    per_dyad : bool
        Also return the dyad index and the per-dyad event terms (these sum,
        with the baseline term, to the total).

    Raises
    ------
    FloatingPointError
        If an observed event has zero intensity.
    """
    t0, t1 = (events.start, events.horizon_T) if window is None else map(float, window)
    if counted is None:
        counted = (events.time >= t0) & (events.time <= t1)
    self_edges = events.allow_self_edges if allow_self_edges is None else allow_self_edges
    index = index_log(events, counted)
    zz = z.z
    terms = dyad_terms(index, zz[index.u], zz[index.v], params, t0, t1)
    total = -(t1 - t0) * baseline_mass(params, z, self_edges) + float(terms.sum())
    if per_dyad:
        return total, index, terms
    return total


def sr_compensator(events: EventLog, z: Membership, params: SRParams, i: int, j: int, t0: float, t1: float) -> float:
    """Integral of lambda_{ij} over [t0, t1] given every event of the log before t1."""
    zz = z.z
    a, b = zz[i], zz[j]
    total = params.M[a, b] * (t1 - t0)
    own = events.time[(events.sender == i) & (events.receiver == j)]
    rev = events.time[(events.sender == j) & (events.receiver == i)]
    for ts_all, alpha, beta in ((own, params.alpha_n[a, b], params.beta_n[a, b]),
                                (rev, params.alpha_r[a, b], params.beta_r[a, b])):
        ts = ts_all[ts_all <= t1]
        lo = np.maximum(ts, t0)
        total += alpha * np.sum(np.exp(-beta * (lo - ts)) - np.exp(-beta * (t1 - ts)))
    return float(total)


def sr_intensity(events: EventLog, z: Membership, params: SRParams, i: int, j: int, t) -> np.ndarray:
    """lambda_{ij}(t) from events strictly before t (vectorized over t; slow reference)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    zz = z.z
    a, b = zz[i], zz[j]
    own = events.time[(events.sender == i) & (events.receiver == j)]
    rev = events.time[(events.sender == j) & (events.receiver == i)]
    out = np.full(t.shape, params.M[a, b])
    for ts, alpha, beta in ((own, params.alpha_n[a, b], params.beta_n[a, b]),
                            (rev, params.alpha_r[a, b], params.beta_r[a, b])):
        dt = t[:, None] - ts[None, :]
        out += alpha * beta * np.where(dt > 0, np.exp(-beta * np.where(dt > 0, dt, 0.0)), 0.0).sum(axis=1)
    return out
