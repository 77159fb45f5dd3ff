"""Exact sampling of event logs by Ogata thinning.

Randomness: each replicate and each block pair get their own Philox stream,
keyed ``SeedSequence([seed, replicate, block_pair_index])`` with block pairs
numbered in the canonical (a <= b) order.  Within a block pair the dyads (or
pairs) are simulated sequentially in the canonical pair order, so a given
seed always produces the same log.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import _kernels
from .events import EventLog
from .model import (
    AnyParams, BHMParams, CHIPParams, EXCITATION_TYPES, MULCHParams, Membership, SRParams,
    _pattern_edges, build_excitation, params_to_dict,
)

RNG_NAME = "Philox"


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``burn_in`` simulates that much extra time first and drops it, so the log
    starts closer to stationarity.  The default 0 starts from an empty
    history.
    """

    seed: int = 0
    replicates: int = 1
    allow_self_edges: bool = False
    burn_in: float = 0.0

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def block_pair_rng(seed: int, replicate: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(replicate), int(index)])))


def _check(params: AnyParams, z: Membership, T: float, self_edges: bool):
    if not T > 0:
        raise ValueError("T must be positive")
    op = build_excitation(params, z, self_edges)
    rho = op.spectral_radius()
    if rho >= 1.0:
        raise ValueError(f"parameters are unstable: spectral radius {rho:.6g} >= 1")
    return op


def _finish(parts, params, z, T, cfg, replicate) -> EventLog:
    if parts:
        s = np.concatenate([p[0] for p in parts])
        r = np.concatenate([p[1] for p in parts])
        t = np.concatenate([p[2] for p in parts])
    else:
        s = r = np.zeros(0, np.int64)
        t = np.zeros(0)
    order = np.argsort(t, kind="stable")
    meta = {
        "model": params.model, "seed": int(cfg.seed), "replicate": int(replicate), "rng": RNG_NAME,
        "T": float(T), "burn_in": float(cfg.burn_in), "z": z.z.tolist(), "params": params_to_dict(params),
    }
    return EventLog(s[order], r[order], t[order], z.n, T, 0.0, cfg.allow_self_edges, meta)


def _sr_like(params: SRParams, z, T, cfg, replicate):
    op = _check(params, z, T, cfg.allow_self_edges)
    parts = []
    for idx, (a, b) in enumerate(op.block_pairs()):
        nodes_a, nodes_b = z.members(a), z.members(b)
        if a == b:
            ii, jj = np.triu_indices(nodes_a.size, 0 if cfg.allow_self_edges else 1)
            u, v = nodes_a[ii], nodes_a[jj]
        else:
            ii, jj = np.meshgrid(np.arange(nodes_a.size), np.arange(nodes_b.size), indexing="ij")
            u, v = nodes_a[ii.ravel()], nodes_b[jj.ravel()]
        if u.size == 0:
            continue
        D = u.size
        f = lambda A, x, y: np.full(D, A[x, y])
        loop = u == v
        rng = block_pair_rng(cfg.seed, replicate, idx)
        q, k, t = _kernels.simulate_dyads(
            rng, float(T), float(cfg.burn_in), loop,
            f(params.M, a, b), f(params.M, b, a), f(params.alpha_n, a, b), f(params.alpha_n, b, a),
            f(params.alpha_r, a, b), f(params.alpha_r, b, a), f(params.beta_n, a, b), f(params.beta_n, b, a),
            f(params.beta_r, a, b), f(params.beta_r, b, a),
        )
        parts.append((np.where(k == 0, u[q], v[q]), np.where(k == 0, v[q], u[q]), t))
    return _finish(parts, params, z, T, cfg, replicate)


def simulate_sr(params: SRParams, z: Membership, T: float, cfg: SimConfig = SimConfig(), replicate: int = 0) -> EventLog:
    """One replicate of the SR model: an independent bivariate Hawkes process per dyad.

    Raises
    ------
    ValueError
        If ``T <= 0`` or some block pair has spectral radius >= 1.
    """
    return _sr_like(params, z, T, cfg, replicate)


def simulate_chip(params: CHIPParams, z: Membership, T: float, cfg: SimConfig = SimConfig(), replicate: int = 0) -> EventLog:
    """One replicate of CHIP: an independent univariate Hawkes process per directed pair."""
    log = _sr_like(params.as_sr(), z, T, cfg, replicate)
    log.metadata.update(model="chip", params=params_to_dict(params))
    return log


def simulate_bhm(params: BHMParams, z: Membership, T: float, cfg: SimConfig = SimConfig(), replicate: int = 0) -> EventLog:
    """One replicate of BHM.

    Each ordered block pair runs a univariate process with baseline
    ``P_ab * M[a,b]`` (P_ab ordered node pairs) and each of its events is
    given to a node pair drawn uniformly at random.
    """
    op = _check(params, z, T, cfg.allow_self_edges)
    parts = []
    for idx, (a, b) in enumerate(op.block_pairs()):
        block = op.blocks[(a, b)]
        P = block.pairs_per_direction()
        if P == 0:
            continue
        rng = block_pair_rng(cfg.seed, replicate, idx)
        pairs = block.pairs()
        dirs = [(0, a, b)] if a == b else [(0, a, b), (1, b, a)]
        for d, s_blk, r_blk in dirs:
            t = _kernels.simulate_univariate(rng, float(T), float(cfg.burn_in), P * params.M[s_blk, r_blk],
                                             params.alpha_n[s_blk, r_blk], params.beta_n[s_blk, r_blk])
            pick = d * P + rng.integers(0, P, size=t.size)
            parts.append((pairs[pick, 0], pairs[pick, 1], t))
    return _finish(parts, params, z, T, cfg, replicate)


def _mulch_adjacency(block, P):
    """CSR map from each source pair to (target, type) of the pairs it excites."""
    src_all, tgt_all, kind_all = [], [], []
    for term in block.terms:
        if term.alpha == 0:
            continue
        target = 0 if block.diagonal else term.target
        src, tg = _pattern_edges(block.n_a, block.n_b, block.diagonal, block.self_edges, term.pattern, target)
        src_all.append(src)
        tgt_all.append(tg)
        kind_all.append(np.full(src.size, EXCITATION_TYPES.index(term.pattern)))
    if not src_all:
        return np.zeros(P + 1, np.int64), np.zeros(0, np.int64), np.zeros(0, np.int64)
    src = np.concatenate(src_all)
    tgt = np.concatenate(tgt_all)
    kind = np.concatenate(kind_all)
    order = np.lexsort((kind, tgt, src))
    ptr = np.zeros(P + 1, np.int64)
    np.add.at(ptr, src + 1, 1)
    return np.cumsum(ptr), np.ascontiguousarray(tgt[order], np.int64), np.ascontiguousarray(kind[order], np.int64)


def simulate_mulch(params: MULCHParams, z: Membership, T: float, cfg: SimConfig = SimConfig(), replicate: int = 0) -> EventLog:
    """One replicate of MULCH: a multivariate Hawkes process per block pair."""
    if cfg.allow_self_edges:
        raise ValueError("MULCH excitation is defined without self edges")
    op = _check(params, z, T, False)
    parts = []
    for idx, (a, b) in enumerate(op.block_pairs()):
        block = op.blocks[(a, b)]
        P = block.n_pairs
        if P == 0:
            continue
        _, _, direction = block.local_pairs()
        pairs = block.pairs()
        dirs = [(a, b)] if a == b else [(a, b), (b, a)]
        coef = np.zeros((2, 6))
        decay = np.ones((2, 6))
        mu = np.empty(P)
        for d, (s_blk, r_blk) in enumerate(dirs):
            coef[d] = params.alpha[s_blk, r_blk] * params.beta[s_blk, r_blk]
            decay[d] = params.beta[s_blk, r_blk]
            mu[direction == d] = params.mu[s_blk, r_blk]
        ptr, tgt, kind = _mulch_adjacency(block, P)
        rng = block_pair_rng(cfg.seed, replicate, idx)
        p, t = _kernels.simulate_block_pair(rng, float(T), float(cfg.burn_in), mu,
                                            np.ascontiguousarray(direction, np.int64), coef, decay, ptr, tgt, kind)
        parts.append((pairs[p, 0], pairs[p, 1], t))
    return _finish(parts, params, z, T, cfg, replicate)


_DISPATCH = {"sr": simulate_sr, "chip": simulate_chip, "bhm": simulate_bhm, "mulch": simulate_mulch}


def simulate(params: AnyParams, z: Membership, T: float, cfg: SimConfig = SimConfig(), replicate: int = 0) -> EventLog:
    """Dispatch on the parameter type."""
    return _DISPATCH[params.model](params, z, T, cfg, replicate)


def simulate_replicates(params: AnyParams, z: Membership, T: float, cfg: SimConfig) -> Iterator[EventLog]:
    for rep in range(cfg.replicates):
        yield simulate(params, z, T, cfg, rep)
