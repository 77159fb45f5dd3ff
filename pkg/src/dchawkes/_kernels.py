# Compiled inner loops: Ogata thinning samplers and the dyad log-likelihood.
#
# Every sampler uses the fact that with exponential kernels the intensity only
# decays between events, so the intensity right after the last event (or
# candidate) bounds it until the next one.
import numpy as np
from numba import njit

N_TYPES = 6


@njit(cache=True)
def _grow(a, size):
    out = np.empty(max(2 * a.size, size), a.dtype)
    out[: a.size] = a
    return out


@njit(cache=True)
def simulate_dyads(rng, t_end, burn, loop, mu0, mu1, an0, an1, ar0, ar1, bn0, bn1, br0, br1):
    """Bivariate SR processes, one per dyad.

    Direction 0 is i->j, direction 1 is j->i.  Direction d feels its own
    events through (an_d, bn_d) and the other direction through (ar_d, br_d).
    A loop dyad (i == j) has a single direction fed by both kernels.
    Returns (dyad index, direction, time), times in [0, t_end], after
    discarding a burn-in of length ``burn``.
    """
    cap = 1024
    out_d = np.empty(cap, np.int64)
    out_k = np.empty(cap, np.int64)
    out_t = np.empty(cap, np.float64)
    m = 0
    horizon = t_end + burn
    for q in range(mu0.size):
        s0n = 0.0  # sum over own events, decay bn0
        s0r = 0.0  # sum over reverse events, decay br0
        s1n = 0.0
        s1r = 0.0
        c0n = an0[q] * bn0[q]
        c0r = ar0[q] * br0[q]
        c1n = an1[q] * bn1[q]
        c1r = ar1[q] * br1[q]
        m1 = 0.0 if loop[q] else mu1[q]
        t = 0.0
        while True:
            lam0 = mu0[q] + c0n * s0n + c0r * s0r
            lam1 = 0.0 if loop[q] else m1 + c1n * s1n + c1r * s1r
            bound = lam0 + lam1
            if bound <= 0.0:
                break
            dt = rng.standard_exponential() / bound
            t += dt
            if t > horizon:
                break
            s0n *= np.exp(-bn0[q] * dt)
            s0r *= np.exp(-br0[q] * dt)
            s1n *= np.exp(-bn1[q] * dt)
            s1r *= np.exp(-br1[q] * dt)
            lam0 = mu0[q] + c0n * s0n + c0r * s0r
            lam1 = 0.0 if loop[q] else m1 + c1n * s1n + c1r * s1r
            u = rng.random() * bound
            if u >= lam0 + lam1:
                continue
            if u < lam0:
                k = 0
                s0n += 1.0
                if loop[q]:
                    s0r += 1.0
                else:
                    s1r += 1.0
            else:
                k = 1
                s1n += 1.0
                s0r += 1.0
            if t >= burn:
                if m == out_t.size:
                    out_d = _grow(out_d, m + 1)
                    out_k = _grow(out_k, m + 1)
                    out_t = _grow(out_t, m + 1)
                out_d[m] = q
                out_k[m] = k
                out_t[m] = t - burn
                m += 1
    return out_d[:m], out_k[:m], out_t[:m]


@njit(cache=True)
def simulate_univariate(rng, t_end, burn, mu, alpha, beta):
    """Univariate exponential Hawkes process on [0, t_end] after burn-in."""
    cap = 1024
    out = np.empty(cap, np.float64)
    m = 0
    horizon = t_end + burn
    s = 0.0
    c = alpha * beta
    t = 0.0
    while True:
        bound = mu + c * s
        if bound <= 0.0:
            break
        dt = rng.standard_exponential() / bound
        t += dt
        if t > horizon:
            break
        s *= np.exp(-beta * dt)
        if rng.random() * bound < mu + c * s:
            s += 1.0
            if t >= burn:
                if m == out.size:
                    out = _grow(out, m + 1)
                out[m] = t - burn
                m += 1
    return out[:m]


@njit(cache=True)
def simulate_block_pair(rng, t_end, burn, mu, direction, coef, decay, ptr, tgt, kind):
    """Multivariate Hawkes process over the pairs of one block pair.

    Parameters
    ----------
    mu : (P,) baselines.
    direction : (P,) 0/1 direction of each pair.
    coef, decay : (2, 6) alpha*beta and beta for each (target direction, type).
    ptr, tgt, kind : CSR adjacency; an event on pair p adds one unit to the
        type-``kind`` accumulator of every ``tgt`` in ``ptr[p]:ptr[p+1]``.

    Per-type group totals let the rejection step run in O(1); the O(P) scan
    is only done when a candidate is accepted.
    """
    P = mu.size
    S = np.zeros((N_TYPES, P))
    G = np.zeros((2, N_TYPES))
    lam = np.empty(P)
    mu_tot = mu.sum()
    cap = 1024
    out_p = np.empty(cap, np.int64)
    out_t = np.empty(cap, np.float64)
    m = 0
    horizon = t_end + burn
    t = 0.0
    t_ref = 0.0  # time at which S is current
    while True:
        bound = mu_tot
        for d in range(2):
            for k in range(N_TYPES):
                bound += coef[d, k] * G[d, k]
        if bound <= 0.0:
            break
        dt = rng.standard_exponential() / bound
        t += dt
        if t > horizon:
            break
        total = mu_tot
        for d in range(2):
            for k in range(N_TYPES):
                G[d, k] *= np.exp(-decay[d, k] * dt)
                total += coef[d, k] * G[d, k]
        u = rng.random() * bound
        if u >= total:
            continue
        # accepted: bring every accumulator to t and pick the pair
        acc = 0.0
        for p in range(P):
            d = direction[p]
            v = mu[p]
            for k in range(N_TYPES):
                S[k, p] *= np.exp(-decay[d, k] * (t - t_ref))
                v += coef[d, k] * S[k, p]
            lam[p] = v
            acc += v
        t_ref = t
        u2 = rng.random() * acc
        chosen = P - 1
        run = 0.0
        for p in range(P):
            run += lam[p]
            if u2 < run:
                chosen = p
                break
        while lam[chosen] <= 0.0 and chosen > 0:
            chosen -= 1
        # resync totals to the accumulators (removes rounding drift)
        G[:, :] = 0.0
        for p in range(P):
            for k in range(N_TYPES):
                G[direction[p], k] += S[k, p]
        for e in range(ptr[chosen], ptr[chosen + 1]):
            q = tgt[e]
            S[kind[e], q] += 1.0
            G[direction[q], kind[e]] += 1.0
        if t >= burn:
            if m == out_t.size:
                out_p = _grow(out_p, m + 1)
                out_t = _grow(out_t, m + 1)
            out_p[m] = chosen
            out_t[m] = t - burn
            m += 1
    return out_p[:m], out_t[:m]


@njit(cache=True)
def dyad_loglik(times, dirs, counted, seg, loop, mu0, mu1, an0, an1, ar0, ar1, bn0, bn1, br0, br1, t0, t1):
    """Per-dyad log-likelihood on [t0, t1], excluding the baseline compensator.

    Events of dyad q are ``times[seg[q]:seg[q+1]]`` (sorted) with direction
    ``dirs`` (0: i->j, 1: j->i).  Every event at or before t1 contributes to
    the excitation compensator over its part of the window; log-intensity
    terms are summed only where ``counted`` is set.  Events only excite
    strictly later ones: simultaneous events are held back and added together
    once time moves on.

    Returns ``(loglik, ok)`` arrays; ``ok`` is False where an event had zero
    intensity.
    """
    D = seg.size - 1
    out = np.zeros(D)
    ok = np.ones(D, np.bool_)
    for q in range(D):
        s0n = 0.0
        s0r = 0.0
        s1n = 0.0
        s1r = 0.0
        p0 = 0.0  # pending increments for events at t_cur
        p1 = 0.0
        t_cur = -np.inf
        c0n = an0[q] * bn0[q]
        c0r = ar0[q] * br0[q]
        c1n = an1[q] * bn1[q]
        c1r = ar1[q] * br1[q]
        total = 0.0
        for e in range(seg[q], seg[q + 1]):
            ts = times[e]
            if ts > t1:
                break
            if ts > t_cur:
                if t_cur > -np.inf:
                    if loop[q]:
                        s0n += p0
                        s0r += p0
                    else:
                        s0n += p0
                        s1r += p0
                        s1n += p1
                        s0r += p1
                    dt = ts - t_cur
                    s0n *= np.exp(-bn0[q] * dt)
                    s0r *= np.exp(-br0[q] * dt)
                    s1n *= np.exp(-bn1[q] * dt)
                    s1r *= np.exp(-br1[q] * dt)
                p0 = 0.0
                p1 = 0.0
                t_cur = ts
            d = dirs[e]
            if counted[e]:
                if d == 0 or loop[q]:
                    lam = mu0[q] + c0n * s0n + c0r * s0r
                else:
                    lam = mu1[q] + c1n * s1n + c1r * s1r
                if lam > 0.0:
                    total += np.log(lam)
                else:
                    ok[q] = False
                    total += -np.inf
            # compensator of the excitation this event adds inside the window
            lo = ts if ts > t0 else t0
            if loop[q]:
                total -= an0[q] * (np.exp(-bn0[q] * (lo - ts)) - np.exp(-bn0[q] * (t1 - ts)))
                total -= ar0[q] * (np.exp(-br0[q] * (lo - ts)) - np.exp(-br0[q] * (t1 - ts)))
                p0 += 1.0
            elif d == 0:
                total -= an0[q] * (np.exp(-bn0[q] * (lo - ts)) - np.exp(-bn0[q] * (t1 - ts)))
                total -= ar1[q] * (np.exp(-br1[q] * (lo - ts)) - np.exp(-br1[q] * (t1 - ts)))
                p0 += 1.0
            else:
                total -= an1[q] * (np.exp(-bn1[q] * (lo - ts)) - np.exp(-bn1[q] * (t1 - ts)))
                total -= ar0[q] * (np.exp(-br0[q] * (lo - ts)) - np.exp(-br0[q] * (t1 - ts)))
                p1 += 1.0
        out[q] = total
    return out, ok


@njit(cache=True)
def dyad_excitation_at(times, dirs, seg, loop, an0, an1, ar0, ar1, bn0, bn1, br0, br1, t, delta):
    """Integral over [t, t+delta] of the excitation driven by events strictly before t.

    Returns a (D, 2) array: column 0 for direction i->j, column 1 for j->i.
    """
    D = seg.size - 1
    out = np.zeros((D, 2))
    for q in range(D):
        for e in range(seg[q], seg[q + 1]):
            ts = times[e]
            if ts >= t:
                break
            a = t - ts
            b = t + delta - ts
            if loop[q]:
                out[q, 0] += an0[q] * (np.exp(-bn0[q] * a) - np.exp(-bn0[q] * b))
                out[q, 0] += ar0[q] * (np.exp(-br0[q] * a) - np.exp(-br0[q] * b))
            elif dirs[e] == 0:
                out[q, 0] += an0[q] * (np.exp(-bn0[q] * a) - np.exp(-bn0[q] * b))
                out[q, 1] += ar1[q] * (np.exp(-br1[q] * a) - np.exp(-br1[q] * b))
            else:
                out[q, 1] += an1[q] * (np.exp(-bn1[q] * a) - np.exp(-bn1[q] * b))
                out[q, 0] += ar0[q] * (np.exp(-br0[q] * a) - np.exp(-br0[q] * b))
    return out
