"""Compiled inner loops shared by the samplers and planners.

A posterior is carried as a log "state" vector of length H = n + 1:
``state[0]`` is the summed log likelihood of "no target" and
``state[h]`` (h >= 1) is ``log w_h`` plus the summed log likelihood of
hypothesis h. The existence prior enters separately as ``log_r`` and
``log_1mr`` so that r = 0 and r = 1 stay representable.
"""
import math

import numpy as np
from numba import njit

NEG_INF = -np.inf
REL_TOL = 1e-9
ABS_TOL = 1e-12


@njit(cache=True)
def strictly_less(a, b):
    """``a < b`` beyond a relative tolerance; near-ties count as not less."""
    return a < b - (REL_TOL * max(abs(a), abs(b)) + ABS_TOL)


@njit(cache=True)
def _safe_log(x):
    if x <= 0.0:
        return NEG_INF
    return math.log(x)


@njit(cache=True)
def posterior_probs(state, log_r, log_1mr):
    H = state.shape[0]
    a = np.empty(H)
    a[0] = log_1mr + state[0]
    top = a[0]
    for h in range(1, H):
        a[h] = log_r + state[h]
        if a[h] > top:
            top = a[h]
    out = np.zeros(H)
    if top == NEG_INF:
        out[:] = np.nan
        return out
    z = 0.0
    for h in range(H):
        if a[h] != NEG_INF:
            out[h] = math.exp(a[h] - top)
            z += out[h]
    for h in range(H):
        out[h] /= z
    return out


@njit(cache=True)
def branch_mms(state, log_r, log_1mr, prior_w, pts, c2):
    """Both candidate costs of one posterior.

    Returns (cost_phi, cost_est, p0, xe, ye, spread) where ``spread`` is the
    untruncated posterior mass-weighted squared distance to the estimate,
    summed over target hypotheses only. NaNs flag a posterior with no mass.
    """
    H = state.shape[0]
    mh = NEG_INF
    for h in range(1, H):
        if state[h] > mh:
            mh = state[h]
    a0 = log_1mr + state[0]
    ah = log_r + mh
    top = a0 if a0 > ah else ah
    if top == NEG_INF:
        return np.nan, np.nan, np.nan, np.nan, np.nan, np.nan
    e0 = math.exp(a0 - top) if a0 != NEG_INF else 0.0

    sw = 0.0
    xe = 0.0
    ye = 0.0
    w = np.empty(H - 1)
    if mh == NEG_INF:
        for h in range(1, H):
            w[h - 1] = prior_w[h - 1]
    else:
        for h in range(1, H):
            w[h - 1] = math.exp(state[h] - mh) if state[h] != NEG_INF else 0.0
    for k in range(H - 1):
        sw += w[k]
        xe += w[k] * pts[k, 0]
        ye += w[k] * pts[k, 1]
    xe /= sw
    ye /= sw
    eq = math.exp(ah - top) * sw if (ah != NEG_INF and mh != NEG_INF) else 0.0
    z = e0 + eq
    p0 = e0 / z
    q = eq / z

    loc = 0.0
    spread = 0.0
    for k in range(H - 1):
        if w[k] == 0.0:
            continue
        dx = pts[k, 0] - xe
        dy = pts[k, 1] - ye
        d2 = dx * dx + dy * dy
        spread += w[k] * d2
        loc += w[k] * (d2 if d2 <= c2 else c2)
    loc /= sw
    spread /= sw
    cost_phi = 0.5 * c2 * q
    cost_est = 0.5 * c2 * p0 + q * loc
    return cost_phi, cost_est, p0, xe, ye, q * spread


@njit(cache=True)
def batch_mms(states, log_r, log_1mr, prior_w, pts, c2):
    """MMS cost, estimate and spread for each row of ``states``."""
    nb = states.shape[0]
    cost = np.empty(nb)
    xe = np.empty(nb)
    ye = np.empty(nb)
    spread = np.empty(nb)
    for b in range(nb):
        cp, ce, _, x, y, sp = branch_mms(states[b], log_r, log_1mr, prior_w, pts, c2)
        cost[b] = cp if cp <= ce else ce
        xe[b] = x
        ye[b] = y
        spread[b] = sp
    return cost, xe, ye, spread


@njit(cache=True)
def scan_loglik(zs, nz, pts, infov, pd, lam, inv_cov, log_norm):
    """Log ELPF likelihoods for a batch of padded scans.

    ``zs`` has shape (M, K, 2) with ``nz[m]`` valid rows; returns (M, H).
    """
    M = zs.shape[0]
    H = pts.shape[0] + 1
    out = np.zeros((M, H))
    log_lam = _safe_log(lam)
    log_lam_miss = _safe_log(lam * (1.0 - pd))
    log_pd = _safe_log(pd)
    log_miss = _safe_log(1.0 - pd)
    for m in range(M):
        n = nz[m]
        if n == 0:
            for h in range(1, H):
                if infov[h]:
                    out[m, h] = log_miss
            continue
        out[m, 0] = log_lam
        for h in range(1, H):
            if not infov[h]:
                out[m, h] = log_lam
                continue
            # log-sum-exp over the clutter term and each measurement's density
            terms = np.empty(n + 1)
            terms[0] = log_lam_miss
            top = terms[0]
            for k in range(n):
                dx = zs[m, k, 0] - pts[h - 1, 0]
                dy = zs[m, k, 1] - pts[h - 1, 1]
                maha = dx * (inv_cov[0, 0] * dx + inv_cov[0, 1] * dy) \
                    + dy * (inv_cov[1, 0] * dx + inv_cov[1, 1] * dy)
                terms[k + 1] = log_pd + log_norm - 0.5 * maha
                if terms[k + 1] > top:
                    top = terms[k + 1]
            if top == NEG_INF:
                out[m, h] = NEG_INF
                continue
            s = 0.0
            for k in range(n + 1):
                if terms[k] != NEG_INF:
                    s += math.exp(terms[k] - top)
            out[m, h] = top + math.log(s)
    return out


@njit(cache=True)
def expand(states, bi, bj, bp, bs, table, infov, pd):
    """Split every branch on the detection flag of the next scan.

    ``table[i, j, f]`` is the log-likelihood row added when the scan was
    generated by truth ``i`` with noise sample ``j`` and detection flag ``f``.
    Zero-probability children are dropped.
    """
    nb, H = states.shape
    count = 0
    for b in range(nb):
        if infov[bi[b]]:
            count += (1 if pd > 0.0 else 0) + (1 if pd < 1.0 else 0)
        else:
            count += 1
    out = np.empty((count, H))
    oi = np.empty(count, dtype=np.int64)
    oj = np.empty(count, dtype=np.int64)
    op = np.empty(count)
    os_ = np.empty(count, dtype=np.int64)
    c = 0
    for b in range(nb):
        i = bi[b]
        j = bj[b]
        for f in range(2):
            if infov[i]:
                pf = pd if f == 1 else 1.0 - pd
            else:
                pf = 0.0 if f == 1 else 1.0
            if pf <= 0.0:
                continue
            for h in range(H):
                out[c, h] = states[b, h] + table[i, j, f, h]
            oi[c] = i
            oj[c] = j
            op[c] = bp[b] * pf
            os_[c] = bs[b] * 2 + f
            c += 1
    return out, oi, oj, op, os_


@njit(cache=True)
def score(states, bi, bj, bp, tw, mw, pts, log_r, log_1mr, prior_w, c2, n_samples):
    """Per-sample sums of weighted MMS costs and truth-referenced squared errors.

    Returns (amms_j, mse_j); summing over j gives the estimates.
    """
    amms = np.zeros(n_samples)
    mse = np.zeros(n_samples)
    for b in range(states.shape[0]):
        cp, ce, _, xe, ye, _ = branch_mms(states[b], log_r, log_1mr, prior_w, pts, c2)
        if cp != cp:
            amms[:] = np.nan
            return amms, mse
        i = bi[b]
        amms[bj[b]] += tw[i] * bp[b] * (cp if cp <= ce else ce)
        if i >= 1:
            dx = xe - pts[i - 1, 0]
            dy = ye - pts[i - 1, 1]
            mse[bj[b]] += mw[i] * bp[b] * (dx * dx + dy * dy)
    return amms, mse


UNDERFLOW = 1e-200


@njit(cache=True)
def _child_mms_scaled(ep, er, pts, c2):
    """Child costs from parent masses ``ep`` times scaled likelihoods ``er``.

    Returns (mms, spread, ok); ``ok`` is False when the product underflows
    and the caller must fall back to the log-domain route.
    """
    H = ep.shape[0]
    s0 = ep[0] * er[0]
    sq = 0.0
    xe = 0.0
    ye = 0.0
    for h in range(1, H):
        m = ep[h] * er[h]
        sq += m
        xe += m * pts[h - 1, 0]
        ye += m * pts[h - 1, 1]
    tot = s0 + sq
    if tot < UNDERFLOW:
        return 0.0, 0.0, False
    if sq == 0.0:
        return 0.0, 0.0, True
    xe /= sq
    ye /= sq
    loc = 0.0
    spread = 0.0
    for h in range(1, H):
        m = ep[h] * er[h]
        if m == 0.0:
            continue
        dx = pts[h - 1, 0] - xe
        dy = pts[h - 1, 1] - ye
        d2 = dx * dx + dy * dy
        spread += m * d2
        loc += m * (d2 if d2 <= c2 else c2)
    p0 = s0 / tot
    cost_phi = 0.5 * c2 * sq / tot
    cost_est = 0.5 * c2 * p0 + loc / tot
    return (cost_phi if cost_phi <= cost_est else cost_est), spread / tot, True


def scaled_tables(tables):
    """``exp(table - rowmax)`` for every likelihood row (rows of -inf stay 0)."""
    top = tables.max(axis=-1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(invalid="ignore"):
        return np.exp(tables - top)


@njit(cache=True)
def leaf_min(parents, tables, scaled, infov, observe, pd, sensing_cost, log_r, log_1mr,
             prior_w, pts, c2, n_samples):
    """Best final-step action for each parent posterior.

    ``tables`` has shape (n_a, H, J, 2, H), ``scaled`` holds the matching
    rows from :func:`scaled_tables` and ``infov`` is (n_a, H). Returns
    (value, action index, expected MMS, expected spread) per parent; the
    value includes the sensing cost of the chosen action.
    """
    P, H = parents.shape
    n_a = tables.shape[0]
    best_val = np.empty(P)
    best_act = np.empty(P, dtype=np.int64)
    best_cost = np.empty(P)
    best_spread = np.empty(P)
    child = np.empty(H)
    ep = np.empty(H)
    for p in range(P):
        probs = posterior_probs(parents[p], log_r, log_1mr)
        if probs[0] != probs[0]:
            best_val[p] = np.nan
            best_act[p] = -1
            best_cost[p] = np.nan
            best_spread[p] = np.nan
            continue
        top = 0.0
        for h in range(H):
            if probs[h] > top:
                top = probs[h]
        for h in range(H):
            ep[h] = probs[h] / top
        bv = np.inf
        ba = -1
        bc = 0.0
        bsp = 0.0
        for a in range(n_a):
            cost = 0.0
            spread = 0.0
            for i in range(H):
                if probs[i] == 0.0:
                    continue
                for f in range(2):
                    if infov[a, i]:
                        pf = pd if f == 1 else 1.0 - pd
                    else:
                        pf = 0.0 if f == 1 else 1.0
                    if pf <= 0.0:
                        continue
                    w = probs[i] * pf / n_samples
                    for j in range(n_samples):
                        mms, sp, ok = _child_mms_scaled(ep, scaled[a, i, j, f], pts, c2)
                        if not ok:
                            for h in range(H):
                                child[h] = parents[p, h] + tables[a, i, j, f, h]
                            cp, ce, _, _, _, sp = branch_mms(child, log_r, log_1mr, prior_w, pts, c2)
                            mms = cp if cp <= ce else ce
                        cost += w * mms
                        spread += w * sp
            val = cost + (sensing_cost if observe[a] else 0.0)
            if ba < 0 or strictly_less(val, bv):
                bv = val
                ba = a
                bc = cost
                bsp = spread
        best_val[p] = bv
        best_act[p] = ba
        best_cost[p] = bc
        best_spread[p] = bsp
    return best_val, best_act, best_cost, best_spread


@njit(cache=True)
def leaf_min_exact(parents, tables, infov, observe, pd, sensing_cost, log_r, log_1mr,
                   prior_w, pts, c2, n_samples):
    """Log-domain reference for :func:`leaf_min` (same outputs, slower)."""
    P, H = parents.shape
    n_a = tables.shape[0]
    best_val = np.empty(P)
    best_act = np.empty(P, dtype=np.int64)
    best_cost = np.empty(P)
    best_spread = np.empty(P)
    child = np.empty(H)
    for p in range(P):
        probs = posterior_probs(parents[p], log_r, log_1mr)
        bv = np.inf
        ba = -1
        bc = 0.0
        bsp = 0.0
        for a in range(n_a):
            cost = 0.0
            spread = 0.0
            for i in range(H):
                if probs[i] == 0.0:
                    continue
                for f in range(2):
                    if infov[a, i]:
                        pf = pd if f == 1 else 1.0 - pd
                    else:
                        pf = 0.0 if f == 1 else 1.0
                    if pf <= 0.0:
                        continue
                    w = probs[i] * pf / n_samples
                    for j in range(n_samples):
                        for h in range(H):
                            child[h] = parents[p, h] + tables[a, i, j, f, h]
                        cp, ce, _, _, _, sp = branch_mms(child, log_r, log_1mr, prior_w, pts, c2)
                        cost += w * (cp if cp <= ce else ce)
                        spread += w * sp
            val = cost + (sensing_cost if observe[a] else 0.0)
            if ba < 0 or strictly_less(val, bv):
                bv = val
                ba = a
                bc = cost
                bsp = spread
        best_val[p] = bv
        best_act[p] = ba
        best_cost[p] = bc
        best_spread[p] = bsp
    return best_val, best_act, best_cost, best_spread
