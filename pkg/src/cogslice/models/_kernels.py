"""JIT-compiled inner loops for the solvers."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def cd_sweeps(G, c, b, l1, l2, tol, max_sweeps):
    """Run coordinate-descent sweeps in place until the largest update is below tol.

    Returns the number of sweeps done and the last largest update.
    """
    p = c.shape[0]
    Gb = G @ b
    max_change = np.inf
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        max_change = 0.0
        for j in range(p):
            d = G[j, j]
            if d == 0.0:
                continue
            old = b[j]
            rho = c[j] - Gb[j] + d * old
            a = abs(rho) - l1
            if a > 0.0:
                new = (a if rho > 0 else -a) / (d + l2)
            else:
                new = 0.0
            delta = new - old
            if delta != 0.0:
                for i in range(p):
                    Gb[i] += G[i, j] * delta
                b[j] = new
                if abs(delta) > max_change:
                    max_change = abs(delta)
        if max_change < tol:
            break
    return sweeps, max_change


@njit(cache=True)
def best_split(XT, y, order, rows, in_node, feats, min_leaf, presorted):
    """Best squared-error split of ``rows`` over ``feats``; ``XT`` is X transposed.

    Returns (feature, lower value, upper value, score); feature is -1 when no
    valid cut exists. Scores are compared strictly, so the first maximum wins:
    the smallest feature index, then the smallest threshold.
    """
    k = rows.shape[0]
    xs = np.empty(k)
    ys = np.empty(k)
    best_f = -1
    best_lo = 0.0
    best_hi = 0.0
    best_score = -np.inf
    for fi in range(feats.shape[0]):
        f = feats[fi]
        xf = XT[f]
        if presorted:
            cnt = 0
            for r in order[f]:
                if in_node[r]:
                    xs[cnt] = xf[r]
                    ys[cnt] = y[r]
                    cnt += 1
        else:
            vals = np.empty(k)
            for i in range(k):
                vals[i] = xf[rows[i]]
            idx = np.argsort(vals, kind="mergesort")
            for i in range(k):
                xs[i] = vals[idx[i]]
                ys[i] = y[rows[idx[i]]]
        total = 0.0
        for i in range(k):
            total += ys[i]
        sl = 0.0
        for i in range(k - 1):
            sl += ys[i]
            nl = i + 1
            if xs[i + 1] > xs[i] and nl >= min_leaf and k - nl >= min_leaf:
                sr = total - sl
                s = sl * sl / nl + sr * sr / (k - nl)
                if s > best_score:
                    best_score = s
                    best_f = f
                    best_lo = xs[i]
                    best_hi = xs[i + 1]
    return best_f, best_lo, best_hi, best_score
