"""SMO for the soft-margin SVM dual on a precomputed kernel, compiled with numba.

The solver follows the LIBSVM scheme: second-order working-set selection,
analytic two-variable updates clipped to the box ``[0, C]`` and a stop once
the maximal KKT violation ``m(a) - M(a)`` drops below ``tol``.

All routines address the kernel through an index vector, so cross-validation
can slice folds out of one full Gram matrix without copying it.
"""

from __future__ import annotations

import numpy as np
from numba import njit

TAU = 1e-12


@njit(cache=True)
def smo_solve(K, idx, y, C, tol, max_iter):
    """Solve ``min 1/2 a'Qa - e'a, 0 <= a <= C, y'a = 0`` with ``Q_ij = y_i y_j K_ij``.

    Args:
        K: kernel matrix; rows/columns ``idx`` are the training samples.
        idx: int64 indices of the training samples in ``K``.
        y: +1/-1 labels (float64) aligned with ``idx``.

    Returns:
        ``(alpha, rho, iterations)``; the decision value is
        ``sum_t alpha_t y_t K(t, x) - rho``.
    """
    n = idx.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    qd = np.empty(n)
    for t in range(n):
        qd[t] = K[idx[t], idx[t]]
    it = 0
    while it < max_iter:
        # i: maximal violator in I_up
        gmax = -np.inf
        i = -1
        for t in range(n):
            if y[t] > 0:
                if alpha[t] < C and -G[t] >= gmax:
                    gmax = -G[t]
                    i = t
            else:
                if alpha[t] > 0 and G[t] >= gmax:
                    gmax = G[t]
                    i = t
        if i < 0:
            break
        ki = idx[i]
        # j: second-order choice in I_low
        gmax2 = -np.inf
        j = -1
        best = np.inf
        for t in range(n):
            kt = idx[t]
            if y[t] > 0:
                if alpha[t] > 0:
                    if G[t] >= gmax2:
                        gmax2 = G[t]
                    diff = gmax + G[t]
                    if diff > 0:
                        quad = qd[i] + qd[t] - 2.0 * K[ki, kt]
                        if quad <= 0:
                            quad = TAU
                        obj = -(diff * diff) / quad
                        if obj <= best:
                            best = obj
                            j = t
            else:
                if alpha[t] < C:
                    if -G[t] >= gmax2:
                        gmax2 = -G[t]
                    diff = gmax - G[t]
                    if diff > 0:
                        quad = qd[i] + qd[t] - 2.0 * K[ki, kt]
                        if quad <= 0:
                            quad = TAU
                        obj = -(diff * diff) / quad
                        if obj <= best:
                            best = obj
                            j = t
        if gmax + gmax2 < tol or j < 0:
            break
        kj = idx[j]
        old_i = alpha[i]
        old_j = alpha[j]
        kij = K[ki, kj]
        if y[i] != y[j]:
            quad = qd[i] + qd[j] - 2.0 * kij
            if quad <= 0:
                quad = TAU
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            quad = qd[i] + qd[j] - 2.0 * kij
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = total
            if total > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = total
        di = alpha[i] - old_i
        dj = alpha[j] - old_j
        for t in range(n):
            kt = idx[t]
            G[t] += y[t] * (y[i] * K[kt, ki] * di + y[j] * K[kt, kj] * dj)
        it += 1

    # offset: mean over free vectors, else midpoint of the feasible interval
    ub = np.inf
    lb = -np.inf
    nfree = 0
    sfree = 0.0
    for t in range(n):
        yg = y[t] * G[t]
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            nfree += 1
            sfree += yg
    if nfree > 0:
        rho = sfree / nfree
    else:
        rho = (ub + lb) / 2.0
    return alpha, rho, it


@njit(cache=True)
def ovo_cv_predict(K, cls, folds, n_folds, n_classes, C, tol, max_iter):
    """One-vs-one SVM cross-validation on a full precomputed kernel.

    Args:
        cls: class index per sample (0..n_classes-1).
        folds: fold id per sample (0..n_folds-1).

    Returns:
        Predicted class index per sample, each predicted by the machine
        trained without its fold.  Votes tie toward the smaller class;
        a zero decision value counts for the smaller class of the pair.
    """
    n = cls.shape[0]
    pred = np.full(n, -1, dtype=np.int64)
    for f in range(n_folds):
        nval = 0
        for t in range(n):
            if folds[t] == f:
                nval += 1
        val = np.empty(nval, dtype=np.int64)
        c = 0
        for t in range(n):
            if folds[t] == f:
                val[c] = t
                c += 1
        votes = np.zeros((nval, n_classes), dtype=np.int64)
        for a in range(n_classes):
            for b in range(a + 1, n_classes):
                m = 0
                for t in range(n):
                    if folds[t] != f and (cls[t] == a or cls[t] == b):
                        m += 1
                if m == 0:
                    continue
                idx = np.empty(m, dtype=np.int64)
                yy = np.empty(m)
                c = 0
                na = 0
                for t in range(n):
                    if folds[t] != f and (cls[t] == a or cls[t] == b):
                        idx[c] = t
                        yy[c] = 1.0 if cls[t] == a else -1.0
                        if cls[t] == a:
                            na += 1
                        c += 1
                if na == 0 or na == m:
                    # only one side present in this training split
                    winner = a if na == m else b
                    for v in range(nval):
                        votes[v, winner] += 1
                    continue
                alpha, rho, _ = smo_solve(K, idx, yy, C, tol, max_iter)
                for v in range(nval):
                    s = -rho
                    kv = val[v]
                    for t in range(m):
                        if alpha[t] > 0:
                            s += alpha[t] * yy[t] * K[idx[t], kv]
                    if s >= 0:
                        votes[v, a] += 1
                    else:
                        votes[v, b] += 1
        for v in range(nval):
            best = 0
            for k in range(1, n_classes):
                if votes[v, k] > votes[v, best]:
                    best = k
            pred[val[v]] = best
    return pred
