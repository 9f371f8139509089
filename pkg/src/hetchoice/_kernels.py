"""Compiled inner loops of the panel likelihood.

Each kernel walks one block of individuals serially in a fixed order, so the
floating-point result is the same whichever thread runs the block.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def panel_logp(vfix, s, A, sd, starts, n_obs, want_q):
    """lp[i, r] = sum over i's observations of ln P(y_t | draw r).

    vfix: (n_obs,) fixed utility, s: (n_obs,) +1/-1 choice sign,
    A: (d, n_obs, R) draw times random-term regressor, sd: (d,),
    starts: (n_ind,) first observation of each individual.
    Returns (lp, q, ok): q[t, r] = y_t - P(y_t = 1 | draw r) when ``want_q``
    (else an empty array) and ok False if any utility was non-finite.
    """
    d = A.shape[0]
    R = A.shape[2]
    n_ind = starts.shape[0]
    lp = np.zeros((n_ind, R))
    q = np.empty((n_obs, R)) if want_q else np.empty((0, R))
    ok = True
    for i in range(n_ind):
        t1 = starts[i + 1] if i + 1 < n_ind else n_obs
        for t in range(starts[i], t1):
            for r in range(R):
                v = vfix[t]
                for j in range(d):
                    v += sd[j] * A[j, t, r]
                sv = s[t] * v
                if not math.isfinite(sv):
                    ok = False
                    sv = 0.0
                e = math.exp(-abs(sv))
                lp[i, r] += min(sv, 0.0) - math.log1p(e)
                if want_q:
                    # probability of the choice not made, signed toward y = 1
                    q[t, r] = s[t] * (e / (1.0 + e) if sv >= 0 else 1.0 / (1.0 + e))
    return lp, q, ok


@njit(cache=True, nogil=True)
def panel_scores(q, A, starts, n_obs, w, X):
    """Weighted scores of one class: sum_r w[i, r] d ln P_ir / d(beta, sd).

    Returns (g_beta (n_ind, m), g_sd (n_ind, d)).
    """
    d = A.shape[0]
    R = A.shape[2]
    m = X.shape[1]
    n_ind = starts.shape[0]
    gb = np.zeros((n_ind, m))
    gs = np.zeros((n_ind, d))
    for i in range(n_ind):
        t1 = starts[i + 1] if i + 1 < n_ind else n_obs
        for t in range(starts[i], t1):
            g_obs = 0.0
            for r in range(R):
                wr = w[i, r] * q[t, r]
                g_obs += wr
                for j in range(d):
                    gs[i, j] += wr * A[j, t, r]
            for k in range(m):
                gb[i, k] += g_obs * X[t, k]
    return gb, gs
