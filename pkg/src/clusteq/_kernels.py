"""Compiled per-sample scans: trellis recursions and adaptive-filter runs.

Everything here is deliberately loop-structured for numba; the Python
wrappers in the sibling modules own validation and array assembly.
No fastmath: results must be bit-reproducible across runs.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _maxstar(a: float, b: float, max_log: bool) -> float:
    # log(exp(a) + exp(b)), exact unless max_log
    if a < b:
        a, b = b, a
    if max_log or a == -np.inf:
        return a
    return a + np.log1p(np.exp(b - a))


@njit(cache=True)
def bcjr_scan(gam, edge_from, edge_to, edge_bit, edge_c0, edge_c1,
              n_states, terminated, max_log):
    """Forward/backward recursions over a 2-output-bit trellis.

    gam is (T, E) branch log-metrics (-inf marks forbidden branches).
    Returns a-posteriori LLRs for the first coded bit, second coded bit
    and input bit of every trellis step.
    """
    T, E = gam.shape
    alpha = np.full((T + 1, n_states), -np.inf)
    alpha[0, 0] = 0.0
    for k in range(T):
        for e in range(E):
            a = alpha[k, edge_from[e]] + gam[k, e]
            alpha[k + 1, edge_to[e]] = _maxstar(alpha[k + 1, edge_to[e]], a, max_log)
        m = -np.inf
        for s in range(n_states):
            if alpha[k + 1, s] > m:
                m = alpha[k + 1, s]
        for s in range(n_states):
            alpha[k + 1, s] -= m

    beta = np.full((T + 1, n_states), -np.inf)
    if terminated:
        beta[T, 0] = 0.0
    else:
        for s in range(n_states):
            beta[T, s] = 0.0
    for k in range(T - 1, -1, -1):
        for e in range(E):
            b = beta[k + 1, edge_to[e]] + gam[k, e]
            beta[k, edge_from[e]] = _maxstar(beta[k, edge_from[e]], b, max_log)
        m = -np.inf
        for s in range(n_states):
            if beta[k, s] > m:
                m = beta[k, s]
        for s in range(n_states):
            beta[k, s] -= m

    app_c0 = np.empty(T)
    app_c1 = np.empty(T)
    app_in = np.empty(T)
    for k in range(T):
        num_c0 = -np.inf
        den_c0 = -np.inf
        num_c1 = -np.inf
        den_c1 = -np.inf
        num_in = -np.inf
        den_in = -np.inf
        for e in range(E):
            metric = alpha[k, edge_from[e]] + gam[k, e] + beta[k + 1, edge_to[e]]
            if edge_c0[e] == 0:
                num_c0 = _maxstar(num_c0, metric, max_log)
            else:
                den_c0 = _maxstar(den_c0, metric, max_log)
            if edge_c1[e] == 0:
                num_c1 = _maxstar(num_c1, metric, max_log)
            else:
                den_c1 = _maxstar(den_c1, metric, max_log)
            if edge_bit[e] == 0:
                num_in = _maxstar(num_in, metric, max_log)
            else:
                den_in = _maxstar(den_in, metric, max_log)
        app_c0[k] = num_c0 - den_c0
        app_c1[k] = num_c1 - den_c1
        app_in[k] = num_in - den_in
    return app_c0, app_c1, app_in


# Adaptation-target modes for bank_scan's data period.
TARGET_TRUTH = 0
TARGET_HARD_DECISION = 1
TARGET_DECODER_MEAN = 2

# Bank output modes.
OUT_SWITCH = 0
OUT_COMBINE = 1
OUT_SELECT = 2


@njit(cache=True)
def bank_scan(yw, xbw, tmask, is_train, truth, xbar_c, probs, fb_amp, fb_noise,
              gnoise, W, wc, mu, mu_c, delta, target_mode, out_mode):
    """Run a K-filter NLMS bank over one frame.

    yw (T, N): feedforward windows; xbw (T, F): feedback windows.
    During training rows every filter updates with full step mu, and
    feedback entries inside the training region (tmask == 1) are
    replaced by surrogate soft means of the filter's centroid quality:
    fb_amp[k] * symbol + fb_noise[k] * gnoise[t] (the conditional mean
    and spread of consistent soft feedback).  During data rows filter
    k's step is mu * probs[t, k].  W (K, N+F) and wc (K,) adapt in
    place.  Returns per-filter estimates, the bank output and the
    selected index per sample (-1 where no selection applies).
    """
    T, N = yw.shape
    F = xbw.shape[1]
    K = W.shape[0]
    xhat_k = np.zeros((T, K))
    xhat = np.zeros(T)
    sel = np.full(T, -1, dtype=np.int64)
    u_ff = np.empty(N)
    fbbuf = np.empty((K, F))

    for t in range(T):
        train = is_train[t]
        for i in range(N):
            u_ff[i] = yw[t, i]
        ff_nrm = 0.0
        for i in range(N):
            ff_nrm += u_ff[i] * u_ff[i]

        if train:
            for k in range(K):
                for j in range(F):
                    v = xbw[t, j]
                    if tmask[t, j] != 0.0:
                        v = fb_amp[k, j] * v + fb_noise[k, j] * gnoise[t, j]
                    fbbuf[k, j] = v
        else:
            for j in range(F):
                fbbuf[0, j] = xbw[t, j]

        for k in range(K):
            kk = k if train else 0
            acc = 0.0
            for i in range(N):
                acc += W[k, i] * u_ff[i]
            for j in range(F):
                acc += W[k, N + j] * fbbuf[kk, j]
            xhat_k[t, k] = acc

        # bank output, computed before any update
        if out_mode == OUT_COMBINE:
            acc = 0.0
            for k in range(K):
                acc += wc[k] * xhat_k[t, k]
            xhat[t] = acc
        elif out_mode == OUT_SELECT:
            if train or target_mode == TARGET_TRUTH:
                tsel = truth[t]
            elif target_mode == TARGET_DECODER_MEAN:
                tsel = xbar_c[t]
            else:
                m = 0.0
                for k in range(K):
                    m += xhat_k[t, k]
                tsel = 1.0 if m >= 0.0 else -1.0
            best = 0
            bestd = abs(tsel - xhat_k[t, 0])
            for k in range(1, K):
                d = abs(tsel - xhat_k[t, k])
                if d < bestd:
                    bestd = d
                    best = k
            sel[t] = best
            xhat[t] = xhat_k[t, best]
        else:  # OUT_SWITCH
            best = 0
            bestp = probs[t, 0]
            for k in range(1, K):
                if probs[t, k] > bestp:
                    bestp = probs[t, k]
                    best = k
            sel[t] = best
            xhat[t] = xhat_k[t, best]

        if train or target_mode == TARGET_TRUTH:
            tgt = truth[t]
        elif target_mode == TARGET_HARD_DECISION:
            tgt = 1.0 if xhat[t] >= 0.0 else -1.0
        else:
            tgt = xbar_c[t]

        for k in range(K):
            step = mu if train else mu * probs[t, k]
            if step == 0.0:
                continue
            kk = k if train else 0
            nrm = ff_nrm
            for j in range(F):
                nrm += fbbuf[kk, j] * fbbuf[kk, j]
            if nrm < delta:
                continue
            e = tgt - xhat_k[t, k]
            coef = step * e / (nrm + delta)
            for i in range(N):
                W[k, i] += coef * u_ff[i]
            for j in range(F):
                W[k, N + j] += coef * fbbuf[kk, j]

        # combiner adapts over the data period only; training rows keep
        # the seed weights (the constituents are near-identical there)
        if out_mode == OUT_COMBINE and not train:
            nrm = 0.0
            for k in range(K):
                nrm += xhat_k[t, k] * xhat_k[t, k]
            if nrm >= delta:
                e = tgt - xhat[t]
                coef = mu_c * e / (nrm + delta)
                for k in range(K):
                    wc[k] += coef * xhat_k[t, k]

    return xhat_k, xhat, sel
