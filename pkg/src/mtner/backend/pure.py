"""Numpy implementations of the hot kernels.

This is the fallback backend; the compiled extension in ``_speedups``
implements the same functions with identical semantics. Gate layout in all
packed arrays is [input | forget | output | candidate] along the 4H axis.
"""

from __future__ import annotations

import numpy as np

NAME = "pure"


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # branch keeps exp() off large positive arguments
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def lstm_seq_forward(x, wx, wh, b):
    """Run an LSTM over a sequence from zero initial state.

    x: (T, D) inputs; wx: (4H, D); wh: (4H, H); b: (4H,).
    Returns (h, c, gates): hidden states (T, H), cell states (T, H) and
    post-activation gate values (T, 4H).
    """
    T = x.shape[0]
    H = wh.shape[1]
    h = np.zeros((T, H), dtype=np.float64)
    c = np.zeros((T, H), dtype=np.float64)
    gates = np.zeros((T, 4 * H), dtype=np.float64)
    ax = x @ wx.T + b
    h_prev = np.zeros(H, dtype=np.float64)
    c_prev = np.zeros(H, dtype=np.float64)
    for t in range(T):
        pre = ax[t] + wh @ h_prev
        i = _sigmoid(pre[:H])
        f = _sigmoid(pre[H : 2 * H])
        o = _sigmoid(pre[2 * H : 3 * H])
        g = np.tanh(pre[3 * H :])
        c_t = f * c_prev + i * g
        h_t = o * np.tanh(c_t)
        gates[t, :H] = i
        gates[t, H : 2 * H] = f
        gates[t, 2 * H : 3 * H] = o
        gates[t, 3 * H :] = g
        c[t] = c_t
        h[t] = h_t
        h_prev = h_t
        c_prev = c_t
    return h, c, gates


def lstm_seq_backward(x, wx, wh, h, c, gates, dh_out):
    """Backprop through lstm_seq_forward.

    dh_out: (T, H) upstream gradient on each hidden state. Returns
    (dx, dwx, dwh, db).
    """
    T, D = x.shape
    H = wh.shape[1]
    dx = np.zeros_like(x)
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(4 * H, dtype=np.float64)
    dh_next = np.zeros(H, dtype=np.float64)
    dc_next = np.zeros(H, dtype=np.float64)
    da = np.empty(4 * H, dtype=np.float64)
    for t in range(T - 1, -1, -1):
        i = gates[t, :H]
        f = gates[t, H : 2 * H]
        o = gates[t, 2 * H : 3 * H]
        g = gates[t, 3 * H :]
        c_prev = c[t - 1] if t > 0 else np.zeros(H)
        h_prev = h[t - 1] if t > 0 else np.zeros(H)
        tc = np.tanh(c[t])
        dh = dh_out[t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        da[:H] = dc * g * i * (1.0 - i)
        da[H : 2 * H] = dc * c_prev * f * (1.0 - f)
        da[2 * H : 3 * H] = dh * tc * o * (1.0 - o)
        da[3 * H :] = dc * i * (1.0 - g * g)
        dwx += np.outer(da, x[t])
        dwh += np.outer(da, h_prev)
        db += da
        dx[t] = da @ wx
        dh_next = da @ wh
        dc_next = dc * f
    return dx, dwx, dwh, db


def _lse_rows(a: np.ndarray, axis: int) -> np.ndarray:
    m = a.max(axis=axis, keepdims=True)
    return m.squeeze(axis) + np.log(np.sum(np.exp(a - m), axis=axis))


def crf_partition(emis, trans) -> float:
    """Log-partition of a linear-chain model via the forward recursion.

    emis: (n, k) per-position label scores; trans: (k+2, k+2) with the
    start state at index k and the end state at index k+1.
    """
    n, k = emis.shape
    inner = trans[:k, :k]
    alpha = trans[k, :k] + emis[0]
    for t in range(1, n):
        alpha = emis[t] + _lse_rows(alpha[:, None] + inner, axis=0)
    return float(_lse_rows(alpha + trans[:k, k + 1], axis=0))


def crf_marginals(emis, trans):
    """Forward-backward pass.

    Returns (logZ, unary, etrans): unary[t, j] is the posterior of label j
    at position t; etrans accumulates expected transition counts, including
    the start row (index k) and end column (index k+1).
    """
    n, k = emis.shape
    inner = trans[:k, :k]
    alpha = np.zeros((n, k), dtype=np.float64)
    beta = np.zeros((n, k), dtype=np.float64)
    alpha[0] = trans[k, :k] + emis[0]
    for t in range(1, n):
        alpha[t] = emis[t] + _lse_rows(alpha[t - 1][:, None] + inner, axis=0)
    beta[n - 1] = trans[:k, k + 1]
    for t in range(n - 2, -1, -1):
        beta[t] = _lse_rows(inner + (emis[t + 1] + beta[t + 1])[None, :], axis=1)
    log_z = float(_lse_rows(alpha[n - 1] + trans[:k, k + 1], axis=0))
    unary = np.exp(alpha + beta - log_z)
    etrans = np.zeros_like(trans)
    for t in range(n - 1):
        etrans[:k, :k] += np.exp(
            alpha[t][:, None] + inner + (emis[t + 1] + beta[t + 1])[None, :] - log_z
        )
    etrans[k, :k] = unary[0]
    etrans[:k, k + 1] = unary[n - 1]
    return log_z, unary, etrans


def viterbi_decode(emis, trans):
    """Best label sequence and its score; ties pick the smaller label id."""
    n, k = emis.shape
    inner = trans[:k, :k]
    score = trans[k, :k] + emis[0]
    back = np.zeros((n, k), dtype=np.int64)
    for t in range(1, n):
        cand = score[:, None] + inner
        back[t] = np.argmax(cand, axis=0)
        score = emis[t] + cand[back[t], np.arange(k)]
    final = score + trans[:k, k + 1]
    last = int(np.argmax(final))
    path = np.zeros(n, dtype=np.int64)
    path[n - 1] = last
    for t in range(n - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, float(final[last])
