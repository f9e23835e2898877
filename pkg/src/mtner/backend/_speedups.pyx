# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: LSTM sequence forward/backward, CRF forward-backward,
Viterbi. Mirrors the API and semantics of ``mtner.backend.pure``."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, tanh

cnp.import_array()

NAME = "compiled"


cdef inline double _sigmoid(double z) noexcept nogil:
    cdef double e
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


def lstm_seq_forward(object x_in, object wx_in, object wh_in, object b_in):
    cdef double[:, ::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef double[:, ::1] wx = np.ascontiguousarray(wx_in, dtype=np.float64)
    cdef double[:, ::1] wh = np.ascontiguousarray(wh_in, dtype=np.float64)
    cdef double[::1] b = np.ascontiguousarray(b_in, dtype=np.float64)
    cdef Py_ssize_t T = x.shape[0]
    cdef Py_ssize_t D = x.shape[1]
    cdef Py_ssize_t H = wh.shape[1]
    h_arr = np.zeros((T, H), dtype=np.float64)
    c_arr = np.zeros((T, H), dtype=np.float64)
    g_arr = np.zeros((T, 4 * H), dtype=np.float64)
    pre_arr = np.zeros(4 * H, dtype=np.float64)
    cdef double[:, ::1] h = h_arr
    cdef double[:, ::1] c = c_arr
    cdef double[:, ::1] gates = g_arr
    cdef double[::1] pre = pre_arr
    cdef Py_ssize_t t, r, d, j
    cdef double s, iv, fv, ov, gv, cv, c_prev
    with nogil:
        for t in range(T):
            for r in range(4 * H):
                s = b[r]
                for d in range(D):
                    s += wx[r, d] * x[t, d]
                if t > 0:
                    for j in range(H):
                        s += wh[r, j] * h[t - 1, j]
                pre[r] = s
            for j in range(H):
                iv = _sigmoid(pre[j])
                fv = _sigmoid(pre[H + j])
                ov = _sigmoid(pre[2 * H + j])
                gv = tanh(pre[3 * H + j])
                c_prev = c[t - 1, j] if t > 0 else 0.0
                cv = fv * c_prev + iv * gv
                gates[t, j] = iv
                gates[t, H + j] = fv
                gates[t, 2 * H + j] = ov
                gates[t, 3 * H + j] = gv
                c[t, j] = cv
                h[t, j] = ov * tanh(cv)
    return h_arr, c_arr, g_arr


def lstm_seq_backward(object x_in, object wx_in, object wh_in,
                      object h_in, object c_in, object gates_in, object dh_in):
    cdef double[:, ::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef double[:, ::1] wx = np.ascontiguousarray(wx_in, dtype=np.float64)
    cdef double[:, ::1] wh = np.ascontiguousarray(wh_in, dtype=np.float64)
    cdef double[:, ::1] h = np.ascontiguousarray(h_in, dtype=np.float64)
    cdef double[:, ::1] c = np.ascontiguousarray(c_in, dtype=np.float64)
    cdef double[:, ::1] gates = np.ascontiguousarray(gates_in, dtype=np.float64)
    cdef double[:, ::1] dh_out = np.ascontiguousarray(dh_in, dtype=np.float64)
    cdef Py_ssize_t T = x.shape[0]
    cdef Py_ssize_t D = x.shape[1]
    cdef Py_ssize_t H = wh.shape[1]
    dx_arr = np.zeros((T, D), dtype=np.float64)
    dwx_arr = np.zeros((4 * H, D), dtype=np.float64)
    dwh_arr = np.zeros((4 * H, H), dtype=np.float64)
    db_arr = np.zeros(4 * H, dtype=np.float64)
    da_arr = np.zeros(4 * H, dtype=np.float64)
    dhn_arr = np.zeros(H, dtype=np.float64)
    dcn_arr = np.zeros(H, dtype=np.float64)
    cdef double[:, ::1] dx = dx_arr
    cdef double[:, ::1] dwx = dwx_arr
    cdef double[:, ::1] dwh = dwh_arr
    cdef double[::1] db = db_arr
    cdef double[::1] da = da_arr
    cdef double[::1] dh_next = dhn_arr
    cdef double[::1] dc_next = dcn_arr
    cdef Py_ssize_t t, j, r, d
    cdef double iv, fv, ov, gv, tc, dh, dc, c_prev, h_prev, s
    with nogil:
        for t in range(T - 1, -1, -1):
            for j in range(H):
                iv = gates[t, j]
                fv = gates[t, H + j]
                ov = gates[t, 2 * H + j]
                gv = gates[t, 3 * H + j]
                tc = tanh(c[t, j])
                dh = dh_out[t, j] + dh_next[j]
                dc = dh * ov * (1.0 - tc * tc) + dc_next[j]
                c_prev = c[t - 1, j] if t > 0 else 0.0
                da[j] = dc * gv * iv * (1.0 - iv)
                da[H + j] = dc * c_prev * fv * (1.0 - fv)
                da[2 * H + j] = dh * tc * ov * (1.0 - ov)
                da[3 * H + j] = dc * iv * (1.0 - gv * gv)
                dc_next[j] = dc * fv
            for r in range(4 * H):
                db[r] += da[r]
                for d in range(D):
                    dwx[r, d] += da[r] * x[t, d]
                if t > 0:
                    for j in range(H):
                        dwh[r, j] += da[r] * h[t - 1, j]
            for d in range(D):
                s = 0.0
                for r in range(4 * H):
                    s += da[r] * wx[r, d]
                dx[t, d] = s
            for j in range(H):
                s = 0.0
                for r in range(4 * H):
                    s += da[r] * wh[r, j]
                dh_next[j] = s
    return dx_arr, dwx_arr, dwh_arr, db_arr


cdef inline double _lse(double[::1] v, Py_ssize_t k) noexcept nogil:
    cdef double m = v[0]
    cdef double s = 0.0
    cdef Py_ssize_t j
    for j in range(1, k):
        if v[j] > m:
            m = v[j]
    for j in range(k):
        s += exp(v[j] - m)
    return m + log(s)


def crf_partition(object emis_in, object trans_in):
    cdef double[:, ::1] emis = np.ascontiguousarray(emis_in, dtype=np.float64)
    cdef double[:, ::1] trans = np.ascontiguousarray(trans_in, dtype=np.float64)
    cdef Py_ssize_t n = emis.shape[0]
    cdef Py_ssize_t k = emis.shape[1]
    alpha_arr = np.zeros(k, dtype=np.float64)
    nxt_arr = np.zeros(k, dtype=np.float64)
    buf_arr = np.zeros(k, dtype=np.float64)
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] nxt = nxt_arr
    cdef double[::1] buf = buf_arr
    cdef Py_ssize_t t, i, j
    with nogil:
        for j in range(k):
            alpha[j] = trans[k, j] + emis[0, j]
        for t in range(1, n):
            for j in range(k):
                for i in range(k):
                    buf[i] = alpha[i] + trans[i, j]
                nxt[j] = emis[t, j] + _lse(buf, k)
            for j in range(k):
                alpha[j] = nxt[j]
        for j in range(k):
            buf[j] = alpha[j] + trans[j, k + 1]
    return float(_lse(buf, k))


def crf_marginals(object emis_in, object trans_in):
    cdef double[:, ::1] emis = np.ascontiguousarray(emis_in, dtype=np.float64)
    cdef double[:, ::1] trans = np.ascontiguousarray(trans_in, dtype=np.float64)
    cdef Py_ssize_t n = emis.shape[0]
    cdef Py_ssize_t k = emis.shape[1]
    alpha_arr = np.zeros((n, k), dtype=np.float64)
    beta_arr = np.zeros((n, k), dtype=np.float64)
    unary_arr = np.zeros((n, k), dtype=np.float64)
    etrans_arr = np.zeros((k + 2, k + 2), dtype=np.float64)
    buf_arr = np.zeros(k, dtype=np.float64)
    cdef double[:, ::1] alpha = alpha_arr
    cdef double[:, ::1] beta = beta_arr
    cdef double[:, ::1] unary = unary_arr
    cdef double[:, ::1] etrans = etrans_arr
    cdef double[::1] buf = buf_arr
    cdef Py_ssize_t t, i, j
    cdef double log_z
    with nogil:
        for j in range(k):
            alpha[0, j] = trans[k, j] + emis[0, j]
        for t in range(1, n):
            for j in range(k):
                for i in range(k):
                    buf[i] = alpha[t - 1, i] + trans[i, j]
                alpha[t, j] = emis[t, j] + _lse(buf, k)
        for i in range(k):
            beta[n - 1, i] = trans[i, k + 1]
        for t in range(n - 2, -1, -1):
            for i in range(k):
                for j in range(k):
                    buf[j] = trans[i, j] + emis[t + 1, j] + beta[t + 1, j]
                beta[t, i] = _lse(buf, k)
        for j in range(k):
            buf[j] = alpha[n - 1, j] + trans[j, k + 1]
        log_z = _lse(buf, k)
        for t in range(n):
            for j in range(k):
                unary[t, j] = exp(alpha[t, j] + beta[t, j] - log_z)
        for t in range(n - 1):
            for i in range(k):
                for j in range(k):
                    etrans[i, j] += exp(
                        alpha[t, i] + trans[i, j] + emis[t + 1, j]
                        + beta[t + 1, j] - log_z
                    )
        for j in range(k):
            etrans[k, j] = unary[0, j]
            etrans[j, k + 1] = unary[n - 1, j]
    return float(log_z), unary_arr, etrans_arr


def viterbi_decode(object emis_in, object trans_in):
    cdef double[:, ::1] emis = np.ascontiguousarray(emis_in, dtype=np.float64)
    cdef double[:, ::1] trans = np.ascontiguousarray(trans_in, dtype=np.float64)
    cdef Py_ssize_t n = emis.shape[0]
    cdef Py_ssize_t k = emis.shape[1]
    score_arr = np.zeros(k, dtype=np.float64)
    nxt_arr = np.zeros(k, dtype=np.float64)
    back_arr = np.zeros((n, k), dtype=np.int64)
    path_arr = np.zeros(n, dtype=np.int64)
    cdef double[::1] score = score_arr
    cdef double[::1] nxt = nxt_arr
    cdef long long[:, ::1] back = back_arr
    cdef long long[::1] path = path_arr
    cdef Py_ssize_t t, i, j, arg
    cdef double best, cand, final_best
    cdef Py_ssize_t final_arg
    with nogil:
        for j in range(k):
            score[j] = trans[k, j] + emis[0, j]
        for t in range(1, n):
            for j in range(k):
                best = score[0] + trans[0, j]
                arg = 0
                for i in range(1, k):
                    cand = score[i] + trans[i, j]
                    if cand > best:
                        best = cand
                        arg = i
                nxt[j] = emis[t, j] + best
                back[t, j] = arg
            for j in range(k):
                score[j] = nxt[j]
        final_best = score[0] + trans[0, k + 1]
        final_arg = 0
        for j in range(1, k):
            cand = score[j] + trans[j, k + 1]
            if cand > final_best:
                final_best = cand
                final_arg = j
        path[n - 1] = final_arg
        for t in range(n - 1, 0, -1):
            path[t - 1] = back[t, path[t]]
    return path_arr, float(final_best)
