"""Linear-chain CRF output layer.

Emission scores are an (n, k) matrix; transitions are (k+2, k+2) with two
reserved states, start at index k and end at index k+1. Transition entries
are unnormalized log-scores. All sequence scores include the start->first
and last->end boundary transitions.
"""

from __future__ import annotations

import itertools

import numpy as np

from . import backend
from .mathutil import logsumexp

BRUTE_FORCE_LIMIT = 10**6


def start_index(k: int) -> int:
    return k


def end_index(k: int) -> int:
    return k + 1


def _check_shapes(emis: np.ndarray, trans: np.ndarray) -> tuple[int, int]:
    n, k = emis.shape
    if trans.shape != (k + 2, k + 2):
        raise ValueError(
            f"transition matrix must be ({k + 2}, {k + 2}) for {k} labels, "
            f"got {trans.shape}"
        )
    if n < 1:
        raise ValueError("emission matrix must cover at least one position")
    return n, k


def score(emis: np.ndarray, trans: np.ndarray, labels) -> float:
    """Total path score of one label sequence, boundary transitions included."""
    n, k = _check_shapes(emis, trans)
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (n,):
        raise ValueError(f"label sequence length {y.shape} does not match n={n}")
    if y.min() < 0 or y.max() >= k:
        raise ValueError("label id out of range")
    total = trans[k, y[0]] + trans[y[-1], k + 1]
    for t in range(n - 1):
        total += trans[y[t], y[t + 1]]
    total += emis[np.arange(n), y].sum()
    return float(total)


def log_partition(emis: np.ndarray, trans: np.ndarray) -> float:
    """log sum over all k^n label sequences of exp(score)."""
    _check_shapes(emis, trans)
    return backend.crf_partition(emis, trans)


def log_likelihood(emis: np.ndarray, trans: np.ndarray, labels) -> float:
    """score(y) - log_partition; always <= 0."""
    return score(emis, trans, labels) - log_partition(emis, trans)


def crf_gradients(emis: np.ndarray, trans: np.ndarray, labels):
    """Gradients of the log-likelihood wrt emissions and transitions.

    d/dP[t, l] = 1{y_t = l} - marginal(t, l); transition gradients use
    observed minus expected pair counts (start/end rows included).
    Returns (log_likelihood, d_emis, d_trans).
    """
    n, k = _check_shapes(emis, trans)
    y = np.asarray(labels, dtype=np.int64)
    log_z, unary, etrans = backend.crf_marginals(emis, trans)
    d_emis = -unary
    d_emis[np.arange(n), y] += 1.0
    d_trans = -etrans
    d_trans[k, y[0]] += 1.0
    d_trans[y[-1], k + 1] += 1.0
    for t in range(n - 1):
        d_trans[y[t], y[t + 1]] += 1.0
    ll = score(emis, trans, y) - log_z
    return ll, d_emis, d_trans


def marginals(emis: np.ndarray, trans: np.ndarray) -> np.ndarray:
    """Posterior label probabilities per position (rows sum to 1)."""
    _check_shapes(emis, trans)
    _, unary, _ = backend.crf_marginals(emis, trans)
    return unary


def viterbi(emis: np.ndarray, trans: np.ndarray):
    """Highest-scoring label sequence and its score.

    Ties are broken toward the smaller label id at each backtrack step.
    """
    _check_shapes(emis, trans)
    path, best = backend.viterbi_decode(emis, trans)
    return path, best


def brute_force(emis: np.ndarray, trans: np.ndarray):
    """Exhaustive-enumeration oracle: (log_partition, argmax sequence, best score).

    Sequences are enumerated in lexicographic order and ties keep the first
    maximum, so the argmax is the lexicographically smallest best path.
    """
    n, k = _check_shapes(emis, trans)
    if k**n > BRUTE_FORCE_LIMIT:
        raise ValueError(f"instance too large for enumeration: {k}^{n} sequences")
    scores = []
    best_seq = None
    best_score = -np.inf
    for seq in itertools.product(range(k), repeat=n):
        s = score(emis, trans, seq)
        scores.append(s)
        if s > best_score:
            best_score = s
            best_seq = seq
    return logsumexp(scores), np.asarray(best_seq, dtype=np.int64), best_score
