"""LSTM cell and bidirectional layers with hand-derived backward passes.

Gate weights are packed along the first axis in [input | forget | output |
candidate] order; per-gate views are exposed as properties. The cell is the
vanilla formulation: no peepholes, no layer norm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .mathutil import as_rng, xavier_init


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class LstmParams:
    """Packed weights for one direction: wx (4H, D), wh (4H, H), b (4H,)."""

    wx: np.ndarray
    wh: np.ndarray
    b: np.ndarray

    @property
    def input_size(self) -> int:
        return self.wx.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.wh.shape[1]

    def _gate(self, arr, idx):
        h = self.hidden_size
        return arr[idx * h : (idx + 1) * h]

    # per-gate views, in the conventional i/f/o/g naming
    @property
    def wi(self):
        return self._gate(self.wx, 0)

    @property
    def wf(self):
        return self._gate(self.wx, 1)

    @property
    def wo(self):
        return self._gate(self.wx, 2)

    @property
    def wg(self):
        return self._gate(self.wx, 3)

    @property
    def ui(self):
        return self._gate(self.wh, 0)

    @property
    def uf(self):
        return self._gate(self.wh, 1)

    @property
    def uo(self):
        return self._gate(self.wh, 2)

    @property
    def ug(self):
        return self._gate(self.wh, 3)

    @property
    def bi(self):
        return self._gate(self.b, 0)

    @property
    def bf(self):
        return self._gate(self.b, 1)

    @property
    def bo(self):
        return self._gate(self.b, 2)

    @property
    def bg(self):
        return self._gate(self.b, 3)

    @classmethod
    def init(cls, input_size: int, hidden_size: int, seed_or_rng) -> "LstmParams":
        """Xavier-uniform per gate matrix, zero biases."""
        rng = as_rng(seed_or_rng)
        wx = np.vstack([xavier_init(hidden_size, input_size, rng) for _ in range(4)])
        wh = np.vstack([xavier_init(hidden_size, hidden_size, rng) for _ in range(4)])
        b = np.zeros(4 * hidden_size, dtype=np.float64)
        return cls(wx, wh, b)

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int) -> "LstmParams":
        return cls(
            np.zeros((4 * hidden_size, input_size)),
            np.zeros((4 * hidden_size, hidden_size)),
            np.zeros(4 * hidden_size),
        )


@dataclass
class BiLstmParams:
    fwd: LstmParams
    bwd: LstmParams

    @property
    def hidden_size(self) -> int:
        return self.fwd.hidden_size

    @classmethod
    def init(cls, input_size: int, hidden_size: int, seed_or_rng) -> "BiLstmParams":
        rng = as_rng(seed_or_rng)
        return cls(
            LstmParams.init(input_size, hidden_size, rng),
            LstmParams.init(input_size, hidden_size, rng),
        )


@dataclass
class LstmTape:
    """Cached forward activations for one direction, in run order."""

    x: np.ndarray  # (T, D)
    h: np.ndarray  # (T, H)
    c: np.ndarray  # (T, H)
    gates: np.ndarray  # (T, 4H) post-activation [i|f|o|g]

    def __len__(self) -> int:
        return self.x.shape[0]


@dataclass
class LstmGrads:
    wx: np.ndarray
    wh: np.ndarray
    b: np.ndarray


def lstm_cell_forward(x_t, h_prev, c_prev, params: LstmParams):
    """Single-step reference cell. Returns (h_t, c_t, gate vector (4H,))."""
    x_t = np.asarray(x_t, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    c_prev = np.asarray(c_prev, dtype=np.float64)
    hs = params.hidden_size
    if x_t.shape != (params.input_size,) or h_prev.shape != (hs,) or c_prev.shape != (hs,):
        raise ValueError(
            f"cell input shapes {x_t.shape}/{h_prev.shape}/{c_prev.shape} do not "
            f"match params ({params.input_size}, {hs})"
        )
    pre = params.wx @ x_t + params.wh @ h_prev + params.b
    i = _sigmoid(pre[:hs])
    f = _sigmoid(pre[hs : 2 * hs])
    o = _sigmoid(pre[2 * hs : 3 * hs])
    g = np.tanh(pre[3 * hs :])
    c_t = f * c_prev + i * g
    h_t = o * np.tanh(c_t)
    return h_t, c_t, np.concatenate([i, f, o, g])


def lstm_forward(x: np.ndarray, params: LstmParams):
    """Left-to-right recurrence from zero state. Returns (H, tape)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("input must be a nonempty (T, D) sequence")
    if x.shape[1] != params.input_size:
        raise ValueError(f"input width {x.shape[1]} != params {params.input_size}")
    h, c, gates = backend.lstm_seq_forward(x, params.wx, params.wh, params.b)
    return h, LstmTape(x, h, c, gates)


def lstm_backward(tape: LstmTape, params: LstmParams, dh_out: np.ndarray):
    """Gradients of a scalar loss given d loss / d h_t for every step.

    Returns (LstmGrads, d_input (T, D)).
    """
    dh_out = np.ascontiguousarray(dh_out, dtype=np.float64)
    if dh_out.shape != tape.h.shape:
        raise ValueError(
            f"upstream gradient shape {dh_out.shape} does not match tape {tape.h.shape}"
        )
    dx, dwx, dwh, db = backend.lstm_seq_backward(
        tape.x, params.wx, params.wh, tape.h, tape.c, tape.gates, dh_out
    )
    return LstmGrads(dwx, dwh, db), dx


@dataclass
class BiLstmTape:
    fwd: LstmTape
    bwd: LstmTape  # run on the reversed input; stored in run order


def bilstm_forward(x: np.ndarray, params: BiLstmParams):
    """Concatenated forward and backward hidden states at original positions.

    Output width is 2 * hidden; column block [0, H) is the forward run and
    [H, 2H) the re-reversed backward run.
    """
    h_f, tape_f = lstm_forward(x, params.fwd)
    h_b_rev, tape_b = lstm_forward(np.ascontiguousarray(x[::-1]), params.bwd)
    h_b = h_b_rev[::-1]
    return np.concatenate([h_f, h_b], axis=1), BiLstmTape(tape_f, tape_b)


def bilstm_backward(tape: BiLstmTape, params: BiLstmParams, dh_cat: np.ndarray):
    """Backprop through bilstm_forward. Returns (grads_fwd, grads_bwd, d_input)."""
    hs = params.hidden_size
    if dh_cat.shape[1] != 2 * hs:
        raise ValueError(f"upstream width {dh_cat.shape[1]} != 2*hidden {2 * hs}")
    grads_f, dx_f = lstm_backward(tape.fwd, params.fwd, dh_cat[:, :hs])
    grads_b, dx_b_rev = lstm_backward(
        tape.bwd, params.bwd, np.ascontiguousarray(dh_cat[::-1, hs:])
    )
    return grads_f, grads_b, dx_f + dx_b_rev[::-1]


SPACE = " "


def char_stream(tokens) -> tuple[list[str], list[tuple[int, int]]]:
    """Sentence-level character stream with a space between adjacent words.

    Returns (characters, bounds) where bounds[i] = (first, last) stream
    indices of word i, inclusive.
    """
    if not tokens:
        raise ValueError("empty sentence")
    chars: list[str] = []
    bounds: list[tuple[int, int]] = []
    for w, tok in enumerate(tokens):
        if not tok:
            raise ValueError(f"empty token at position {w}")
        if w > 0:
            chars.append(SPACE)
        start = len(chars)
        chars.extend(tok)
        bounds.append((start, len(chars) - 1))
    return chars, bounds


def char_word_representation(bounds, h_fwd: np.ndarray, h_bwd: np.ndarray) -> np.ndarray:
    """Per-word vectors [forward state at last char || backward state at first char]."""
    T = h_fwd.shape[0]
    rows = []
    for a, b in bounds:
        if not (0 <= a <= b < T):
            raise ValueError(f"word boundary ({a}, {b}) outside stream of length {T}")
        rows.append(np.concatenate([h_fwd[b], h_bwd[a]]))
    return np.stack(rows)


def char_word_representation_backward(d_rep: np.ndarray, bounds, stream_len: int):
    """Scatter per-word gradients back onto the two stream state sequences."""
    hs = d_rep.shape[1] // 2
    dh_fwd = np.zeros((stream_len, hs), dtype=np.float64)
    dh_bwd = np.zeros((stream_len, hs), dtype=np.float64)
    for i, (a, b) in enumerate(bounds):
        dh_fwd[b] += d_rep[i, :hs]
        dh_bwd[a] += d_rep[i, hs:]
    return dh_fwd, dh_bwd
