"""Sequence-labeling model: char BiLSTM -> word BiLSTM -> per-task CRF.

Parameters are partitioned into a character-level block, a word-level block,
and per-task output heads. A ShareMode decides which blocks are one aliased
object across tasks; heads are always task-private. Gradients are accumulated
into plain dicts keyed by canonical parameter names, so shared blocks sum
contributions from every task naturally.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import crf
from .data import LabeledSentence
from .lstm import (
    BiLstmParams,
    BiLstmTape,
    bilstm_backward,
    bilstm_forward,
    char_stream,
    char_word_representation,
    char_word_representation_backward,
)
from .mathutil import as_rng, xavier_init
from .vocab import EmbeddingTable, Vocab


class ShareMode(Enum):
    """Which trunk blocks are aliased across tasks (heads never are)."""

    SINGLE = "stm"
    SHARED_CHAR = "mtm-c"
    SHARED_WORD = "mtm-w"
    SHARED_ALL = "mtm-cw"

    @property
    def share_char(self) -> bool:
        return self in (ShareMode.SHARED_CHAR, ShareMode.SHARED_ALL)

    @property
    def share_word(self) -> bool:
        return self in (ShareMode.SHARED_WORD, ShareMode.SHARED_ALL)

    @classmethod
    def parse(cls, text: str) -> "ShareMode":
        try:
            return cls(text.strip().lower())
        except ValueError:
            options = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown mode {text!r} (choose from: {options})") from None


@dataclass
class TaskSpec:
    task_id: str
    labels: list[str]  # IOBES tag strings, fixed order defines label ids
    lam: float = 1.0  # loss weight for this task

    def __post_init__(self):
        if not self.task_id:
            raise ValueError("empty task_id")
        if not self.labels:
            raise ValueError(f"task {self.task_id}: empty label set")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"task {self.task_id}: duplicate labels")
        if not self.lam > 0:
            raise ValueError(f"task {self.task_id}: loss weight must be > 0")
        self.label_to_id = {t: i for i, t in enumerate(self.labels)}

    @property
    def n_labels(self) -> int:
        return len(self.labels)


@dataclass
class Dims:
    char_dim: int = 30
    word_dim: int = 200
    char_hidden: int = 200
    word_hidden: int = 200
    dict_dim: int = 0  # width of per-token dictionary features, 0 disables

    def __post_init__(self):
        for name in ("char_dim", "word_dim", "char_hidden", "word_hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.dict_dim < 0:
            raise ValueError("dict_dim must be >= 0")

    @property
    def word_input(self) -> int:
        return 2 * self.char_hidden + self.word_dim + self.dict_dim


@dataclass
class CharBlock:
    """Character-level parameters: embedding table + BiLSTM."""

    emb: np.ndarray  # (n_chars, char_dim), fully trainable
    bilstm: BiLstmParams


@dataclass
class WordBlock:
    """Word-level parameters: embedding table + BiLSTM over word vectors."""

    emb: EmbeddingTable
    bilstm: BiLstmParams


@dataclass
class TaskHead:
    """Task-private output: linear projection to emissions + transitions."""

    proj_w: np.ndarray  # (k, 2 * word_hidden)
    proj_b: np.ndarray  # (k,)
    trans: np.ndarray  # (k + 2, k + 2), start/end rows at k and k + 1


@dataclass
class ParamSet:
    mode: ShareMode
    tasks: list[TaskSpec]
    dims: Dims
    vocab: Vocab
    char_blocks: list[CharBlock]  # one entry per task; same object when shared
    word_blocks: list[WordBlock]
    heads: list[TaskHead]

    def task_index(self, task_id: str) -> int:
        for i, t in enumerate(self.tasks):
            if t.task_id == task_id:
                return i
        known = ", ".join(t.task_id for t in self.tasks)
        raise KeyError(f"unknown task {task_id!r} (known: {known})")

    # canonical block names: a shared block drops the task suffix, so every
    # distinct array object has exactly one name
    def char_name(self, i: int) -> str:
        return "char" if self.mode.share_char else f"char{i}"

    def word_name(self, i: int) -> str:
        return "word" if self.mode.share_word else f"word{i}"

    def named_params(self) -> dict[str, np.ndarray]:
        """All parameter tensors, one entry per distinct array."""
        out: dict[str, np.ndarray] = {}
        for i, cb in enumerate(self.char_blocks):
            name = self.char_name(i)
            if f"{name}.emb" in out:
                continue
            out[f"{name}.emb"] = cb.emb
            for tag, p in (("fw", cb.bilstm.fwd), ("bw", cb.bilstm.bwd)):
                out[f"{name}.{tag}.wx"] = p.wx
                out[f"{name}.{tag}.wh"] = p.wh
                out[f"{name}.{tag}.b"] = p.b
        for i, wb in enumerate(self.word_blocks):
            name = self.word_name(i)
            if f"{name}.emb" in out:
                continue
            out[f"{name}.emb"] = wb.emb.vectors
            for tag, p in (("fw", wb.bilstm.fwd), ("bw", wb.bilstm.bwd)):
                out[f"{name}.{tag}.wx"] = p.wx
                out[f"{name}.{tag}.wh"] = p.wh
                out[f"{name}.{tag}.b"] = p.b
        for i, head in enumerate(self.heads):
            out[f"head{i}.proj_w"] = head.proj_w
            out[f"head{i}.proj_b"] = head.proj_b
            out[f"head{i}.trans"] = head.trans
        return out

    def partition_of(self, name: str) -> str:
        """Ownership partition for a canonical parameter name."""
        block = name.split(".", 1)[0]
        if block.startswith("char"):
            return "char"
        if block.startswith("word"):
            return "word"
        if block.startswith("head"):
            return f"out[{block[4:]}]"
        raise KeyError(f"unknown parameter {name!r}")

    def frozen_row_mask(self, name: str) -> np.ndarray | None:
        """Boolean per-row mask of rows that must not be updated, or None."""
        if name.split(".", 1)[0].startswith("word") and name.endswith(".emb"):
            i = 0 if self.mode.share_word else int(name.split(".", 1)[0][4:])
            return ~self.word_blocks[i].emb.trainable_mask
        return None

    def trainable_count(self) -> int:
        total = 0
        for name, arr in self.named_params().items():
            frozen = self.frozen_row_mask(name)
            if frozen is None:
                total += arr.size
            else:
                total += int((~frozen).sum()) * arr.shape[1]
        return total


def build_model(mode: ShareMode, tasks: list[TaskSpec], dims: Dims, vocab: Vocab,
                embeddings: EmbeddingTable, seed_or_rng=0) -> ParamSet:
    """Allocate all parameters with the aliasing the mode dictates.

    Draw order is fixed (char blocks, word blocks, heads, each in task order
    with shared blocks drawn once), so a given seed yields identical shared
    parameters regardless of task count.
    """
    if not tasks:
        raise ValueError("need at least one task")
    ids = [t.task_id for t in tasks]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate task ids: {ids}")
    if mode == ShareMode.SINGLE and len(tasks) != 1:
        raise ValueError(f"single-task mode requires exactly 1 task, got {len(tasks)}")
    if embeddings.dim != dims.word_dim:
        raise ValueError(
            f"embedding width {embeddings.dim} != configured word_dim {dims.word_dim}"
        )
    if embeddings.size != vocab.size:
        raise ValueError(
            f"embedding rows {embeddings.size} != vocab size {vocab.size}"
        )
    rng = as_rng(seed_or_rng)

    def new_char_block() -> CharBlock:
        emb = rng.standard_normal((vocab.char_size, dims.char_dim)) * 0.1
        return CharBlock(emb, BiLstmParams.init(dims.char_dim, dims.char_hidden, rng))

    def new_word_block() -> WordBlock:
        table = EmbeddingTable(embeddings.vectors.copy(), embeddings.trainable_mask.copy())
        return WordBlock(table, BiLstmParams.init(dims.word_input, dims.word_hidden, rng))

    m = len(tasks)
    if mode.share_char:
        shared = new_char_block()
        char_blocks = [shared] * m
    else:
        char_blocks = [new_char_block() for _ in range(m)]
    if mode.share_word:
        shared = new_word_block()
        word_blocks = [shared] * m
    else:
        word_blocks = [new_word_block() for _ in range(m)]

    heads = []
    for t in tasks:
        k = t.n_labels
        heads.append(
            TaskHead(
                proj_w=xavier_init(k, 2 * dims.word_hidden, rng),
                proj_b=np.zeros(k),
                trans=np.zeros((k + 2, k + 2)),
            )
        )
    return ParamSet(mode, list(tasks), dims, vocab, char_blocks, word_blocks, heads)


# ---------------------------------------------------------------------------
# Forward / backward


def dropout_mask(shape, rate: float, rng) -> np.ndarray:
    """Inverted-dropout multiplier: zeros with probability rate, else 1/keep."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    keep = 1.0 - rate
    return (rng.random(shape) < keep).astype(np.float64) / keep


@dataclass
class ForwardTape:
    """Everything the backward pass needs, cached from one forward run."""

    task_index: int
    char_ids: np.ndarray
    bounds: list[tuple[int, int]]
    word_ids: np.ndarray
    char_x: np.ndarray
    char_tape: BiLstmTape
    char_cat: np.ndarray  # (T, 2 * char_hidden)
    rep_mask: np.ndarray | None  # dropout multiplier on the word char-rep
    word_x: np.ndarray  # (n, word_input) post-dropout char rep included
    word_tape: BiLstmTape
    word_cat: np.ndarray  # (n, 2 * word_hidden) pre-dropout
    out_mask: np.ndarray | None
    emissions: np.ndarray  # (n, k)


def _encode(params: ParamSet, ti: int, tokens, dict_feats=None,
            dropout: float = 0.0, rng=None) -> ForwardTape:
    dims = params.dims
    cb, wb, head = params.char_blocks[ti], params.word_blocks[ti], params.heads[ti]

    chars, bounds = char_stream(tokens)
    char_ids = np.array([params.vocab.char_id(c) for c in chars], dtype=np.intp)
    char_x = cb.emb[char_ids]
    char_cat, char_tape = bilstm_forward(char_x, cb.bilstm)
    hc = dims.char_hidden
    rep = char_word_representation(bounds, char_cat[:, :hc], char_cat[:, hc:])

    rep_mask = out_mask = None
    if dropout > 0.0:
        if rng is None:
            raise ValueError("dropout requires an rng")
        rep_mask = dropout_mask(rep.shape, dropout, rng)
        rep = rep * rep_mask

    word_ids = np.array([params.vocab.word_id(t) for t in tokens], dtype=np.intp)
    pieces = [rep, wb.emb.vectors[word_ids]]
    if dims.dict_dim:
        if dict_feats is None:
            raise ValueError("model configured with dictionary features but none given")
        dict_feats = np.asarray(dict_feats, dtype=np.float64)
        if dict_feats.shape != (len(tokens), dims.dict_dim):
            raise ValueError(
                f"dictionary features {dict_feats.shape} != "
                f"({len(tokens)}, {dims.dict_dim})"
            )
        pieces.append(dict_feats)
    word_x = np.concatenate(pieces, axis=1)

    word_cat, word_tape = bilstm_forward(word_x, wb.bilstm)
    dropped = word_cat
    if dropout > 0.0:
        out_mask = dropout_mask(word_cat.shape, dropout, rng)
        dropped = word_cat * out_mask
    emissions = dropped @ head.proj_w.T + head.proj_b
    return ForwardTape(
        ti, char_ids, bounds, word_ids, char_x, char_tape, char_cat,
        rep_mask, word_x, word_tape, word_cat, out_mask, emissions,
    )


def forward_emissions(params: ParamSet, task_id: str, tokens,
                      dict_feats=None) -> np.ndarray:
    """Per-word label scores, shape (len(tokens), k_task). Inference mode."""
    if not tokens:
        raise ValueError("empty sentence")
    ti = params.task_index(task_id)
    return _encode(params, ti, tokens, dict_feats).emissions


def trunk_activations(params: ParamSet, task_id: str, tokens,
                      dict_feats=None) -> dict[str, np.ndarray]:
    """Pre-head activations, for probing what the sharing mode aliases."""
    ti = params.task_index(task_id)
    tape = _encode(params, ti, tokens, dict_feats)
    return {"char_cat": tape.char_cat, "word_x": tape.word_x, "word_cat": tape.word_cat}


def _accumulate(grads: dict, name: str, value, like: np.ndarray):
    if name not in grads:
        grads[name] = np.zeros_like(like)
    grads[name] += value


def _backward(params: ParamSet, tape: ForwardTape, d_emissions: np.ndarray,
              grads: dict[str, np.ndarray]) -> None:
    """Accumulate d loss / d params for one sentence into grads."""
    ti = tape.task_index
    cb, wb, head = params.char_blocks[ti], params.word_blocks[ti], params.heads[ti]
    cname, wname = params.char_name(ti), params.word_name(ti)
    dims = params.dims

    dropped = tape.word_cat if tape.out_mask is None else tape.word_cat * tape.out_mask
    _accumulate(grads, f"head{ti}.proj_w", d_emissions.T @ dropped, head.proj_w)
    _accumulate(grads, f"head{ti}.proj_b", d_emissions.sum(axis=0), head.proj_b)
    d_word_cat = d_emissions @ head.proj_w
    if tape.out_mask is not None:
        d_word_cat = d_word_cat * tape.out_mask

    gw_f, gw_b, d_word_x = bilstm_backward(tape.word_tape, wb.bilstm, d_word_cat)
    for tag, g in (("fw", gw_f), ("bw", gw_b)):
        _accumulate(grads, f"{wname}.{tag}.wx", g.wx, g.wx)
        _accumulate(grads, f"{wname}.{tag}.wh", g.wh, g.wh)
        _accumulate(grads, f"{wname}.{tag}.b", g.b, g.b)

    rep_width = 2 * dims.char_hidden
    d_rep = d_word_x[:, :rep_width]
    d_wvec = d_word_x[:, rep_width : rep_width + dims.word_dim]
    if f"{wname}.emb" not in grads:
        grads[f"{wname}.emb"] = np.zeros_like(wb.emb.vectors)
    np.add.at(grads[f"{wname}.emb"], tape.word_ids, d_wvec)

    if tape.rep_mask is not None:
        d_rep = d_rep * tape.rep_mask
    dh_fwd, dh_bwd = char_word_representation_backward(
        d_rep, tape.bounds, tape.char_cat.shape[0]
    )
    d_char_cat = np.concatenate([dh_fwd, dh_bwd], axis=1)
    gc_f, gc_b, d_char_x = bilstm_backward(tape.char_tape, cb.bilstm, d_char_cat)
    for tag, g in (("fw", gc_f), ("bw", gc_b)):
        _accumulate(grads, f"{cname}.{tag}.wx", g.wx, g.wx)
        _accumulate(grads, f"{cname}.{tag}.wh", g.wh, g.wh)
        _accumulate(grads, f"{cname}.{tag}.b", g.b, g.b)
    if f"{cname}.emb" not in grads:
        grads[f"{cname}.emb"] = np.zeros_like(cb.emb)
    np.add.at(grads[f"{cname}.emb"], tape.char_ids, d_char_x)


def _label_ids(task: TaskSpec, tags) -> np.ndarray:
    ids = []
    for tag in tags:
        if tag not in task.label_to_id:
            raise ValueError(
                f"tag {tag!r} not in task {task.task_id!r} label set {task.labels}"
            )
        ids.append(task.label_to_id[tag])
    return np.array(ids, dtype=np.intp)


def sentence_loss(params: ParamSet, task_id: str, sentence: LabeledSentence,
                  dict_feats=None, dropout: float = 0.0, rng=None,
                  grads: dict[str, np.ndarray] | None = None,
                  weight: float = 1.0) -> tuple[float, dict[str, np.ndarray]]:
    """Negative log-likelihood and its gradients for one labeled sentence.

    Gradients are accumulated into (and returned as) the grads dict, scaled
    by weight; only parameters on this task's computational path appear.
    """
    ti = params.task_index(task_id)
    task, head = params.tasks[ti], params.heads[ti]
    labels = _label_ids(task, sentence.tags)
    tape = _encode(params, ti, sentence.tokens, dict_feats, dropout, rng)

    ll, d_emis_ll, d_trans_ll = crf.crf_gradients(tape.emissions, head.trans, labels)
    loss = -ll
    if grads is None:
        grads = {}
    _accumulate(grads, f"head{ti}.trans", -weight * d_trans_ll, head.trans)
    _backward(params, tape, -weight * d_emis_ll, grads)
    return weight * loss, grads


def sentence_nll(params: ParamSet, task_id: str, sentence: LabeledSentence,
                 dict_feats=None, dropout: float = 0.0, rng_factory=None) -> float:
    """Forward-only loss, the function finite differences get applied to.

    rng_factory, when given, builds a fresh generator per call so dropout
    masks repeat exactly across repeated evaluations.
    """
    ti = params.task_index(task_id)
    task, head = params.tasks[ti], params.heads[ti]
    labels = _label_ids(task, sentence.tags)
    rng = rng_factory() if rng_factory is not None else None
    tape = _encode(params, ti, sentence.tokens, dict_feats, dropout, rng)
    return -crf.log_likelihood(tape.emissions, head.trans, labels)


def multi_task_loss(params: ParamSet, batch, dict_feats=None, dropout: float = 0.0,
                    rng=None) -> tuple[float, dict[str, np.ndarray]]:
    """Weighted sum over a batch of (task_id, sentence) pairs.

    Each sentence contributes lambda_task * its negative log-likelihood;
    dict_feats, when given, is a parallel sequence of feature matrices.
    """
    total = 0.0
    grads: dict[str, np.ndarray] = {}
    for idx, (task_id, sentence) in enumerate(batch):
        lam = params.tasks[params.task_index(task_id)].lam
        feats = None if dict_feats is None else dict_feats[idx]
        loss, _ = sentence_loss(
            params, task_id, sentence, feats, dropout, rng, grads, weight=lam
        )
        total += loss
    return total, grads


def predict_tags(params: ParamSet, task_id: str, tokens,
                 dict_feats=None) -> list[str]:
    """Most likely IOBES tag sequence under the task's CRF."""
    ti = params.task_index(task_id)
    emissions = forward_emissions(params, task_id, tokens, dict_feats)
    path, _ = crf.viterbi(emissions, params.heads[ti].trans)
    labels = params.tasks[ti].labels
    return [labels[i] for i in path]
