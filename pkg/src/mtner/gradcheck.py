"""Finite-difference verification of the full model gradient.

Builds tiny random worlds (small dims, short sentences) for each sharing
mode, computes analytic gradients through the hand-written backward pass,
and compares every coordinate against central differences of the
forward-only loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LabeledSentence
from .mathutil import as_rng, grad_check_blocks
from .model import (
    Dims,
    ParamSet,
    ShareMode,
    TaskSpec,
    build_model,
    multi_task_loss,
    sentence_nll,
)
from .vocab import EmbeddingTable, build_vocab

PASS_THRESHOLD = 1e-4

ALPHABET = "abc"


def _random_token(rng) -> str:
    return "".join(rng.choice(list(ALPHABET), size=rng.integers(1, 4)))


def _random_sentence(rng, task: TaskSpec, max_words: int) -> LabeledSentence:
    n = int(rng.integers(2, max_words + 1))
    tokens = [_random_token(rng) for _ in range(n)]
    tags = [task.labels[i] for i in rng.integers(0, task.n_labels, size=n)]
    return LabeledSentence(tokens, tags, task.task_id)


@dataclass
class CheckWorld:
    params: ParamSet
    batch: list[tuple[str, LabeledSentence]]


def build_world(mode: ShareMode, seed: int, hidden: int = 2,
                max_words: int = 3) -> CheckWorld:
    """A small random model plus one labeled sentence per task."""
    if hidden > 8:
        raise ValueError(f"check worlds cap hidden at 8, got {hidden}")
    rng = as_rng([seed, 101])
    n_tasks = 1 if mode == ShareMode.SINGLE else 2
    tags = ["O", "B-X", "I-X", "E-X", "S-X"]
    tasks = [
        TaskSpec(f"t{i}", tags, lam=1.0 if i == 0 else 1.7)
        for i in range(n_tasks)
    ]
    sentences = [_random_sentence(rng, t, max_words) for t in tasks]
    vocab = build_vocab([[s.tokens] for s in sentences], min_freq=1)
    dims = Dims(char_dim=2, word_dim=2, char_hidden=hidden, word_hidden=hidden)
    emb = EmbeddingTable.random(vocab.size, dims.word_dim, rng)
    params = build_model(mode, tasks, dims, vocab, emb, rng)
    batch = [(t.task_id, s) for t, s in zip(tasks, sentences)]
    return CheckWorld(params, batch)


# Coordinates where analytic and numeric gradients are both below this are
# treated as zero. The check losses reach ~20, so float64 central differences
# resolve derivatives only down to ~1e-16 * 20 / 1e-4 = 2e-11; against the
# 1e-8 denominator guard that noise alone reads as ~2e-3. True gradients at
# the 1e-7 scale are indistinguishable from zero here and carry no signal.
NOISE_FLOOR = 3e-7


def check_world(world: CheckWorld, epsilon=(1e-4, 1e-5),
                sabotage: bool = False) -> dict[str, float]:
    """Max relative error per parameter block for one world."""
    _, grads = multi_task_loss(world.params, world.batch)
    arrays = world.params.named_params()
    for name, arr in arrays.items():
        if name not in grads:
            grads[name] = np.zeros_like(arr)
    if sabotage:
        # deliberate corruption, used as a negative control
        first = sorted(grads)[0]
        grads[first] = grads[first] * 1.5 + 1e-3

    lams = {t.task_id: t.lam for t in world.params.tasks}

    def loss_fn(_params):
        return sum(
            lams[tid] * sentence_nll(world.params, tid, sent)
            for tid, sent in world.batch
        )

    return grad_check_blocks(loss_fn, arrays, grads, epsilon,
                             noise_floor=NOISE_FLOOR)


def check_mode(mode: ShareMode, n_seeds: int = 20, epsilon=(1e-4, 1e-5),
               hidden: int = 2, max_words: int = 3,
               sabotage: bool = False) -> dict[str, float]:
    """Worst relative error per block across n_seeds random worlds."""
    worst: dict[str, float] = {}
    for seed in range(n_seeds):
        world = build_world(mode, seed, hidden, max_words)
        for name, err in check_world(world, epsilon, sabotage).items():
            if err > worst.get(name, 0.0):
                worst[name] = err
    return worst


def run_all(modes=None, n_seeds: int = 20, epsilon=(1e-4, 1e-5),
            hidden: int = 2, max_words: int = 3,
            sabotage: bool = False) -> dict[str, dict[str, float]]:
    """Per-mode, per-block worst errors; the full verification sweep."""
    if modes is None:
        modes = list(ShareMode)
    return {
        m.value: check_mode(m, n_seeds, epsilon, hidden, max_words, sabotage)
        for m in modes
    }
