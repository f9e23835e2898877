"""SGD training: decayed learning rate, round-robin task interleaving,
dev-set model selection, early stopping.

Determinism contract: given the same model, data, and config (seed included),
two runs produce bit-identical parameter trajectories and reports. All
randomness flows from per-epoch generators seeded with [seed, epoch]; the
wall clock is kept out of the serialized report for that reason.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .data import LabeledSentence, tags_to_spans
from .evaluate import ScoreTriple, macro_f1, score_by_type
from .mathutil import as_rng, clip_global_norm
from .model import ParamSet, multi_task_loss, predict_tags

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; training state is unusable."""


@dataclass
class TrainConfig:
    lr0: float = 0.01
    decay: float = 0.05
    max_epochs: int = 100
    patience: int = 10
    batch_size: int = 10
    seed: int = 0
    dropout: float = 0.5
    clip_norm: float | None = 5.0
    stop_train_f1: float | None = None  # stop once train macro-F1 reaches this

    def __post_init__(self):
        if not self.lr0 > 0:
            raise ValueError("lr0 must be > 0")
        if self.decay < 0:
            raise ValueError("decay must be >= 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ValueError("clip_norm must be > 0 or None")


def lr_at(epoch: int, config: TrainConfig) -> float:
    """Epoch-decayed learning rate lr0 / (1 + decay * epoch), epoch 0-based."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return config.lr0 / (1.0 + config.decay * epoch)


def round_robin_schedule(task_sizes, batch_size: int, seed_or_rng):
    """Interleaved batch order for one epoch.

    Each task's indices are shuffled (seeded), split into batches, and the
    batches alternate task 0, 1, ..., m-1, 0, ...; a task that runs out of
    batches drops from the rotation. Returns [(task_index, index list), ...]
    covering every index of every task exactly once.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    rng = as_rng(seed_or_rng)
    per_task = []
    for size in task_sizes:
        if size < 1:
            raise ValueError("every task needs at least one training sentence")
        perm = rng.permutation(size)
        per_task.append([perm[i : i + batch_size].tolist()
                         for i in range(0, size, batch_size)])
    schedule = []
    rounds = max(len(b) for b in per_task)
    for r in range(rounds):
        for ti, batches in enumerate(per_task):
            if r < len(batches):
                schedule.append((ti, batches[r]))
    return schedule


@dataclass
class TaskData:
    """Train/dev sentences for one task, with optional per-sentence features."""

    task_id: str
    train: list[LabeledSentence]
    dev: list[LabeledSentence]
    train_feats: list[np.ndarray] | None = None
    dev_feats: list[np.ndarray] | None = None


@dataclass
class TaskScore:
    precision: float
    recall: float
    f1: float
    macro_f1: float

    def as_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "macro_f1": self.macro_f1,
        }


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    task_loss: dict[str, float]
    dev: dict[str, TaskScore]

    @property
    def selection_metric(self) -> float:
        """Mean over tasks of dev macro-F1; what model selection maximizes."""
        return sum(s.macro_f1 for s in self.dev.values()) / len(self.dev)


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    best_metric: float = float("-inf")
    stopped_early: bool = False
    wall_time_s: float = 0.0  # informational; excluded from serialization

    def to_jsonl(self) -> str:
        """One record per epoch plus a summary line. Deterministic bytes."""
        lines = []
        for rec in self.epochs:
            lines.append(json.dumps({
                "epoch": rec.epoch,
                "lr": rec.lr,
                "loss": rec.task_loss,
                "dev": {tid: s.as_dict() for tid, s in rec.dev.items()},
            }, sort_keys=True))
        lines.append(json.dumps({
            "summary": {
                "epochs_run": len(self.epochs),
                "best_epoch": self.best_epoch,
                "best_metric": self.best_metric,
                "stopped_early": self.stopped_early,
            }
        }, sort_keys=True))
        return "\n".join(lines) + "\n"


def evaluate_split(params: ParamSet, task_id: str, sentences, feats=None,
                   postprocess=None) -> TaskScore:
    """Exact-match scores of fresh predictions against the sentences' tags."""
    preds = []
    golds = []
    for i, sent in enumerate(sentences):
        f = None if feats is None else feats[i]
        tags = predict_tags(params, task_id, sent.tokens, f)
        if postprocess is not None:
            tags = postprocess(tags, sent.tokens)
        preds.append(tags_to_spans(tags))
        golds.append(tags_to_spans(sent.tags))
    per_type = score_by_type(preds, golds)
    pooled = ScoreTriple.zero()
    for triple in per_type.values():
        pooled = pooled + triple
    return TaskScore(pooled.precision, pooled.recall, pooled.f1, macro_f1(per_type))


def train(params: ParamSet, data: list[TaskData], config: TrainConfig,
          postprocess: dict | None = None) -> tuple[ParamSet, TrainReport]:
    """Train in place; params end at the best-dev-epoch state.

    `data` must cover exactly the tasks in params, in the same order.
    `postprocess` optionally maps task_id to a tags-transform applied before
    dev scoring (so recorded dev F1 matches downstream tagging output).
    """
    ids = [t.task_id for t in params.tasks]
    if [d.task_id for d in data] != ids:
        raise ValueError(
            f"task data {[d.task_id for d in data]} does not match model tasks {ids}"
        )
    for d in data:
        if not d.train or not d.dev:
            raise ValueError(f"task {d.task_id}: train and dev must be nonempty")

    arrays = params.named_params()
    frozen = {n: params.frozen_row_mask(n) for n in arrays}
    report = TrainReport()
    best_state: dict[str, np.ndarray] = {}
    since_best = 0
    t_start = time.monotonic()

    for epoch in range(config.max_epochs):
        lr = lr_at(epoch, config)
        rng = np.random.default_rng([config.seed, epoch])
        schedule = round_robin_schedule(
            [len(d.train) for d in data], config.batch_size, rng
        )
        loss_sum = {tid: 0.0 for tid in ids}
        loss_n = {tid: 0 for tid in ids}
        for ti, idxs in schedule:
            d = data[ti]
            batch = [(d.task_id, d.train[i]) for i in idxs]
            feats = None
            if d.train_feats is not None:
                feats = [d.train_feats[i] for i in idxs]
            loss, grads = multi_task_loss(params, batch, feats, config.dropout, rng)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss {loss} at epoch {epoch}, task {d.task_id}"
                )
            loss_sum[d.task_id] += loss
            loss_n[d.task_id] += len(batch)
            scale = 1.0 / len(batch)
            for g in grads.values():
                g *= scale
            for name, g in grads.items():
                mask = frozen[name]
                if mask is not None:
                    g[mask] = 0.0
            if config.clip_norm is not None:
                clip_global_norm(grads, config.clip_norm)
            # in-place update keeps shared blocks aliased
            for name, g in grads.items():
                arrays[name] -= lr * g

        dev_scores = {}
        for d in data:
            hook = None if postprocess is None else postprocess.get(d.task_id)
            dev_scores[d.task_id] = evaluate_split(
                params, d.task_id, d.dev, d.dev_feats, hook
            )
        record = EpochRecord(
            epoch, lr,
            {tid: loss_sum[tid] / max(loss_n[tid], 1) for tid in ids},
            dev_scores,
        )
        report.epochs.append(record)
        metric = record.selection_metric
        if metric > report.best_metric:
            report.best_metric = metric
            report.best_epoch = epoch
            best_state = {n: a.copy() for n, a in arrays.items()}
            since_best = 0
        else:
            since_best += 1
        log.info(
            "epoch %d lr %.6f dev %s", epoch, lr,
            " ".join(f"{tid}={s.f1:.4f}" for tid, s in dev_scores.items()),
        )

        if config.stop_train_f1 is not None:
            train_f1 = sum(
                evaluate_split(params, d.task_id, d.train, d.train_feats).macro_f1
                for d in data
            ) / len(data)
            if train_f1 >= config.stop_train_f1:
                # reaching the train target makes the current state final,
                # overriding dev-based selection
                log.info("train macro-F1 %.4f reached target, stopping", train_f1)
                report.best_epoch = epoch
                report.best_metric = metric
                best_state = {n: a.copy() for n, a in arrays.items()}
                break
        if since_best >= config.patience:
            report.stopped_early = True
            break

    if best_state:
        for name, arr in arrays.items():
            arr[...] = best_state[name]
    report.wall_time_s = time.monotonic() - t_start
    return params, report
