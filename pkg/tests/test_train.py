import numpy as np
import pytest

from conftest import ENTITY_WORDS, synth_corpus
from mtner.model import (
    Dims,
    ShareMode,
    TaskSpec,
    build_model,
)
from mtner.train import (
    TaskData,
    TrainConfig,
    TrainingDiverged,
    evaluate_split,
    lr_at,
    round_robin_schedule,
    train,
)
from mtner.vocab import EmbeddingTable, build_vocab

LABELS = ["O", "B-G", "I-G", "E-G", "S-G"]


def _setup(mode, corpora, seed=0, hidden=6, lam=None):
    """corpora: list of (train_sentences, dev_sentences) per task."""
    tasks = [
        TaskSpec(f"t{i}", LABELS, lam=1.0 if lam is None else lam[i])
        for i in range(len(corpora))
    ]
    all_sents = [s.tokens for tr, dv in corpora for s in tr + dv]
    vocab = build_vocab([all_sents], min_freq=1)
    dims = Dims(char_dim=4, word_dim=6, char_hidden=hidden, word_hidden=hidden)
    rng = np.random.default_rng([seed, 11])
    emb = EmbeddingTable.random(vocab.size, dims.word_dim, rng)
    params = build_model(mode, tasks, dims, vocab, emb,
                         np.random.default_rng([seed, 12]))
    data = [
        TaskData(f"t{i}", list(tr), list(dv))
        for i, (tr, dv) in enumerate(corpora)
    ]
    return params, data


def _tiny_corpus(seed, n_train=12, n_dev=4, entities=None):
    rng = np.random.default_rng([seed, 31])
    entities = entities or ENTITY_WORDS[:6]
    sents = synth_corpus(rng, n_train + n_dev, entities, "t0")
    return sents[:n_train], sents[n_train:]


class TestLrSchedule:
    def test_epoch_zero_is_lr0(self):
        assert lr_at(0, TrainConfig()) == 0.01

    def test_epoch_one_decayed(self):
        assert abs(lr_at(1, TrainConfig()) - 0.01 / 1.05) < 1e-12
        assert abs(lr_at(1, TrainConfig()) - 0.0095238) < 1e-7

    def test_zero_decay_constant(self):
        cfg = TrainConfig(decay=0.0)
        assert lr_at(0, cfg) == lr_at(50, cfg) == 0.01

    def test_strictly_decreasing(self):
        cfg = TrainConfig()
        rates = [lr_at(e, cfg) for e in range(20)]
        assert all(a > b for a, b in zip(rates, rates[1:]))

    def test_negative_epoch_rejected(self):
        with pytest.raises(ValueError):
            lr_at(-1, TrainConfig())


class TestConfigValidation:
    def test_defaults_valid(self):
        TrainConfig()

    @pytest.mark.parametrize("kwargs", [
        {"lr0": 0.0},
        {"decay": -0.1},
        {"patience": 0},
        {"batch_size": 0},
        {"max_epochs": 0},
        {"dropout": 1.0},
        {"clip_norm": 0.0},
    ])
    def test_bad_values_rejected(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


class TestRoundRobin:
    def test_equal_sizes_alternate(self):
        sched = round_robin_schedule([4, 4], 2, 0)
        assert [t for t, _ in sched] == [0, 1, 0, 1]

    def test_exhausted_task_drops_out(self):
        sched = round_robin_schedule([6, 2], 2, 0)
        assert [t for t, _ in sched] == [0, 1, 0, 0]

    def test_every_index_once(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            sizes = [int(rng.integers(1, 15)) for _ in range(int(rng.integers(1, 4)))]
            bs = int(rng.integers(1, 5))
            sched = round_robin_schedule(sizes, bs, int(rng.integers(0, 100)))
            seen = [set() for _ in sizes]
            for t, idxs in sched:
                for i in idxs:
                    assert i not in seen[t]
                    seen[t].add(i)
            for t, size in enumerate(sizes):
                assert seen[t] == set(range(size))

    def test_seeded_shuffle_reproducible(self):
        a = round_robin_schedule([9, 5], 3, 42)
        b = round_robin_schedule([9, 5], 3, 42)
        assert [(t, list(i)) for t, i in a] == [(t, list(i)) for t, i in b]
        c = round_robin_schedule([9, 5], 3, 43)
        assert [(t, list(i)) for t, i in a] != [(t, list(i)) for t, i in c]


class TestTraining:
    CFG = dict(lr0=0.05, decay=0.05, max_epochs=4, patience=10,
               batch_size=4, dropout=0.0)

    def test_deterministic_reports(self):
        tr, dv = _tiny_corpus(0)
        runs = []
        for _ in range(2):
            params, data = _setup(ShareMode.SINGLE, [(tr, dv)], seed=1)
            _, report = train(params, data, TrainConfig(seed=1, **self.CFG))
            runs.append(report.to_jsonl())
        assert runs[0] == runs[1]

    def test_loss_decreases_on_easy_data(self):
        tr, dv = _tiny_corpus(2)
        params, data = _setup(ShareMode.SINGLE, [(tr, dv)], seed=2)
        _, report = train(params, data, TrainConfig(seed=2, **self.CFG))
        losses = [r.task_loss["t0"] for r in report.epochs]
        assert losses[-1] < losses[0]

    def test_best_state_restored_and_reproducible(self):
        tr, dv = _tiny_corpus(3)
        params, data = _setup(ShareMode.SINGLE, [(tr, dv)], seed=3)
        params, report = train(params, data, TrainConfig(seed=3, **self.CFG))
        best = report.epochs[report.best_epoch]
        rescored = evaluate_split(params, "t0", dv)
        assert rescored.macro_f1 == best.dev["t0"].macro_f1
        assert rescored.f1 == best.dev["t0"].f1

    def test_mtm_cw_single_task_equals_stm(self):
        tr, dv = _tiny_corpus(4)
        cfg = TrainConfig(seed=4, **self.CFG)
        p_stm, d_stm = _setup(ShareMode.SINGLE, [(tr, dv)], seed=4)
        _, r_stm = train(p_stm, d_stm, cfg)
        p_mtm, d_mtm = _setup(ShareMode.SHARED_ALL, [(tr, dv)], seed=4)
        _, r_mtm = train(p_mtm, d_mtm, cfg)
        assert r_stm.to_jsonl() == r_mtm.to_jsonl()
        stm_arrays = p_stm.named_params()
        mtm_arrays = p_mtm.named_params()
        # block names differ (char0 vs char); contents must not
        for (na, a), (nb, b) in zip(sorted(stm_arrays.items()),
                                    sorted(mtm_arrays.items())):
            assert np.array_equal(a, b), (na, nb)

    def test_twin_tasks_converge_together(self):
        # identical data under mtm-cw: the two heads must land within noise
        tr, dv = _tiny_corpus(5, n_train=10, n_dev=5)
        params, data = _setup(ShareMode.SHARED_ALL, [(tr, dv), (tr, dv)], seed=5)
        cfg = TrainConfig(seed=5, lr0=0.1, decay=0.05, max_epochs=40,
                          patience=40, batch_size=5, dropout=0.0)
        _, report = train(params, data, cfg)
        best = report.epochs[report.best_epoch]
        assert best.dev["t0"].f1 > 0.5  # actually learned something
        assert abs(best.dev["t0"].f1 - best.dev["t1"].f1) <= 0.02

    def test_divergence_detected(self):
        tr, dv = _tiny_corpus(6)
        params, data = _setup(ShareMode.SINGLE, [(tr, dv)], seed=6)
        params.heads[0].proj_w[0, 0] = np.nan  # poison one parameter
        with pytest.raises(TrainingDiverged, match="non-finite"):
            train(params, data, TrainConfig(seed=6, **self.CFG))

    def test_early_stop_flag(self):
        tr, dv = _tiny_corpus(7)
        params, data = _setup(ShareMode.SINGLE, [(tr, dv)], seed=7)
        cfg = TrainConfig(seed=7, lr0=1e-6, decay=0.0, max_epochs=50,
                          patience=2, batch_size=4, dropout=0.0)
        _, report = train(params, data, cfg)
        assert report.stopped_early
        assert len(report.epochs) < 50

    def test_task_order_mismatch_rejected(self):
        tr, dv = _tiny_corpus(8)
        params, data = _setup(ShareMode.SINGLE, [(tr, dv)], seed=8)
        data[0] = TaskData("other", data[0].train, data[0].dev)
        with pytest.raises(ValueError, match="task"):
            train(params, data, TrainConfig(**self.CFG))

    def test_empty_split_rejected(self):
        tr, dv = _tiny_corpus(9)
        params, data = _setup(ShareMode.SINGLE, [(tr, dv)], seed=9)
        data[0] = TaskData("t0", data[0].train, [])
        with pytest.raises(ValueError, match="nonempty"):
            train(params, data, TrainConfig(**self.CFG))

    def test_report_serialization_shape(self):
        tr, dv = _tiny_corpus(10)
        params, data = _setup(ShareMode.SINGLE, [(tr, dv)], seed=10)
        _, report = train(params, data, TrainConfig(seed=10, **self.CFG))
        lines = report.to_jsonl().strip().split("\n")
        assert len(lines) == len(report.epochs) + 1
        import json

        summary = json.loads(lines[-1])["summary"]
        assert summary["best_epoch"] == report.best_epoch
        assert "wall" not in lines[-1]  # timing never serialized

    def test_shared_blocks_stay_aliased_after_training(self):
        tr, dv = _tiny_corpus(11)
        params, data = _setup(ShareMode.SHARED_ALL, [(tr, dv), (tr, dv)], seed=11)
        train(params, data, TrainConfig(seed=11, **self.CFG))
        assert params.char_blocks[0] is params.char_blocks[1]
        assert params.word_blocks[0] is params.word_blocks[1]
