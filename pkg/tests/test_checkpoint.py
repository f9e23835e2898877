import numpy as np
import pytest

from mtner.checkpoint import load_checkpoint, save_checkpoint
from mtner.data import LabeledSentence
from mtner.model import (
    Dims,
    ShareMode,
    TaskSpec,
    build_model,
    forward_emissions,
)
from mtner.vocab import EmbeddingTable, build_vocab

LABELS = ["O", "B-X", "E-X", "S-X"]


def _model(mode, n_tasks, seed=0):
    tasks = [TaskSpec(f"t{i}", LABELS, lam=1.0) for i in range(n_tasks)]
    vocab = build_vocab([[["aa", "b"], ["ccc"]]], min_freq=1)
    dims = Dims(char_dim=2, word_dim=3, char_hidden=3, word_hidden=3)
    rng = np.random.default_rng(seed)
    emb = EmbeddingTable.random(vocab.size, 3, rng)
    return build_model(mode, tasks, dims, vocab, emb, rng)


@pytest.mark.parametrize("mode,n_tasks", [
    (ShareMode.SINGLE, 1),
    (ShareMode.SHARED_CHAR, 2),
    (ShareMode.SHARED_WORD, 2),
    (ShareMode.SHARED_ALL, 2),
])
def test_round_trip_bit_exact(tmp_path, mode, n_tasks):
    params = _model(mode, n_tasks)
    path = tmp_path / "model.npz"
    save_checkpoint(path, params)
    loaded = load_checkpoint(path)
    assert loaded.mode is mode
    assert [t.task_id for t in loaded.tasks] == [t.task_id for t in params.tasks]
    before = params.named_params()
    after = loaded.named_params()
    assert sorted(before) == sorted(after)
    for name in before:
        assert np.array_equal(before[name], after[name]), name
        assert after[name].dtype == np.float64


def test_round_trip_preserves_aliasing(tmp_path):
    params = _model(ShareMode.SHARED_ALL, 2)
    path = tmp_path / "model.npz"
    save_checkpoint(path, params)
    loaded = load_checkpoint(path)
    assert loaded.char_blocks[0] is loaded.char_blocks[1]
    assert loaded.word_blocks[0] is loaded.word_blocks[1]

    unshared = _model(ShareMode.SHARED_CHAR, 2)
    save_checkpoint(path, unshared)
    loaded = load_checkpoint(path)
    assert loaded.char_blocks[0] is loaded.char_blocks[1]
    assert loaded.word_blocks[0] is not loaded.word_blocks[1]


def test_round_trip_preserves_trainable_mask(tmp_path):
    params = _model(ShareMode.SINGLE, 1)
    params.word_blocks[0].emb.trainable_mask[1] = False
    path = tmp_path / "model.npz"
    save_checkpoint(path, params)
    loaded = load_checkpoint(path)
    assert not loaded.word_blocks[0].emb.trainable_mask[1]


def test_round_trip_reproduces_inference(tmp_path):
    params = _model(ShareMode.SHARED_ALL, 2, seed=9)
    sent = LabeledSentence(["aa", "ccc"], ["S-X", "O"], "t1")
    before = forward_emissions(params, "t1", sent.tokens)
    path = tmp_path / "model.npz"
    save_checkpoint(path, params)
    after = forward_emissions(load_checkpoint(path), "t1", sent.tokens)
    assert np.array_equal(before, after)


def test_vocab_survives(tmp_path):
    params = _model(ShareMode.SINGLE, 1)
    path = tmp_path / "model.npz"
    save_checkpoint(path, params)
    loaded = load_checkpoint(path)
    assert loaded.vocab.word_to_id == params.vocab.word_to_id
    assert loaded.vocab.char_to_id == params.vocab.char_to_id


def test_unknown_version_rejected(tmp_path):
    params = _model(ShareMode.SINGLE, 1)
    path = tmp_path / "model.npz"
    save_checkpoint(path, params)
    import json

    with np.load(path, allow_pickle=False) as z:
        payload = {k: z[k] for k in z.files}
    meta = json.loads(str(payload["__meta__"]))
    meta["version"] = 999
    payload["__meta__"] = np.array(json.dumps(meta))
    np.savez(path, **payload)
    with pytest.raises(ValueError, match="version"):
        load_checkpoint(path)
