"""Single-file model checkpoints: all tensors in an npz plus a JSON header.

Loading reconstructs the share-mode aliasing and reproduces inference outputs
bit-exactly (float64 arrays are stored losslessly).
"""

from __future__ import annotations

import json

import numpy as np

from .lstm import BiLstmParams, LstmParams
from .model import CharBlock, Dims, ParamSet, ShareMode, TaskHead, TaskSpec, WordBlock
from .vocab import EmbeddingTable, Vocab

CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: ParamSet) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "mode": params.mode.value,
        "dims": {
            "char_dim": params.dims.char_dim,
            "word_dim": params.dims.word_dim,
            "char_hidden": params.dims.char_hidden,
            "word_hidden": params.dims.word_hidden,
            "dict_dim": params.dims.dict_dim,
        },
        "tasks": [
            {"task_id": t.task_id, "labels": t.labels, "lam": t.lam}
            for t in params.tasks
        ],
        "vocab": {
            "word_to_id": params.vocab.word_to_id,
            "char_to_id": params.vocab.char_to_id,
            "unk_id": params.vocab.unk_id,
            "unk_char_id": params.vocab.unk_char_id,
            "word_freqs": params.vocab.word_freqs,
        },
    }
    arrays = dict(params.named_params())
    seen = set()
    for i in range(len(params.tasks)):
        name = params.word_name(i)
        if name not in seen:
            seen.add(name)
            arrays[f"{name}.emb_mask"] = params.word_blocks[i].emb.trainable_mask
    np.savez(path, __meta__=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path) -> ParamSet:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["__meta__"]))
        arrays = {k: np.array(z[k]) for k in z.files if k != "__meta__"}
    version = meta.get("version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version!r}")

    mode = ShareMode(meta["mode"])
    dims = Dims(**meta["dims"])
    tasks = [TaskSpec(t["task_id"], list(t["labels"]), t["lam"]) for t in meta["tasks"]]
    v = meta["vocab"]
    vocab = Vocab(
        {k: int(i) for k, i in v["word_to_id"].items()},
        {k: int(i) for k, i in v["char_to_id"].items()},
        int(v["unk_id"]),
        int(v["unk_char_id"]),
        {k: int(c) for k, c in v["word_freqs"].items()},
    )

    def bilstm(prefix: str) -> BiLstmParams:
        def one(tag: str) -> LstmParams:
            return LstmParams(
                arrays[f"{prefix}.{tag}.wx"],
                arrays[f"{prefix}.{tag}.wh"],
                arrays[f"{prefix}.{tag}.b"],
            )

        return BiLstmParams(one("fw"), one("bw"))

    m = len(tasks)

    def char_block(name: str) -> CharBlock:
        return CharBlock(arrays[f"{name}.emb"], bilstm(name))

    def word_block(name: str) -> WordBlock:
        table = EmbeddingTable(arrays[f"{name}.emb"], arrays[f"{name}.emb_mask"])
        return WordBlock(table, bilstm(name))

    if mode.share_char:
        shared = char_block("char")
        char_blocks = [shared] * m
    else:
        char_blocks = [char_block(f"char{i}") for i in range(m)]
    if mode.share_word:
        shared_w = word_block("word")
        word_blocks = [shared_w] * m
    else:
        word_blocks = [word_block(f"word{i}") for i in range(m)]

    heads = [
        TaskHead(
            arrays[f"head{i}.proj_w"],
            arrays[f"head{i}.proj_b"],
            arrays[f"head{i}.trans"],
        )
        for i in range(m)
    ]
    return ParamSet(mode, tasks, dims, vocab, char_blocks, word_blocks, heads)
