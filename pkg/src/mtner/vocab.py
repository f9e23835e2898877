"""Vocabularies and pretrained word vectors.

Word lookup is case-sensitive, no digit or case normalization. Tokens below
the frequency threshold map to a single UNK id whose row stays trainable; rows
loaded from a vector file are frozen.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mathutil import as_rng, xavier_init

UNK_TOKEN = "<UNK>"
SPACE_CHAR = " "


@dataclass
class Vocab:
    word_to_id: dict[str, int]
    char_to_id: dict[str, int]
    unk_id: int
    unk_char_id: int
    word_freqs: dict[str, int] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.word_to_id)

    @property
    def char_size(self) -> int:
        # the UNK char has an id but no key in char_to_id
        return len(self.char_to_id) + 1

    def word_id(self, token: str) -> int:
        return self.word_to_id.get(token, self.unk_id)

    def char_id(self, ch: str) -> int:
        return self.char_to_id.get(ch, self.unk_char_id)


def build_vocab(corpora, min_freq: int = 5) -> Vocab:
    """Build word and char maps over the union of all corpora.

    Each corpus is an iterable of sentences, each sentence an iterable of
    string tokens. Words are kept when their total frequency across all
    corpora is >= min_freq; id order is by descending frequency, ties broken
    lexicographically, with UNK pinned at id 0. Every observed character gets
    an id regardless of frequency.
    """
    if min_freq < 1:
        raise ValueError(f"min_freq must be >= 1, got {min_freq}")
    freqs: dict[str, int] = {}
    chars: set[str] = set()
    n_tokens = 0
    for corpus in corpora:
        for sentence in corpus:
            for tok in sentence:
                if not isinstance(tok, str) or not tok:
                    raise ValueError(f"bad token {tok!r}")
                n_tokens += 1
                freqs[tok] = freqs.get(tok, 0) + 1
                chars.update(tok)
    if n_tokens == 0:
        raise ValueError("no tokens: need at least one nonempty corpus")

    word_to_id = {UNK_TOKEN: 0}
    kept = sorted(
        (t for t, c in freqs.items() if c >= min_freq and t != UNK_TOKEN),
        key=lambda t: (-freqs[t], t),
    )
    for tok in kept:
        word_to_id[tok] = len(word_to_id)

    # char ids: 0 reserved for unseen chars, 1 for the inter-word space
    char_to_id = {SPACE_CHAR: 1}
    for ch in sorted(chars - {SPACE_CHAR}):
        char_to_id[ch] = len(char_to_id) + 1
    return Vocab(word_to_id, char_to_id, unk_id=0, unk_char_id=0, word_freqs=freqs)


def lookup_word(vocab: Vocab, token: str) -> int:
    """Total: any string resolves, OOV to unk_id."""
    return vocab.word_id(token)


def lookup_char(vocab: Vocab, ch: str) -> int:
    return vocab.char_id(ch)


@dataclass
class EmbeddingTable:
    """Dense id -> vector table with a per-row trainable flag."""

    vectors: np.ndarray  # (V, dim)
    trainable_mask: np.ndarray  # (V,) bool

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @classmethod
    def random(cls, size: int, dim: int, seed_or_rng) -> "EmbeddingTable":
        """All-trainable table for runs without a pretrained file."""
        rng = as_rng(seed_or_rng)
        return cls(xavier_init(size, dim, rng), np.ones(size, dtype=bool))


@dataclass
class Coverage:
    found: int
    missing: int
    file_rows: int

    @property
    def fraction(self) -> float:
        total = self.found + self.missing
        return self.found / total if total else 0.0


def load_pretrained(path, vocab: Vocab, expected_dim: int | None = None,
                    seed_or_rng=0) -> tuple[EmbeddingTable, Coverage]:
    """Read a text vector file and build the table for vocab.

    Format: first line "<count> <dim>", then one "<token> v1 .. v_dim" row per
    word, single-space separated. Rows found in the file are frozen; UNK and
    vocab words absent from the file get trainable xavier rows.
    """
    rng = as_rng(seed_or_rng)
    file_vecs: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        parts = header.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:1: header must be '<count> <dim>', got {header!r}")
        try:
            count, dim = int(parts[0]), int(parts[1])
        except ValueError:
            raise ValueError(f"{path}:1: non-integer header fields {header!r}") from None
        if expected_dim is not None and dim != expected_dim:
            raise ValueError(
                f"{path}: file dim {dim} does not match configured dim {expected_dim}"
            )
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split(" ")
            if len(fields) != dim + 1:
                raise ValueError(
                    f"{path}:{lineno}: expected token + {dim} values, got "
                    f"{len(fields)} fields"
                )
            try:
                vec = np.array([float(v) for v in fields[1:]], dtype=np.float64)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric vector value") from None
            file_vecs[fields[0]] = vec
    if count != len(file_vecs):
        raise ValueError(
            f"{path}: header announces {count} rows, file has {len(file_vecs)}"
        )

    vectors = np.empty((vocab.size, dim), dtype=np.float64)
    trainable = np.zeros(vocab.size, dtype=bool)
    found = 0
    for token, idx in vocab.word_to_id.items():
        vec = file_vecs.get(token)
        if vec is not None and idx != vocab.unk_id:
            vectors[idx] = vec
            found += 1
        else:
            vectors[idx] = xavier_init(1, dim, rng)[0]
            trainable[idx] = True
    # UNK is synthetic and can never be found; keep it out of the coverage
    missing = vocab.size - 1 - found
    return EmbeddingTable(vectors, trainable), Coverage(found, missing, len(file_vecs))
