"""Corpus ingestion, IOBES conversion, span extraction, dictionary features.

Everything here is pure over immutable inputs. Ill-formed tag sequences are
repaired leniently (stray I- starts a new entity, stray E- becomes a single),
matching common CoNLL evaluation practice.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

log = logging.getLogger(__name__)

MAX_DICT_WORDS = 6
# one feature per (window length l in 1..6, offset within window in 1..l)
DICT_DIMS_PER_TYPE = MAX_DICT_WORDS * (MAX_DICT_WORDS + 1) // 2  # = 21


class SpanAnnotation(NamedTuple):
    """Inclusive token span [start, end] carrying an entity type."""

    start: int
    end: int
    entity_type: str


@dataclass
class LabeledSentence:
    tokens: list[str]
    tags: list[str]
    task_id: str = ""

    def __post_init__(self):
        if len(self.tokens) != len(self.tags):
            raise ValueError(
                f"{len(self.tokens)} tokens vs {len(self.tags)} tags"
            )

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass
class Dictionary:
    """Entity lexicon: lowercased, single-space-normalized surface strings."""

    entity_type: str
    entries: set[str] = field(default_factory=set)

    def __post_init__(self):
        if not self.entries:
            raise ValueError(f"dictionary for {self.entity_type!r} has no entries")
        for e in self.entries:
            n = len(e.split(" "))
            if not 1 <= n <= MAX_DICT_WORDS:
                raise ValueError(
                    f"dictionary entry {e!r} has {n} words (max {MAX_DICT_WORDS})"
                )


def normalize_surface(words: Iterable[str]) -> str:
    return " ".join(w.lower() for w in words)


def load_dictionary(path, entity_type: str) -> Dictionary:
    """One entry per line; entries longer than six words are rejected."""
    entries = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            words = line.split()
            if not words:
                continue
            if len(words) > MAX_DICT_WORDS:
                raise ValueError(
                    f"{path}:{lineno}: entry has {len(words)} words "
                    f"(max {MAX_DICT_WORDS})"
                )
            entries.add(normalize_surface(words))
    if not entries:
        raise ValueError(f"{path}: no dictionary entries")
    return Dictionary(entity_type, entries)


# ---------------------------------------------------------------------------
# CoNLL files


def parse_conll(path) -> list[LabeledSentence]:
    """Token-per-line files, tag in the last whitespace-separated column.

    Blank lines separate sentences; CRLF is accepted. Tags may be IOB or
    IOBES; no scheme validation happens here.
    """
    sentences: list[LabeledSentence] = []
    tokens: list[str] = []
    tags: list[str] = []

    def flush():
        if tokens:
            sentences.append(LabeledSentence(list(tokens), list(tags)))
            tokens.clear()
            tags.clear()

    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                flush()
                continue
            cols = line.split()
            if len(cols) < 2:
                raise ValueError(f"{path}:{lineno}: line has no tag column: {line!r}")
            tokens.append(cols[0])
            tags.append(cols[-1])
    flush()
    return sentences


def serialize_conll(sentences: list[LabeledSentence]) -> str:
    blocks = []
    for sent in sentences:
        blocks.append(
            "\n".join(f"{tok}\t{tag}" for tok, tag in zip(sent.tokens, sent.tags))
        )
    return "\n\n".join(blocks) + ("\n" if blocks else "")


def write_conll(path, sentences: list[LabeledSentence]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_conll(sentences))


# ---------------------------------------------------------------------------
# Tag schemes


def split_tag(tag: str) -> tuple[str, str | None]:
    """ "B-Gene" -> ("B", "Gene"); "O" -> ("O", None). Rejects other shapes."""
    if tag == "O":
        return "O", None
    if len(tag) > 2 and tag[1] == "-" and tag[0] in "BIES":
        return tag[0], tag[2:]
    raise ValueError(f"unrecognized tag {tag!r}")


def _lenient_spans(tags, warn: bool) -> list[SpanAnnotation]:
    """Read spans from IOB or IOBES tags, repairing ill-formed runs.

    A stray I- (no open entity of its type) opens a new entity; a stray E-
    becomes a single-token entity. An entity still open at a B-/S-/O or at
    the end of the sentence is closed at the previous token.
    """
    spans: list[SpanAnnotation] = []
    open_start: int | None = None
    open_type: str | None = None

    def close(last: int):
        nonlocal open_start, open_type
        if open_start is not None:
            spans.append(SpanAnnotation(open_start, last, open_type))
            open_start = open_type = None

    for idx, tag in enumerate(tags):
        prefix, etype = split_tag(tag)
        if prefix == "O":
            close(idx - 1)
        elif prefix == "B":
            close(idx - 1)
            open_start, open_type = idx, etype
        elif prefix == "S":
            close(idx - 1)
            spans.append(SpanAnnotation(idx, idx, etype))
        elif prefix == "I":
            if open_start is None or open_type != etype:
                if warn:
                    log.warning(
                        "position %d: stray %s after %s, treating as B-%s",
                        idx, tag, tags[idx - 1] if idx else "<start>", etype,
                    )
                close(idx - 1)
                open_start, open_type = idx, etype
        elif prefix == "E":
            if open_start is None or open_type != etype:
                if warn:
                    log.warning(
                        "position %d: stray %s, treating as S-%s", idx, tag, etype
                    )
                close(idx - 1)
                spans.append(SpanAnnotation(idx, idx, etype))
            else:
                close(idx)
    close(len(tags) - 1)
    return spans


def tags_to_spans(tags) -> set[SpanAnnotation]:
    """Total over IOB/IOBES input; ill-formed runs are repaired, not rejected."""
    return set(_lenient_spans(tags, warn=False))


def spans_to_tags(spans, length: int) -> list[str]:
    """Well-formed IOBES tags for a non-overlapping span set."""
    tags = ["O"] * length
    for span in sorted(spans):
        if not (0 <= span.start <= span.end < length):
            raise ValueError(f"span {span} outside sentence of length {length}")
        for i in range(span.start, span.end + 1):
            if tags[i] != "O":
                raise ValueError(f"span {span} overlaps an earlier span at token {i}")
        if span.start == span.end:
            tags[span.start] = f"S-{span.entity_type}"
        else:
            tags[span.start] = f"B-{span.entity_type}"
            tags[span.end] = f"E-{span.entity_type}"
            for i in range(span.start + 1, span.end):
                tags[i] = f"I-{span.entity_type}"
    return tags


def iob_to_iobes(tags) -> list[str]:
    """Convert IOB/IOB2 (or already-IOBES) tags to well-formed IOBES.

    Single-token entities become S-, the last token of a longer entity E-.
    A stray I- is repaired as B- with a logged warning.
    """
    return spans_to_tags(_lenient_spans(tags, warn=True), len(tags))


def iobes_to_iob(tags) -> list[str]:
    """Inverse scheme mapping: S- -> B-, E- -> I-."""
    out = []
    for tag in tags:
        prefix, etype = split_tag(tag)
        if prefix == "S":
            out.append(f"B-{etype}")
        elif prefix == "E":
            out.append(f"I-{etype}")
        else:
            out.append(tag)
    return out


# ---------------------------------------------------------------------------
# Dictionary features and postprocessing


def _window_dim(length: int, offset: int) -> int:
    """Feature index for (window length, 1-based offset inside the window)."""
    return length * (length - 1) // 2 + (offset - 1)


def dictionary_features(tokens, dictionaries: list[Dictionary]) -> np.ndarray:
    """Binary (n_tokens, 21 * n_dictionaries) matrix of n-gram membership.

    For every window of 1..6 tokens that matches an entry of dictionary j
    (case-insensitive), each covered token fires the dimension for (window
    length, its offset inside the window) in block j.
    """
    n = len(tokens)
    out = np.zeros((n, DICT_DIMS_PER_TYPE * len(dictionaries)), dtype=np.float64)
    lowered = [t.lower() for t in tokens]
    for j, d in enumerate(dictionaries):
        base = j * DICT_DIMS_PER_TYPE
        for start in range(n):
            for length in range(1, min(MAX_DICT_WORDS, n - start) + 1):
                if " ".join(lowered[start : start + length]) in d.entries:
                    for offset in range(1, length + 1):
                        out[start + offset - 1, base + _window_dim(length, offset)] = 1.0
    return out


def dictionary_postprocess(tags, tokens, dictionaries: list[Dictionary]) -> list[str]:
    """Relabel O-tagged windows that exactly match a dictionary entry.

    Scans each maximal all-O run left to right, trying the longest window
    first at each position; the first dictionary (in list order) containing
    the window claims it. Existing predicted entities are never altered.
    """
    out = list(tags)
    lowered = [t.lower() for t in tokens]
    n = len(out)
    i = 0
    while i < n:
        if out[i] != "O":
            i += 1
            continue
        run_end = i
        while run_end + 1 < n and out[run_end + 1] == "O":
            run_end += 1
        pos = i
        while pos <= run_end:
            matched = 0
            for length in range(min(MAX_DICT_WORDS, run_end - pos + 1), 0, -1):
                surface = " ".join(lowered[pos : pos + length])
                hit = next((d for d in dictionaries if surface in d.entries), None)
                if hit is not None:
                    span = SpanAnnotation(pos, pos + length - 1, hit.entity_type)
                    for k, tag in zip(
                        range(span.start, span.end + 1),
                        spans_to_tags([span], n)[span.start : span.end + 1],
                    ):
                        out[k] = tag
                    matched = length
                    break
            pos += matched if matched else 1
        i = run_end + 1
    return out


# ---------------------------------------------------------------------------
# Alternative-answer files


@dataclass
class GoldWithAlternatives:
    primary: SpanAnnotation
    alternatives: list[SpanAnnotation] = field(default_factory=list)

    def accepts(self, span: SpanAnnotation) -> bool:
        return span == self.primary or span in self.alternatives


def parse_alternatives(path) -> dict[str, list[GoldWithAlternatives]]:
    """Per-sentence gold entities with acceptable alternative boundaries.

    Line format: "sentence_id<TAB>start<TAB>end<TAB>type" opens an entity;
    a following "ALT<TAB>start<TAB>end<TAB>type" line adds an acceptable
    alternative span for the most recent entity.
    """
    gold: dict[str, list[GoldWithAlternatives]] = {}
    current: GoldWithAlternatives | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 4:
                raise ValueError(
                    f"{path}:{lineno}: expected 4 tab-separated fields, got {len(cols)}"
                )
            sid, start_s, end_s, etype = cols
            try:
                span = SpanAnnotation(int(start_s), int(end_s), etype)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-integer span bounds") from None
            if span.start > span.end or span.start < 0:
                raise ValueError(f"{path}:{lineno}: bad span {span.start}..{span.end}")
            if sid == "ALT":
                if current is None:
                    raise ValueError(f"{path}:{lineno}: ALT line before any entity")
                current.alternatives.append(span)
            else:
                current = GoldWithAlternatives(span)
                gold.setdefault(sid, []).append(current)
    return gold
