"""Shared test helpers: acceptance reporting and synthetic corpora."""

import numpy as np
import pytest

from mtner.data import LabeledSentence

_ACCEPTANCE_LINES = []


def record_acceptance(line: str) -> None:
    _ACCEPTANCE_LINES.append(line)
    print(line)


@pytest.fixture
def acceptance():
    return record_acceptance


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


# --- synthetic gene-ish language -------------------------------------------
# Entity surfaces carry a character signature (trailing digit) that context
# words never have, so a character-level model can generalize to entity
# surfaces it has not seen in its own training data.

ENTITY_WORDS = [
    "abl1", "brc2", "cdk4", "dlx5", "egr1", "fos2",
    "gli3", "hox7", "irf4", "jak2", "kit1", "lmo2",
]

CONTEXT_WORDS = [
    "the", "binds", "to", "promoter", "of", "in", "cells", "we",
    "observed", "that", "expression", "was", "elevated", "protein",
    "and", "pathway", "with",
]


def synth_sentence(rng: np.random.Generator, entities, task_id: str,
                   entity_type: str = "G") -> LabeledSentence:
    """Context words with 1-2 single-token entities spliced in."""
    n_ctx = int(rng.integers(3, 7))
    tokens = [CONTEXT_WORDS[i] for i in rng.integers(0, len(CONTEXT_WORDS), n_ctx)]
    tags = ["O"] * n_ctx
    for _ in range(int(rng.integers(1, 3))):
        pos = int(rng.integers(0, len(tokens) + 1))
        word = entities[int(rng.integers(0, len(entities)))]
        tokens.insert(pos, word)
        tags.insert(pos, f"S-{entity_type}")
    return LabeledSentence(tokens, tags, task_id)


def synth_corpus(rng: np.random.Generator, n: int, entities, task_id: str,
                 entity_type: str = "G") -> list:
    return [synth_sentence(rng, entities, task_id, entity_type) for _ in range(n)]
