"""Kernel backend selection.

The compiled extension is preferred when importable; the numpy fallback is
used otherwise. ``MTNER_BACKEND=pure`` or ``MTNER_BACKEND=compiled`` forces
the choice (the latter raises if the extension is missing). Selection
happens once, at import time.
"""

from __future__ import annotations

import os

from . import pure


def _select():
    forced = os.environ.get("MTNER_BACKEND", "").strip().lower()
    if forced not in ("", "pure", "compiled"):
        raise ValueError(f"MTNER_BACKEND must be 'pure' or 'compiled', got {forced!r}")
    if forced == "pure":
        return pure
    try:
        from . import _speedups
    except ImportError:
        if forced == "compiled":
            raise ImportError(
                "MTNER_BACKEND=compiled but the mtner.backend._speedups "
                "extension is not built"
            )
        return pure
    return _speedups


active = _select()
NAME: str = active.NAME

lstm_seq_forward = active.lstm_seq_forward
lstm_seq_backward = active.lstm_seq_backward
crf_partition = active.crf_partition
crf_marginals = active.crf_marginals
viterbi_decode = active.viterbi_decode


def load_compiled():
    """Import the compiled backend or raise ImportError if it is not built."""
    from . import _speedups

    return _speedups
