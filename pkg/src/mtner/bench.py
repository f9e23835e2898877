"""Micro-benchmark of the hot kernels: pure numpy vs compiled extension."""

from __future__ import annotations

import time

import numpy as np

from . import backend
from .backend import pure


def _timeit(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _cases(seed: int, seq_len: int, input_dim: int, hidden: int,
           crf_len: int, n_labels: int):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((seq_len, input_dim))
    wx = rng.standard_normal((4 * hidden, input_dim)) * 0.1
    wh = rng.standard_normal((4 * hidden, hidden)) * 0.1
    b = rng.standard_normal(4 * hidden) * 0.1
    emis = rng.standard_normal((crf_len, n_labels))
    trans = rng.standard_normal((n_labels + 2, n_labels + 2)) * 0.5
    return x, wx, wh, b, emis, trans


def run_bench(seq_len: int = 120, input_dim: int = 30, hidden: int = 100,
              crf_len: int = 25, n_labels: int = 9, repeats: int = 5,
              seed: int = 0) -> list[dict]:
    """Time each kernel on both backends. Returns one row dict per kernel."""
    try:
        compiled = backend.load_compiled()
    except ImportError:
        compiled = None
    x, wx, wh, b, emis, trans = _cases(seed, seq_len, input_dim, hidden,
                                       crf_len, n_labels)
    h, c, gates = pure.lstm_seq_forward(x, wx, wh, b)
    dh = np.ones_like(h)

    kernels = [
        ("lstm_seq_forward", lambda m: m.lstm_seq_forward(x, wx, wh, b)),
        ("lstm_seq_backward",
         lambda m: m.lstm_seq_backward(x, wx, wh, h, c, gates, dh)),
        ("crf_partition", lambda m: m.crf_partition(emis, trans)),
        ("crf_marginals", lambda m: m.crf_marginals(emis, trans)),
        ("viterbi_decode", lambda m: m.viterbi_decode(emis, trans)),
    ]
    rows = []
    for name, call in kernels:
        row = {"kernel": name, "pure_s": _timeit(lambda: call(pure), repeats)}
        if compiled is not None:
            row["compiled_s"] = _timeit(lambda: call(compiled), repeats)
            row["speedup"] = row["pure_s"] / row["compiled_s"]
        rows.append(row)
    return rows


def format_bench(rows: list[dict]) -> str:
    have_compiled = "compiled_s" in rows[0]
    header = f"{'kernel':<20} {'pure':>12}"
    if have_compiled:
        header += f" {'compiled':>12} {'speedup':>9}"
    lines = [header, "-" * len(header)]
    for r in rows:
        line = f"{r['kernel']:<20} {r['pure_s'] * 1e3:>10.3f}ms"
        if have_compiled:
            line += f" {r['compiled_s'] * 1e3:>10.3f}ms {r['speedup']:>8.1f}x"
        lines.append(line)
    if not have_compiled:
        lines.append("(compiled extension not available; showing pure backend only)")
    return "\n".join(lines)
