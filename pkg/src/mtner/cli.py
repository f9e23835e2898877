"""Command-line interface: train, tag, eval, gradcheck, convert-tags, bench.

Configuration lives in one INI file (sections [model], [train],
[dictionaries], and one [task NAME] per task); --set SECTION.KEY=VALUE
overrides any entry, and the convenience flags win over both. Exit codes:
0 success, 1 runtime failure, 2 usage error. MTNER_LOG controls verbosity.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bench import format_bench, run_bench
from .checkpoint import load_checkpoint, save_checkpoint
from .data import (
    DICT_DIMS_PER_TYPE,
    Dictionary,
    LabeledSentence,
    dictionary_features,
    dictionary_postprocess,
    iob_to_iobes,
    iobes_to_iob,
    load_dictionary,
    parse_alternatives,
    parse_conll,
    tags_to_spans,
)
from .evaluate import ScoreTriple, alternative_match, macro_f1, score_by_type
from .gradcheck import PASS_THRESHOLD, run_all
from .model import Dims, ShareMode, TaskSpec, build_model, predict_tags
from .train import TaskData, TrainConfig, TrainingDiverged, train
from .vocab import EmbeddingTable, build_vocab, load_pretrained

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

IOBES_PREFIX_ORDER = "BIES"


class UsageError(Exception):
    """Bad configuration or arguments; maps to exit status 2."""


def _require_file(path: Path, what: str) -> Path:
    if not path.is_file():
        raise UsageError(f"{what} not found: {path}")
    return path


@dataclass
class TaskEntry:
    name: str
    train: Path
    dev: Path
    test: Path | None
    lam: float
    types: list[str] | None


@dataclass
class RunConfig:
    mode: ShareMode
    tasks: list[TaskEntry]
    char_dim: int
    word_dim: int
    char_hidden: int
    word_hidden: int
    embeddings: Path | None
    min_freq: int
    checkpoint: Path
    report: Path
    train_cfg: TrainConfig
    dict_mode: str  # off | feature | postprocess
    dictionaries: list[tuple[str, Path]]


def load_run_config(path, overrides: list[str] | None = None,
                    validate_paths: bool = True) -> RunConfig:
    """Parse the INI config, apply --set overrides, validate everything."""
    cfg_path = Path(path)
    _require_file(cfg_path, "config file")
    parser = configparser.ConfigParser()
    try:
        with open(cfg_path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise UsageError(f"{cfg_path}: {exc}") from None

    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise UsageError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        target, value = item.split("=", 1)
        section, key = target.split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value)

    def get(section, key, fallback=None):
        return parser.get(section, key, fallback=fallback)

    def getnum(section, key, cast, fallback):
        raw = get(section, key)
        if raw is None or raw == "":
            return fallback
        try:
            return cast(raw)
        except ValueError:
            raise UsageError(f"[{section}] {key}: not a number: {raw!r}") from None

    try:
        mode = ShareMode.parse(get("model", "mode", "stm"))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    base = cfg_path.parent

    def respath(raw: str) -> Path:
        p = Path(raw)
        return p if p.is_absolute() else base / p

    tasks = []
    for section in parser.sections():
        if not section.startswith("task "):
            continue
        name = section[5:].strip()
        if not name:
            raise UsageError(f"empty task name in section [{section}]")
        for key in ("train", "dev"):
            if not get(section, key):
                raise UsageError(f"[{section}]: missing required key {key!r}")
        types_raw = get(section, "types")
        tasks.append(TaskEntry(
            name=name,
            train=respath(get(section, "train")),
            dev=respath(get(section, "dev")),
            test=respath(get(section, "test")) if get(section, "test") else None,
            lam=getnum(section, "lambda", float, 1.0),
            types=[t.strip() for t in types_raw.split(",")] if types_raw else None,
        ))
    if not tasks:
        raise UsageError(f"{cfg_path}: no [task NAME] sections")
    names = [t.name for t in tasks]
    if len(set(names)) != len(names):
        raise UsageError(f"duplicate task names: {names}")
    if mode == ShareMode.SINGLE and len(tasks) != 1:
        raise UsageError(
            f"mode stm requires exactly one task, config has {len(tasks)}"
        )

    dict_mode = get("dictionaries", "mode", "off").strip().lower()
    if dict_mode not in ("off", "feature", "postprocess"):
        raise UsageError(f"dictionaries.mode must be off|feature|postprocess, "
                         f"got {dict_mode!r}")
    dictionaries = []
    if parser.has_section("dictionaries"):
        for key, value in parser.items("dictionaries"):
            if key == "mode":
                continue
            dictionaries.append((key.upper(), respath(value)))
    if dict_mode != "off" and not dictionaries:
        raise UsageError("dictionaries.mode set but no dictionary files listed")

    emb_raw = get("model", "embeddings")
    checkpoint = respath(get("model", "checkpoint", "model.npz"))
    report_raw = get("model", "report")
    stop_raw = get("train", "stop_train_f1")
    clip_raw = get("train", "clip_norm", "5.0")
    try:
        train_cfg = TrainConfig(
            lr0=getnum("train", "lr0", float, 0.01),
            decay=getnum("train", "decay", float, 0.05),
            max_epochs=getnum("train", "max_epochs", int, 100),
            patience=getnum("train", "patience", int, 10),
            batch_size=getnum("train", "batch_size", int, 10),
            seed=getnum("train", "seed", int, 0),
            dropout=getnum("train", "dropout", float, 0.5),
            clip_norm=None if clip_raw.strip().lower() in ("", "none", "off")
            else getnum("train", "clip_norm", float, 5.0),
            stop_train_f1=getnum("train", "stop_train_f1", float, None)
            if stop_raw else None,
        )
    except ValueError as exc:
        raise UsageError(f"bad [train] config: {exc}") from None

    run = RunConfig(
        mode=mode,
        tasks=tasks,
        char_dim=getnum("model", "char_dim", int, 30),
        word_dim=getnum("model", "word_dim", int, 200),
        char_hidden=getnum("model", "char_hidden", int, 200),
        word_hidden=getnum("model", "word_hidden", int, 200),
        embeddings=respath(emb_raw) if emb_raw else None,
        min_freq=getnum("model", "min_freq", int, 5),
        checkpoint=checkpoint,
        report=respath(report_raw) if report_raw
        else checkpoint.with_name(checkpoint.name + ".report.jsonl"),
        train_cfg=train_cfg,
        dict_mode=dict_mode,
        dictionaries=dictionaries,
    )
    if validate_paths:
        for t in run.tasks:
            _require_file(t.train, f"task {t.name} train corpus")
            _require_file(t.dev, f"task {t.name} dev corpus")
            if t.test is not None:
                _require_file(t.test, f"task {t.name} test corpus")
        if run.embeddings is not None:
            _require_file(run.embeddings, "embedding file")
        for etype, p in run.dictionaries:
            _require_file(p, f"dictionary {etype}")
        if not run.checkpoint.parent.is_dir():
            raise UsageError(f"checkpoint directory missing: {run.checkpoint.parent}")
    return run


def _load_corpus(path: Path) -> list[LabeledSentence]:
    sentences = parse_conll(path)
    for s in sentences:
        s.tags = iob_to_iobes(s.tags)
    return sentences


def _task_labels(entry: TaskEntry, sentences: list[LabeledSentence]) -> list[str]:
    """O first; declared types get the full IOBES cross product, otherwise
    the label set is whatever the corpora contain, sorted."""
    if entry.types:
        labels = ["O"]
        for etype in entry.types:
            labels.extend(f"{p}-{etype}" for p in IOBES_PREFIX_ORDER)
        return labels
    seen = {tag for sent in sentences for tag in sent.tags if tag != "O"}
    return ["O"] + sorted(seen)


def _load_dictionaries(run: RunConfig) -> list[Dictionary]:
    return [load_dictionary(path, etype) for etype, path in run.dictionaries]


def _feature_fn(run: RunConfig, dicts: list[Dictionary]):
    if run.dict_mode != "feature":
        return None
    return lambda tokens: dictionary_features(tokens, dicts)


def _postprocess_hooks(run: RunConfig, dicts: list[Dictionary]):
    if run.dict_mode != "postprocess":
        return None
    hook = lambda tags, tokens: dictionary_postprocess(tags, tokens, dicts)
    return {t.name: hook for t in run.tasks}


def cmd_train(args) -> int:
    run = load_run_config(args.tasks, _collect_overrides(args))
    dicts = _load_dictionaries(run) if run.dict_mode != "off" else []
    feature_fn = _feature_fn(run, dicts)

    data = []
    specs = []
    for entry in run.tasks:
        train_sents = _load_corpus(entry.train)
        dev_sents = _load_corpus(entry.dev)
        if not train_sents or not dev_sents:
            raise UsageError(f"task {entry.name}: empty train or dev corpus")
        labels = _task_labels(entry, train_sents + dev_sents)
        specs.append(TaskSpec(entry.name, labels, entry.lam))
        data.append(TaskData(
            entry.name, train_sents, dev_sents,
            [feature_fn(s.tokens) for s in train_sents] if feature_fn else None,
            [feature_fn(s.tokens) for s in dev_sents] if feature_fn else None,
        ))

    vocab = build_vocab(
        ([s.tokens for s in d.train] + [s.tokens for s in d.dev] for d in data),
        min_freq=run.min_freq,
    )
    seed = run.train_cfg.seed
    if run.embeddings is not None:
        emb, coverage = load_pretrained(
            run.embeddings, vocab, expected_dim=run.word_dim,
            seed_or_rng=np.random.default_rng([seed, 11]),
        )
        log.info("embedding coverage: %d/%d vocab words (%.1f%%)",
                 coverage.found, vocab.size, 100 * coverage.fraction)
    else:
        emb = EmbeddingTable.random(
            vocab.size, run.word_dim, np.random.default_rng([seed, 11])
        )
    dims = Dims(
        char_dim=run.char_dim, word_dim=run.word_dim,
        char_hidden=run.char_hidden, word_hidden=run.word_hidden,
        dict_dim=DICT_DIMS_PER_TYPE * len(dicts) if run.dict_mode == "feature" else 0,
    )
    params = build_model(run.mode, specs, dims, vocab, emb,
                         np.random.default_rng([seed, 12]))

    params, report = train(params, data, run.train_cfg,
                           _postprocess_hooks(run, dicts))
    save_checkpoint(run.checkpoint, params)
    run.report.write_text(report.to_jsonl(), encoding="utf-8")

    for rec in report.epochs:
        devs = " ".join(
            f"{tid}: f1={s.f1:.4f} macro={s.macro_f1:.4f}"
            for tid, s in rec.dev.items()
        )
        print(f"epoch {rec.epoch} lr {rec.lr:.6f} {devs}")
    print(f"best epoch {report.best_epoch} dev macro-F1 {report.best_metric:.4f}")
    print(f"checkpoint: {run.checkpoint}")
    print(f"report: {run.report}")
    log.info("wall time %.1fs", report.wall_time_s)
    return EXIT_OK


def _read_token_sentences(path) -> list[list[str]]:
    """Token-per-line input (extra columns ignored), blank-line separated."""
    sentences: list[list[str]] = []
    tokens: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            cols = raw.split()
            if not cols:
                if tokens:
                    sentences.append(tokens)
                    tokens = []
                continue
            tokens.append(cols[0])
    if tokens:
        sentences.append(tokens)
    return sentences


def cmd_tag(args) -> int:
    run = load_run_config(args.tasks, _collect_overrides(args),
                          validate_paths=False)
    ckpt = Path(args.checkpoint) if args.checkpoint else run.checkpoint
    _require_file(ckpt, "checkpoint")
    params = load_checkpoint(ckpt)
    known = [t.task_id for t in params.tasks]
    if args.task not in known:
        raise UsageError(f"unknown task {args.task!r}; known tasks: "
                         f"{', '.join(known)}")

    dicts = _load_dictionaries(run) if run.dict_mode != "off" else []
    feature_fn = _feature_fn(run, dicts)
    if params.dims.dict_dim and feature_fn is None:
        raise UsageError(
            "checkpoint was trained with dictionary features; config must "
            "set dictionaries.mode=feature with the same dictionary files"
        )
    if params.dims.dict_dim and DICT_DIMS_PER_TYPE * len(dicts) != params.dims.dict_dim:
        raise UsageError(
            f"checkpoint expects {params.dims.dict_dim} dictionary feature "
            f"dims, config provides {DICT_DIMS_PER_TYPE * len(dicts)}"
        )
    hooks = _postprocess_hooks(run, dicts)

    sentences = _read_token_sentences(_require_file(Path(args.input), "input"))
    blocks = []
    for tokens in sentences:
        feats = feature_fn(tokens) if feature_fn else None
        tags = predict_tags(params, args.task, tokens, feats)
        if hooks:
            tags = hooks[args.task](tags, tokens)
        blocks.append("\n".join(f"{tok}\t{tag}" for tok, tag in zip(tokens, tags)))
    text = "\n\n".join(blocks) + ("\n" if blocks else "")
    if args.output == "-":
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text, encoding="utf-8")
    return EXIT_OK


def _triple_dict(t: ScoreTriple) -> dict:
    return {"tp": t.tp, "fp": t.fp, "fn": t.fn,
            "precision": t.precision, "recall": t.recall, "f1": t.f1}


def cmd_eval(args) -> int:
    pred = parse_conll(_require_file(Path(args.pred), "prediction file"))
    gold = parse_conll(_require_file(Path(args.gold), "gold file"))
    if len(pred) != len(gold):
        raise ValueError(
            f"sentence count mismatch: {len(pred)} predicted vs {len(gold)} gold "
            f"(first unpaired sentence index {min(len(pred), len(gold))})"
        )
    for i, (p, g) in enumerate(zip(pred, gold)):
        if len(p) != len(g):
            raise ValueError(
                f"sentence {i}: {len(p)} predicted tokens vs {len(g)} gold"
            )
    pred_spans = [tags_to_spans(s.tags) for s in pred]
    gold_spans = [tags_to_spans(s.tags) for s in gold]

    per_type = score_by_type(pred_spans, gold_spans)
    overall = ScoreTriple.zero()
    for t in per_type.values():
        overall = overall + t

    width = max([len(t) for t in per_type] + [7])
    print(f"{'type':<{width}} {'tp':>5} {'fp':>5} {'fn':>5} "
          f"{'precision':>10} {'recall':>10} {'f1':>10}")
    for etype, t in per_type.items():
        print(f"{etype:<{width}} {t.tp:>5} {t.fp:>5} {t.fn:>5} "
              f"{t.precision:>10.4f} {t.recall:>10.4f} {t.f1:>10.4f}")
    print(f"{'overall':<{width}} {overall.tp:>5} {overall.fp:>5} {overall.fn:>5} "
          f"{overall.precision:>10.4f} {overall.recall:>10.4f} {overall.f1:>10.4f}")
    macro = macro_f1(per_type) if per_type else 0.0
    print(f"macro-F1 {macro:.4f}")

    result = {
        "per_type": {k: _triple_dict(v) for k, v in per_type.items()},
        "overall": _triple_dict(overall),
        "macro_f1": macro,
    }
    if args.alternatives:
        alts = parse_alternatives(
            _require_file(Path(args.alternatives), "alternatives file")
        )
        alt_total = ScoreTriple.zero()
        for i, spans in enumerate(pred_spans):
            alt_total = alt_total + alternative_match(spans, alts.get(str(i), []))
        print(f"{'alternative':<{width}} {alt_total.tp:>5} {alt_total.fp:>5} "
              f"{alt_total.fn:>5} {alt_total.precision:>10.4f} "
              f"{alt_total.recall:>10.4f} {alt_total.f1:>10.4f}")
        result["alternative"] = _triple_dict(alt_total)
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.hidden > 8:
        raise UsageError(f"--hidden capped at 8 for checking, got {args.hidden}")
    if args.modes == "all":
        modes = list(ShareMode)
    else:
        try:
            modes = [ShareMode.parse(m) for m in args.modes.split(",")]
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    epsilon = tuple(args.epsilon) if args.epsilon else (1e-4, 1e-5)
    results = run_all(modes, n_seeds=args.seeds, epsilon=epsilon,
                      hidden=args.hidden, max_words=args.max_words,
                      sabotage=args.sabotage)
    overall = 0.0
    for mode_name, blocks in results.items():
        print(f"mode {mode_name} ({len(blocks)} parameter blocks, "
              f"{args.seeds} seeds)")
        for name in sorted(blocks):
            print(f"  {name:<24} max rel err {blocks[name]:.3e}")
        mode_max = max(blocks.values())
        overall = max(overall, mode_max)
        print(f"  mode max {mode_max:.3e}")
    verdict = "PASS" if overall < PASS_THRESHOLD else "FAIL"
    print(f"overall max rel err {overall:.3e} vs threshold "
          f"{PASS_THRESHOLD:.0e}: {verdict}")
    return EXIT_OK if verdict == "PASS" else EXIT_RUNTIME


def cmd_convert_tags(args) -> int:
    sentences = parse_conll(_require_file(Path(args.input), "input"))
    for s in sentences:
        s.tags = iob_to_iobes(s.tags) if args.to == "iobes" else iobes_to_iob(s.tags)
    blocks = [
        "\n".join(f"{tok}\t{tag}" for tok, tag in zip(s.tokens, s.tags))
        for s in sentences
    ]
    text = "\n\n".join(blocks) + ("\n" if blocks else "")
    if args.output == "-":
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text, encoding="utf-8")
    return EXIT_OK


def cmd_bench(args) -> int:
    rows = run_bench(repeats=args.repeats)
    print(format_bench(rows))
    return EXIT_OK


def _collect_overrides(args) -> list[str]:
    overrides = list(getattr(args, "set", None) or [])
    if getattr(args, "mode", None):
        overrides.append(f"model.mode={args.mode}")
    if getattr(args, "seed", None) is not None:
        overrides.append(f"train.seed={args.seed}")
    if getattr(args, "checkpoint", None) and not isinstance(args.checkpoint, bool):
        overrides.append(f"model.checkpoint={args.checkpoint}")
    return overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mtner",
        description="Multi-task BiLSTM-CRF sequence labeling engine",
    )
    parser.add_argument("--threads", type=int, default=1,
                        help="upper bound on internal parallelism (the current "
                             "implementation is sequential; kept at 1 for "
                             "reproducibility)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a task config")
    p_train.add_argument("--tasks", "--config", dest="tasks", required=True,
                         help="INI config with [model], [train], [task NAME] sections")
    p_train.add_argument("--mode", help="override model.mode (stm|mtm-c|mtm-w|mtm-cw)")
    p_train.add_argument("--seed", type=int, help="override train.seed")
    p_train.add_argument("--checkpoint", help="override model.checkpoint")
    p_train.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                         help="override any config entry (repeatable)")
    p_train.set_defaults(fn=cmd_train)

    p_tag = sub.add_parser("tag", help="tag raw token files with a trained model")
    p_tag.add_argument("--tasks", "--config", dest="tasks", required=True)
    p_tag.add_argument("--task", required=True, help="task head to decode with")
    p_tag.add_argument("--input", required=True,
                       help="token-per-line file, blank line between sentences")
    p_tag.add_argument("--output", default="-", help="output path (default stdout)")
    p_tag.add_argument("--checkpoint", help="override model.checkpoint")
    p_tag.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    p_tag.set_defaults(fn=cmd_tag)

    p_eval = sub.add_parser("eval", help="score predictions against gold")
    p_eval.add_argument("--pred", required=True, help="predicted CoNLL file")
    p_eval.add_argument("--gold", required=True, help="gold CoNLL file")
    p_eval.add_argument("--alternatives",
                        help="acceptable-alternative spans file (see README)")
    p_eval.set_defaults(fn=cmd_eval)

    p_gc = sub.add_parser("gradcheck",
                          help="verify analytic gradients with finite differences")
    p_gc.add_argument("--modes", default="all",
                      help="comma list of stm,mtm-c,mtm-w,mtm-cw (default all)")
    p_gc.add_argument("--seeds", type=int, default=20)
    # default tries both steps per coordinate and keeps the cleaner reading:
    # truncation noise favors small steps, roundoff noise favors large ones
    p_gc.add_argument("--epsilon", type=float, action="append", default=None,
                      help="finite-difference step, repeatable "
                           "(default: 1e-4 and 1e-5)")
    p_gc.add_argument("--hidden", type=int, default=2, help="hidden size (max 8)")
    p_gc.add_argument("--max-words", type=int, default=3, dest="max_words")
    p_gc.add_argument("--sabotage", action="store_true",
                      help="corrupt one gradient block (negative control; "
                           "the run must then FAIL)")
    p_gc.set_defaults(fn=cmd_gradcheck)

    p_conv = sub.add_parser("convert-tags", help="convert between IOB and IOBES")
    p_conv.add_argument("--to", choices=("iobes", "iob"), required=True)
    p_conv.add_argument("--input", required=True)
    p_conv.add_argument("--output", default="-")
    p_conv.set_defaults(fn=cmd_convert_tags)

    p_bench = sub.add_parser("bench",
                             help="time the pure vs compiled kernel backends")
    p_bench.add_argument("--repeats", type=int, default=5)
    p_bench.set_defaults(fn=cmd_bench)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("MTNER_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
