"""Span-level scoring: exact and alternative match, macro F1, error breakdown.

All counting is per sentence (spans never cross sentences) and every ratio
uses the 0/0 -> 0 convention so empty prediction sets score cleanly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .data import GoldWithAlternatives, SpanAnnotation


@dataclass(frozen=True)
class ScoreTriple:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def __add__(self, other: "ScoreTriple") -> "ScoreTriple":
        return ScoreTriple(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @classmethod
    def zero(cls) -> "ScoreTriple":
        return cls(0, 0, 0)


def exact_match(pred, gold) -> ScoreTriple:
    """One sentence: TP iff (start, end, type) equals a gold span, 1:1."""
    pred = set(pred)
    gold = set(gold)
    tp = len(pred & gold)
    return ScoreTriple(tp, len(pred) - tp, len(gold) - tp)


def alternative_match(pred, gold: list[GoldWithAlternatives]) -> ScoreTriple:
    """One sentence, gold entities carrying acceptable alternative spans.

    A prediction is a TP when it is in some unconsumed gold entity's
    acceptance set; a prediction acceptable to several golds goes to the
    earliest one in file order. Each gold consumes at most one prediction.
    """
    consumed = [False] * len(gold)
    tp = 0
    fp = 0
    for span in sorted(set(pred)):
        hit = next(
            (i for i, g in enumerate(gold) if not consumed[i] and g.accepts(span)),
            None,
        )
        if hit is None:
            fp += 1
        else:
            consumed[hit] = True
            tp += 1
    return ScoreTriple(tp, fp, consumed.count(False))


def score_by_type(pred_per_sentence, gold_per_sentence) -> dict[str, ScoreTriple]:
    """Pooled per-entity-type counts over aligned per-sentence span sets."""
    if len(pred_per_sentence) != len(gold_per_sentence):
        raise ValueError(
            f"{len(pred_per_sentence)} prediction sets vs "
            f"{len(gold_per_sentence)} gold sets"
        )
    types: set[str] = set()
    for spans in list(pred_per_sentence) + list(gold_per_sentence):
        types.update(s.entity_type for s in spans)
    out = {t: ScoreTriple.zero() for t in sorted(types)}
    for pred, gold in zip(pred_per_sentence, gold_per_sentence):
        for t in out:
            out[t] = out[t] + exact_match(
                {s for s in pred if s.entity_type == t},
                {s for s in gold if s.entity_type == t},
            )
    return out


def macro_f1(per_type: dict[str, ScoreTriple]) -> float:
    """Unweighted mean of per-type F1."""
    if not per_type:
        raise ValueError("need at least one entity type")
    return sum(s.f1 for s in per_type.values()) / len(per_type)


@dataclass
class ErrorBreakdown:
    """FP/FN ratios over all decisions, each error sorted into a category.

    A false positive overlapping a same-type gold span is a boundary error;
    with no such overlap it is spurious. Mirrored for false negatives
    (boundary vs missed).
    """

    tp: int = 0
    boundary_fp: list[SpanAnnotation] = field(default_factory=list)
    spurious: list[SpanAnnotation] = field(default_factory=list)
    boundary_fn: list[SpanAnnotation] = field(default_factory=list)
    missed: list[SpanAnnotation] = field(default_factory=list)

    @property
    def fp(self) -> int:
        return len(self.boundary_fp) + len(self.spurious)

    @property
    def fn(self) -> int:
        return len(self.boundary_fn) + len(self.missed)

    @property
    def fp_ratio(self) -> float:
        total = self.fp + self.fn + self.tp
        return self.fp / total if total else 0.0

    @property
    def fn_ratio(self) -> float:
        total = self.fp + self.fn + self.tp
        return self.fn / total if total else 0.0


def _overlaps(a: SpanAnnotation, b: SpanAnnotation) -> bool:
    return a.entity_type == b.entity_type and a.start <= b.end and b.start <= a.end


def error_breakdown(pred_per_sentence, gold_per_sentence) -> ErrorBreakdown:
    """Categorize every FP/FN over aligned per-sentence span sets."""
    out = ErrorBreakdown()
    for pred, gold in zip(pred_per_sentence, gold_per_sentence):
        pred = set(pred)
        gold = set(gold)
        out.tp += len(pred & gold)
        for span in sorted(pred - gold):
            bucket = (
                out.boundary_fp
                if any(_overlaps(span, g) for g in gold)
                else out.spurious
            )
            bucket.append(span)
        for span in sorted(gold - pred):
            bucket = (
                out.boundary_fn
                if any(_overlaps(span, p) for p in pred)
                else out.missed
            )
            bucket.append(span)
    return out
