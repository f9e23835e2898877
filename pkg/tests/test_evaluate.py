import numpy as np
import pytest

from mtner.data import GoldWithAlternatives, SpanAnnotation
from mtner.evaluate import (
    ScoreTriple,
    alternative_match,
    error_breakdown,
    exact_match,
    macro_f1,
    score_by_type,
)


def _span(s, e, t="G"):
    return SpanAnnotation(s, e, t)


class TestScoreTriple:
    def test_zero_conventions(self):
        z = ScoreTriple.zero()
        assert z.precision == 0.0 and z.recall == 0.0 and z.f1 == 0.0

    def test_f1_zero_when_no_tp(self):
        assert ScoreTriple(0, 3, 2).f1 == 0.0

    def test_addition_pools_counts(self):
        s = ScoreTriple(1, 2, 3) + ScoreTriple(4, 5, 6)
        assert (s.tp, s.fp, s.fn) == (5, 7, 9)


class TestExactMatch:
    def test_perfect(self):
        spans = {_span(0, 1), _span(3, 3)}
        s = exact_match(spans, set(spans))
        assert s.precision == s.recall == s.f1 == 1.0

    def test_empty_prediction(self):
        s = exact_match(set(), {_span(0, 1)})
        assert s.precision == 0.0 and s.recall == 0.0 and s.f1 == 0.0

    def test_hand_scored_fixture(self):
        # 2 predictions (1 right), 3 gold: P=0.5, R=1/3, F1=0.4
        pred = {_span(0, 1), _span(4, 5)}
        gold = {_span(0, 1), _span(2, 2), _span(7, 8)}
        s = exact_match(pred, gold)
        assert abs(s.precision - 0.5) < 1e-9
        assert abs(s.recall - 1.0 / 3.0) < 1e-9
        assert abs(s.f1 - 0.4) < 1e-9

    def test_type_must_match(self):
        s = exact_match({_span(0, 1, "G")}, {_span(0, 1, "D")})
        assert s.tp == 0 and s.fp == 1 and s.fn == 1

    def test_count_identities(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            pred = {_span(int(a), int(a) + int(b))
                    for a, b in rng.integers(0, 6, size=(4, 2))}
            gold = {_span(int(a), int(a) + int(b))
                    for a, b in rng.integers(0, 6, size=(4, 2))}
            s = exact_match(pred, gold)
            assert s.tp + s.fp == len(pred)
            assert s.tp + s.fn == len(gold)


class TestAlternativeMatch:
    def test_empty_alternatives_equals_exact(self):
        pred = {_span(0, 1), _span(4, 4)}
        gold_spans = [_span(0, 1), _span(2, 3)]
        alt = alternative_match(pred, [GoldWithAlternatives(g) for g in gold_spans])
        ex = exact_match(pred, set(gold_spans))
        assert (alt.tp, alt.fp, alt.fn) == (ex.tp, ex.fp, ex.fn)

    def test_alternative_boundary_accepted(self):
        gold = [GoldWithAlternatives(_span(2, 4), [_span(3, 4)])]
        s = alternative_match({_span(3, 4)}, gold)
        assert s.tp == 1 and s.fp == 0 and s.fn == 0

    def test_single_consumption(self):
        # two predictions acceptable to one gold: second one is a FP
        gold = [GoldWithAlternatives(_span(2, 4), [_span(3, 4)])]
        s = alternative_match({_span(2, 4), _span(3, 4)}, gold)
        assert s.tp == 1 and s.fp == 1 and s.fn == 0

    def test_earlier_gold_takes_shared_prediction(self):
        shared = _span(1, 1)
        gold = [
            GoldWithAlternatives(_span(0, 1), [shared]),
            GoldWithAlternatives(shared),
        ]
        s = alternative_match({shared}, gold)
        # first gold consumes it; second goes unmatched
        assert s.tp == 1 and s.fn == 1

    def test_tp_never_below_exact(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            gold_spans = [_span(int(s), int(s) + int(w))
                          for s, w in rng.integers(0, 5, size=(3, 2))]
            gold = [
                GoldWithAlternatives(
                    g,
                    [_span(g.start, g.end + 1)] if rng.random() < 0.5 else [],
                )
                for g in gold_spans
            ]
            pred = {_span(int(s), int(s) + int(w))
                    for s, w in rng.integers(0, 6, size=(3, 2))}
            alt = alternative_match(pred, gold)
            ex = exact_match(pred, set(gold_spans))
            assert alt.tp >= ex.tp


class TestScoreByType:
    def test_pooled_counts(self):
        pred = [{_span(0, 0, "G")}, {_span(1, 2, "G"), _span(4, 4, "D")}]
        gold = [{_span(0, 0, "G")}, {_span(1, 2, "G"), _span(5, 5, "D")}]
        per = score_by_type(pred, gold)
        assert per["G"].tp == 2 and per["G"].fp == 0
        assert per["D"].tp == 0 and per["D"].fp == 1 and per["D"].fn == 1

    def test_types_pooled_across_sentences(self):
        # same type from different sentences lands in one bucket
        pred = [{_span(0, 0, "G")}, {_span(0, 0, "G")}]
        gold = [{_span(0, 0, "G")}, set()]
        per = score_by_type(pred, gold)
        assert per["G"].tp == 1 and per["G"].fp == 1

    def test_misaligned_lengths_rejected(self):
        with pytest.raises(ValueError):
            score_by_type([set()], [set(), set()])

    def test_sentence_order_invariance(self):
        pred = [{_span(0, 0, "G")}, {_span(2, 3, "D")}]
        gold = [{_span(0, 0, "G")}, {_span(2, 2, "D")}]
        a = score_by_type(pred, gold)
        b = score_by_type(pred[::-1], gold[::-1])
        assert a == b


class TestMacroF1:
    def test_single_type(self):
        per = {"G": ScoreTriple(1, 1, 0)}
        assert macro_f1(per) == per["G"].f1

    def test_unweighted_mean(self):
        per = {
            "A": ScoreTriple(4, 1, 1),  # F1 = 0.8
            "B": ScoreTriple(3, 2, 2),  # F1 = 0.6
        }
        assert abs(macro_f1(per) - 0.7) < 1e-12

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            macro_f1({})


class TestErrorBreakdown:
    def test_perfect_prediction(self):
        spans = [{_span(0, 1)}]
        b = error_breakdown(spans, [set(s) for s in spans])
        assert b.fp_ratio == 0.0 and b.fn_ratio == 0.0
        assert b.tp == 1

    def test_boundary_error(self):
        b = error_breakdown([{_span(0, 1)}], [{_span(0, 2)}])
        assert b.boundary_fp == [_span(0, 1)]
        assert b.boundary_fn == [_span(0, 2)]
        assert not b.spurious and not b.missed

    def test_disjoint_is_spurious_and_missed(self):
        b = error_breakdown([{_span(5, 6)}], [{_span(0, 1)}])
        assert b.spurious == [_span(5, 6)]
        assert b.missed == [_span(0, 1)]

    def test_type_mismatch_not_boundary(self):
        # overlap with a different type does not count as a boundary error
        b = error_breakdown([{_span(0, 1, "G")}], [{_span(0, 1, "D")}])
        assert b.spurious and b.missed

    def test_ratios(self):
        pred = [{_span(0, 0), _span(2, 3)}]
        gold = [{_span(0, 0), _span(5, 5)}]
        b = error_breakdown(pred, gold)
        # tp=1, fp=1, fn=1
        assert abs(b.fp_ratio - 1.0 / 3.0) < 1e-12
        assert abs(b.fn_ratio - 1.0 / 3.0) < 1e-12
