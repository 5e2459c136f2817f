"""Binary detection, micro-averaged multi-label F1, and the confusion matrix."""

import json
import random
from fractions import Fraction

import pytest

from micronarr.evaluation import (
    EvaluationError,
    Prediction,
    binary_f1,
    confusion,
    evaluate,
    micro_f1,
    read_predictions,
)
from micronarr.store import GoldLabel


RATES = ("effect", "rates")
COST = ("effect", "cost")
FISCAL = ("cause", "fiscal")
MONETARY = ("cause", "monetary")


def gold_row(sid, binary=True, labels=(), agreement="full", excluded=False):
    return GoldLabel(
        sentence_id=sid,
        binary_gold=binary,
        labels_gold=frozenset(labels),
        agreement=agreement,
        n_annotators=3,
        excluded_multiclass=excluded,
    )


def pred_row(sid, flag=True, labels=(), parse_failed=False):
    return Prediction(sid, flag, frozenset(labels), parse_failed)


# --- binary -----------------------------------------------------------------


def test_binary_counts_and_scores():
    pairs = [(True, True)] * 10 + [(True, False)] + [(False, True)] * 2 + [(False, False)] * 6
    score = binary_f1(pairs)
    assert (score.tp, score.fp, score.fn, score.tn) == (10, 1, 2, 6)
    assert score.precision == 10 / 11
    assert score.recall == 10 / 12
    assert score.f1 == 20 / 23
    assert score.n_scored == 19


def test_binary_all_negative_is_perfect():
    score = binary_f1([(False, False)] * 4)
    assert score.precision == score.recall == score.f1 == 1.0


def test_binary_zero_denominator_with_errors_is_zero():
    score = binary_f1([(True, False), (False, False)])
    assert score.precision == 0.0
    assert score.recall == 0.0  # no positives to recall, but an error occurred
    assert score.f1 == 0.0


def test_binary_empty_raises():
    with pytest.raises(EvaluationError):
        binary_f1([])


# --- micro multi-label ------------------------------------------------------


def test_micro_worked_example():
    pairs = [
        (frozenset({RATES}), frozenset({RATES})),
        (frozenset({FISCAL}), frozenset({FISCAL, COST})),
    ]
    score = micro_f1(pairs)
    assert (score.tp, score.fp, score.fn) == (2, 0, 1)
    assert score.micro_precision == 1.0
    assert score.micro_recall == 2 / 3
    assert score.micro_f1 == 0.8
    assert score.per_class == {
        "rates": {"tp": 1, "fp": 0, "fn": 0},
        "fiscal": {"tp": 1, "fp": 0, "fn": 0},
        "cost": {"tp": 0, "fp": 0, "fn": 1},
    }


def test_micro_symmetric_error_case():
    pairs = [
        (frozenset({RATES, MONETARY}), frozenset({RATES})),
        (frozenset({FISCAL}), frozenset({FISCAL, COST})),
    ]
    score = micro_f1(pairs)
    assert (score.tp, score.fp, score.fn) == (2, 1, 1)
    assert score.micro_f1 == 4 / 6


def test_micro_all_empty_is_perfect():
    score = micro_f1([(frozenset(), frozenset())] * 3)
    assert score.micro_precision == score.micro_recall == score.micro_f1 == 1.0


def test_micro_only_false_positives():
    score = micro_f1([(frozenset({RATES}), frozenset())])
    assert score.micro_precision == 0.0
    assert score.micro_recall == 0.0
    assert score.micro_f1 == 0.0


def _random_pairs(rng, n):
    cats = [("cause", c) for c in "abcd"] + [("effect", e) for e in "wxyz"]
    out = []
    for _ in range(n):
        p = frozenset(rng.sample(cats, rng.randint(0, 3)))
        g = frozenset(rng.sample(cats, rng.randint(0, 3)))
        out.append((p, g))
    return out


def test_micro_matches_counting_oracle():
    rng = random.Random(41)
    for _ in range(50):
        pairs = _random_pairs(rng, rng.randint(1, 30))
        score = micro_f1(pairs)
        tp = sum(len(p & g) for p, g in pairs)
        fp = sum(len(p - g) for p, g in pairs)
        fn = sum(len(g - p) for p, g in pairs)
        assert (score.tp, score.fp, score.fn) == (tp, fp, fn)
        if 2 * tp + fp + fn:
            assert score.micro_f1 == float(Fraction(2 * tp, 2 * tp + fp + fn))


def test_micro_permutation_invariant():
    rng = random.Random(42)
    pairs = _random_pairs(rng, 20)
    base = micro_f1(pairs).to_json()
    for _ in range(10):
        rng.shuffle(pairs)
        assert micro_f1(pairs).to_json() == base


def test_micro_extra_correct_instance_never_hurts():
    rng = random.Random(43)
    for _ in range(50):
        pairs = _random_pairs(rng, rng.randint(1, 10))
        before = micro_f1(pairs).micro_f1
        bonus = frozenset({RATES})
        after = micro_f1(pairs + [(bonus, bonus)]).micro_f1
        assert after >= before


# --- confusion matrix -------------------------------------------------------


def test_confusion_worked_example(onto):
    matrix = confusion([(frozenset({RATES, MONETARY}), frozenset({RATES}))], onto)
    assert matrix.cell("rates", "rates") == 1
    assert matrix.cell("none", "monetary") == 1
    assert matrix.cell("none", "none") == 0
    assert matrix.diagonal_sum() == 1
    assert matrix.none_row_sum() == 1
    assert matrix.none_column_sum() == 0


def test_confusion_pure_miss(onto):
    matrix = confusion([(frozenset(), frozenset({COST}))], onto)
    assert matrix.cell("cost", "none") == 1
    assert matrix.none_column_sum() == 1
    assert matrix.none_row_sum() == 0


def test_confusion_never_cross_pairs(onto):
    # Wrong category on both sides: one FP row entry, one FN column entry,
    # nothing at (gold, predicted).
    matrix = confusion([(frozenset({MONETARY}), frozenset({RATES}))], onto)
    assert matrix.cell("rates", "monetary") == 0
    assert matrix.cell("none", "monetary") == 1
    assert matrix.cell("rates", "none") == 1


def test_confusion_axis_and_csv(onto):
    matrix = confusion([(frozenset({RATES}), frozenset({RATES}))], onto)
    assert len(matrix.labels) == 20  # 19 categories plus "none"
    assert matrix.labels[-1] == "none"
    csv = matrix.to_csv()
    lines = csv.strip().split("\n")
    assert lines[0].startswith("gold\\predicted,")
    assert len(lines) == 21
    rates_row = lines[1 + matrix.labels.index("rates")].split(",")
    assert rates_row[0] == "rates"
    assert rates_row[1 + matrix.labels.index("rates")] == "1"


def test_confusion_consistent_with_micro(onto):
    rng = random.Random(44)
    cats = [("cause", l.label) for l in onto.causes] + [
        ("effect", l.label) for l in onto.effects
    ]
    for _ in range(30):
        pairs = [
            (
                frozenset(rng.sample(cats, rng.randint(0, 3))),
                frozenset(rng.sample(cats, rng.randint(0, 3))),
            )
            for _ in range(rng.randint(1, 40))
        ]
        score = micro_f1(pairs)
        matrix = confusion(pairs, onto)
        assert matrix.diagonal_sum() == score.tp
        assert matrix.none_row_sum() == score.fp
        assert matrix.none_column_sum() == score.fn
        assert sum(matrix.counts.values()) == score.tp + score.fp + score.fn


def test_confusion_rejects_unknown_label(onto):
    with pytest.raises(EvaluationError):
        confusion([(frozenset({("cause", "weather")}), frozenset())], onto)


# --- joining and the report -------------------------------------------------


def test_evaluate_happy_path(onto):
    gold = [
        gold_row("s1", labels={RATES}),
        gold_row("s2", binary=False),
        gold_row("s3", labels={FISCAL, COST}),
    ]
    preds = [
        pred_row("s1", labels={RATES}),
        pred_row("s2", flag=False),
        pred_row("s3", labels={FISCAL}),
    ]
    report = evaluate(preds, gold, onto)
    assert report.n_total == 3
    assert report.n_parse_failed == 0
    assert report.binary.tp == 2 and report.binary.tn == 1
    assert (report.multiclass.tp, report.multiclass.fn) == (2, 1)
    assert report.multiclass.micro_f1 == 0.8
    assert report.confusion.diagonal_sum() == 2


def test_evaluate_exclusions(onto):
    gold = [
        gold_row("s1", binary=None, agreement="none"),
        gold_row("s2", binary=True, labels=frozenset(), excluded=True),
        gold_row("s3", labels={RATES}),
    ]
    preds = [
        pred_row("s1", labels={RATES}),
        pred_row("s2", labels={MONETARY}),
        pred_row("s3", labels={RATES}),
    ]
    report = evaluate(preds, gold, onto)
    # s1 drops out of both tasks; s2 still counts for detection.
    assert report.binary.n_scored == 2
    assert report.binary.n_excluded == 1
    assert report.multiclass.n_scored == 1
    assert report.multiclass.n_excluded == 2
    assert report.multiclass.tp == 1 and report.multiclass.fp == 0
    # s2's spurious label never reaches the matrix either.
    assert sum(report.confusion.counts.values()) == 1


def test_evaluate_parse_failures_score_as_non_narrative(onto):
    gold = [gold_row("s1", labels={RATES}), gold_row("s2", binary=False)]
    preds = [
        pred_row("s1", flag=False, labels=frozenset(), parse_failed=True),
        pred_row("s2", flag=False),
    ]
    report = evaluate(preds, gold, onto)
    assert report.n_parse_failed == 1
    assert report.binary.fn == 1 and report.binary.tn == 1
    assert report.multiclass.fn == 1


def test_evaluate_join_errors(onto):
    gold = [gold_row("s1"), gold_row("s2")]
    with pytest.raises(EvaluationError, match="duplicate gold"):
        evaluate([pred_row("s1")], gold + [gold_row("s2")], onto)
    with pytest.raises(EvaluationError, match="duplicate prediction"):
        evaluate([pred_row("s1"), pred_row("s1"), pred_row("s2")], gold, onto)
    with pytest.raises(EvaluationError, match="no gold row"):
        evaluate([pred_row("s1"), pred_row("s9")], [gold_row("s1")], onto)
    with pytest.raises(EvaluationError, match="no prediction"):
        evaluate([pred_row("s1")], gold, onto)


def test_evaluate_order_invariant(onto):
    rng = random.Random(45)
    gold = [gold_row(f"s{i}", labels={RATES} if i % 2 else {FISCAL}) for i in range(20)]
    preds = [
        pred_row(f"s{i}", labels={RATES} if i % 3 else frozenset()) for i in range(20)
    ]
    base = evaluate(preds, gold, onto).to_json()
    for _ in range(10):
        rng.shuffle(gold)
        rng.shuffle(preds)
        assert evaluate(preds, gold, onto).to_json() == base


def test_report_text_identity_prints_ones(onto):
    gold = [gold_row("s1", labels={RATES}), gold_row("s2", binary=False)]
    preds = [pred_row("s1", labels={RATES}), pred_row("s2", flag=False)]
    text = evaluate(preds, gold, onto).to_text()
    assert "binary" in text and "multiclass" in text
    assert text.count("1.000") >= 6  # P, R, F1 perfect on both tasks


# --- prediction loading -----------------------------------------------------


def test_prediction_from_result_json():
    doc = {
        "sentence_id": "d1:0",
        "status": "ok",
        "annotation": {
            "foreign": False,
            "contains-narrative": True,
            "inflation-narratives": {
                "inflation-time": "present",
                "inflation-direction": "up",
                "narratives": [
                    {"cause": "fiscal", "time": "present"},
                    {"effect": "rates", "time": "future"},
                ],
            },
        },
    }
    pred = Prediction.from_result_json(doc)
    assert pred.contains_narrative is True
    assert pred.labels == {FISCAL, RATES}
    assert pred.parse_failed is False


def test_prediction_from_recovered_and_failed():
    ok = {
        "sentence_id": "a",
        "status": "recovered",
        "annotation": {"foreign": False, "contains-narrative": False, "inflation-narratives": None},
    }
    pred = Prediction.from_result_json(ok)
    assert pred.parse_failed is False
    assert pred.labels == frozenset()

    for status in ("failed", "error"):
        bad = Prediction.from_result_json(
            {"sentence_id": "b", "status": status, "annotation": None}
        )
        assert bad.parse_failed is True
        assert bad.contains_narrative is False


def test_read_predictions(tmp_path):
    rows = [
        {"sentence_id": "s1", "status": "ok",
         "annotation": {"contains-narrative": False, "inflation-narratives": None}},
        {"sentence_id": "s2", "status": "failed", "annotation": None},
    ]
    path = tmp_path / "pred.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    preds = read_predictions(path)
    assert [p.sentence_id for p in preds] == ["s1", "s2"]
    assert preds[1].parse_failed is True
