"""Scoring predictions against majority-vote gold.

Two tasks are scored strictly separately: binary narrative detection
(did the sentence carry any narrative?) and multi-label narrative
classification (which category pairs?).  Multi-label scores are
micro-averaged: true/false positives and false negatives are tallied
across all instances irrespective of class, then folded into one F1.

The confusion matrix follows the "none"-matching convention: per
instance, categories present in both prediction and gold land on the
diagonal, an unmatched predicted category counts against column
<category> in row "none", and an unmatched gold category counts against
column "none" in its own row.  Unmatched predictions and unmatched gold
are never cross-paired.  Orientation is fixed: gold on rows, predictions
on columns.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .ontology import Ontology
from .store import GoldLabel

NONE_LABEL = "none"

LabelSet = frozenset  # of (role, category) pairs


class EvaluationError(ValueError):
    """Unjoinable or duplicated prediction/gold input."""


def _ratio(num: int, den: int, errors: int) -> float:
    # 0/0 counts as perfect only when there were no errors of any kind.
    if den == 0:
        return 1.0 if errors == 0 else 0.0
    return num / den


@dataclass
class BinaryScore:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0
    n_scored: int = 0
    n_excluded: int = 0

    @property
    def precision(self) -> float:
        return _ratio(self.tp, self.tp + self.fp, self.fn)

    @property
    def recall(self) -> float:
        return _ratio(self.tp, self.tp + self.fn, self.fp)

    @property
    def f1(self) -> float:
        return _ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn, 0)

    def to_json(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
            "n_scored": self.n_scored, "n_excluded": self.n_excluded,
        }


@dataclass
class MicroScore:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    per_class: dict[str, dict[str, int]] = field(default_factory=dict)
    n_scored: int = 0
    n_excluded: int = 0

    def _bump(self, category: str, slot: str):
        tally = self.per_class.setdefault(category, {"tp": 0, "fp": 0, "fn": 0})
        tally[slot] += 1

    @property
    def micro_precision(self) -> float:
        return _ratio(self.tp, self.tp + self.fp, self.fn)

    @property
    def micro_recall(self) -> float:
        return _ratio(self.tp, self.tp + self.fn, self.fp)

    @property
    def micro_f1(self) -> float:
        return _ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn, 0)

    def to_json(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "fn": self.fn,
            "micro_precision": self.micro_precision,
            "micro_recall": self.micro_recall,
            "micro_f1": self.micro_f1,
            "per_class": {k: dict(v) for k, v in sorted(self.per_class.items())},
            "n_scored": self.n_scored, "n_excluded": self.n_excluded,
        }


def binary_f1(pairs: Sequence[tuple[bool, bool]]) -> BinaryScore:
    """Standard binary P/R/F1 with "narrative" as the positive class."""
    if not pairs:
        raise EvaluationError("no instances to score")
    score = BinaryScore(n_scored=len(pairs))
    for predicted, gold in pairs:
        if predicted and gold:
            score.tp += 1
        elif predicted and not gold:
            score.fp += 1
        elif not predicted and gold:
            score.fn += 1
        else:
            score.tn += 1
    return score


def micro_f1(pairs: Sequence[tuple[LabelSet, LabelSet]]) -> MicroScore:
    """Micro-averaged multi-label F1 over (predicted, gold) label sets.

    Per instance TP = |P & G|, FP = |P - G|, FN = |G - P|; the summed
    tallies give micro precision/recall/F1.
    """
    if not pairs:
        raise EvaluationError("no instances to score")
    score = MicroScore(n_scored=len(pairs))
    for predicted, gold in pairs:
        predicted, gold = frozenset(predicted), frozenset(gold)
        for _, category in predicted & gold:
            score.tp += 1
            score._bump(category, "tp")
        for _, category in predicted - gold:
            score.fp += 1
            score._bump(category, "fp")
        for _, category in gold - predicted:
            score.fn += 1
            score._bump(category, "fn")
    return score


@dataclass
class ConfusionMatrix:
    """Gold-rows x predicted-columns counts over categories plus "none"."""

    labels: list[str]  # axis order: ontology categories then "none"
    counts: dict[tuple[str, str], int] = field(default_factory=dict)

    @classmethod
    def for_ontology(cls, ontology: Ontology) -> "ConfusionMatrix":
        # Axis keyed by category string; dedup in case a label string is
        # shared between the cause and effect kinds.
        axis = list(dict.fromkeys(lab.label for lab in ontology.labels))
        return cls(labels=axis + [NONE_LABEL])

    def bump(self, gold: str, predicted: str):
        for axis_label in (gold, predicted):
            if axis_label not in self.labels:
                raise EvaluationError(f"label {axis_label!r} not on the matrix axis")
        key = (gold, predicted)
        self.counts[key] = self.counts.get(key, 0) + 1

    def cell(self, gold: str, predicted: str) -> int:
        return self.counts.get((gold, predicted), 0)

    def diagonal_sum(self) -> int:
        return sum(self.cell(l, l) for l in self.labels if l != NONE_LABEL)

    def none_row_sum(self) -> int:
        return sum(self.cell(NONE_LABEL, l) for l in self.labels)

    def none_column_sum(self) -> int:
        return sum(self.cell(l, NONE_LABEL) for l in self.labels)

    def to_csv(self) -> str:
        lines = ["gold\\predicted," + ",".join(self.labels)]
        for g in self.labels:
            lines.append(g + "," + ",".join(str(self.cell(g, p)) for p in self.labels))
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {
            "labels": list(self.labels),
            "rows": [[self.cell(g, p) for p in self.labels] for g in self.labels],
        }


def confusion(
    pairs: Sequence[tuple[LabelSet, LabelSet]], ontology: Ontology
) -> ConfusionMatrix:
    """Accumulate the "none"-matched confusion matrix over instances.

    Matched categories hit the diagonal; a predicted category with no
    gold match books (none, category); a gold category with no predicted
    match books (category, none).  The (none, none) cell stays zero by
    construction.
    """
    if not pairs:
        raise EvaluationError("no instances to score")
    matrix = ConfusionMatrix.for_ontology(ontology)
    for predicted, gold in pairs:
        predicted, gold = frozenset(predicted), frozenset(gold)
        for _, category in predicted & gold:
            matrix.bump(category, category)
        for _, category in predicted - gold:
            matrix.bump(NONE_LABEL, category)
        for _, category in gold - predicted:
            matrix.bump(category, NONE_LABEL)
    return matrix


@dataclass
class Prediction:
    """A model's output for one sentence, after parsing.

    Unparseable output (``annotation is None``) scores as a confident
    non-narrative with an empty label set; the report keeps count so the
    damage stays visible.
    """

    sentence_id: str
    contains_narrative: bool
    labels: LabelSet
    parse_failed: bool = False

    @classmethod
    def from_result_json(cls, doc: dict) -> "Prediction":
        annotation = doc.get("annotation")
        if doc.get("status") in ("ok", "recovered") and annotation:
            pairs = frozenset(
                (role, entry[role])
                for entry in (annotation.get("inflation-narratives") or {}).get("narratives", [])
                for role in ("cause", "effect")
                if role in entry
            )
            return cls(
                sentence_id=doc["sentence_id"],
                contains_narrative=bool(annotation.get("contains-narrative")),
                labels=pairs,
            )
        return cls(
            sentence_id=doc["sentence_id"],
            contains_narrative=False,
            labels=frozenset(),
            parse_failed=True,
        )


@dataclass
class EvalReport:
    binary: BinaryScore
    multiclass: MicroScore
    confusion: ConfusionMatrix
    n_total: int
    n_parse_failed: int

    def to_json(self) -> dict:
        return {
            "n_total": self.n_total,
            "n_parse_failed": self.n_parse_failed,
            "binary": self.binary.to_json(),
            "multiclass": self.multiclass.to_json(),
            "confusion": self.confusion.to_json(),
        }

    def to_text(self) -> str:
        b, m = self.binary, self.multiclass
        lines = [
            f"instances        {self.n_total}",
            f"parse failures   {self.n_parse_failed}",
            "",
            "task        scored  excl.  prec    recall  f1",
            (
                f"binary      {b.n_scored:<7d} {b.n_excluded:<6d} "
                f"{b.precision:<7.3f} {b.recall:<7.3f} {b.f1:.3f}"
            ),
            (
                f"multiclass  {m.n_scored:<7d} {m.n_excluded:<6d} "
                f"{m.micro_precision:<7.3f} {m.micro_recall:<7.3f} {m.micro_f1:.3f}"
            ),
        ]
        return "\n".join(lines) + "\n"


def evaluate(
    predictions: Iterable[Prediction],
    gold: Iterable[GoldLabel],
    ontology: Ontology,
) -> EvalReport:
    """Join predictions to gold by sentence id and score both tasks.

    Instances without a binary majority are excluded from everything;
    instances flagged excluded-from-multiclass skip the multi-label task
    and the matrix but still count for detection.  Duplicate or
    unmatched sentence ids are errors.
    """
    gold_by_id: dict[str, GoldLabel] = {}
    for g in gold:
        if g.sentence_id in gold_by_id:
            raise EvaluationError(f"duplicate gold row for {g.sentence_id!r}")
        gold_by_id[g.sentence_id] = g

    seen: set[str] = set()
    binary_pairs: list[tuple[bool, bool]] = []
    multi_pairs: list[tuple[LabelSet, LabelSet]] = []
    n_total = n_parse_failed = n_excl_binary = n_excl_multi = 0
    for pred in predictions:
        if pred.sentence_id in seen:
            raise EvaluationError(f"duplicate prediction for {pred.sentence_id!r}")
        seen.add(pred.sentence_id)
        g = gold_by_id.get(pred.sentence_id)
        if g is None:
            raise EvaluationError(f"prediction {pred.sentence_id!r} has no gold row")
        n_total += 1
        if pred.parse_failed:
            n_parse_failed += 1
        if g.binary_gold is None:
            n_excl_binary += 1
            n_excl_multi += 1
            continue
        binary_pairs.append((pred.contains_narrative, g.binary_gold))
        if g.excluded_multiclass:
            n_excl_multi += 1
            continue
        multi_pairs.append((pred.labels, g.labels_gold))

    missing = set(gold_by_id) - seen
    if missing:
        raise EvaluationError(f"no prediction for gold rows: {sorted(missing)[:5]}")

    binary = binary_f1(binary_pairs)
    binary.n_excluded = n_excl_binary
    multiclass = micro_f1(multi_pairs)
    multiclass.n_excluded = n_excl_multi
    matrix = confusion(multi_pairs, ontology)
    return EvalReport(
        binary=binary,
        multiclass=multiclass,
        confusion=matrix,
        n_total=n_total,
        n_parse_failed=n_parse_failed,
    )


def read_predictions(path) -> list[Prediction]:
    """Load a classify-results JSONL file into Prediction rows."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(Prediction.from_result_json(json.loads(line)))
    return out
