"""Append-only annotation store and majority-vote gold derivation.

Annotator submissions are persisted as line-delimited JSON, one record
per line, and never rewritten: a resubmission by the same annotator for
the same sentence supersedes the earlier record but both stay in the
log.  An in-memory index rebuilt on open serves reads.  Gold labels for
a test split come from majority voting at two independent levels: the
binary contains-narrative flag, and each (role, category) pair.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from typing import Iterable

from . import schema
from .ontology import Ontology
from .schema import NarrativeAnnotation, label_set

SPLITS = ("train", "test")


class StoreError(ValueError):
    """Invalid record or unreadable store file."""


@dataclass(frozen=True)
class AnnotationRecord:
    """One annotator's annotation of one sentence."""

    sentence_id: str
    annotator: str
    timestamp: str  # RFC3339
    split: str  # "train" | "test"
    annotation: NarrativeAnnotation

    def to_json(self) -> dict:
        return {
            "sentence_id": self.sentence_id,
            "annotator": self.annotator,
            "timestamp": self.timestamp,
            "split": self.split,
            "annotation": schema.to_wire(self.annotation),
        }


def record_from_json(doc: dict, ontology: Ontology) -> AnnotationRecord:
    for key in ("sentence_id", "annotator", "timestamp", "split", "annotation"):
        if key not in doc:
            raise StoreError(f"annotation record missing {key!r}")
    if doc["split"] not in SPLITS:
        raise StoreError(f"bad split {doc['split']!r}")
    outcome = schema.parse(json.dumps(doc["annotation"]), ontology, mode="strict")
    if not outcome.ok:
        problems = "; ".join(f"{i.kind}: {i.message}" for i in outcome.diagnostics)
        raise StoreError(f"invalid annotation for {doc['sentence_id']}: {problems}")
    return AnnotationRecord(
        sentence_id=str(doc["sentence_id"]),
        annotator=str(doc["annotator"]),
        timestamp=str(doc["timestamp"]),
        split=doc["split"],
        annotation=outcome.annotation,
    )


@dataclass(frozen=True)
class GoldLabel:
    """Majority-vote ground truth for one sentence.

    ``binary_gold`` is None when no strict majority exists on the
    contains-narrative flag.  ``excluded_multiclass`` marks sentences
    with a narrative majority but no majority on any category pair;
    those enter binary scoring but not multi-label scoring.
    """

    sentence_id: str
    binary_gold: bool | None
    labels_gold: frozenset[tuple[str, str]]
    agreement: str  # "full" | "partial" | "none"
    n_annotators: int
    excluded_multiclass: bool

    def to_json(self) -> dict:
        return {
            "sentence_id": self.sentence_id,
            "binary_gold": self.binary_gold,
            "labels_gold": sorted([role, cat] for role, cat in self.labels_gold),
            "agreement": self.agreement,
            "excluded_multiclass": self.excluded_multiclass,
        }


def gold_from_json(doc: dict) -> GoldLabel:
    return GoldLabel(
        sentence_id=doc["sentence_id"],
        binary_gold=doc["binary_gold"],
        labels_gold=frozenset((r, c) for r, c in doc["labels_gold"]),
        agreement=doc.get("agreement", "none"),
        n_annotators=doc.get("n_annotators", 0),
        excluded_multiclass=bool(doc["excluded_multiclass"]),
    )


def derive_gold(sentence_id: str, records: Iterable[AnnotationRecord]) -> GoldLabel:
    """Majority-vote a sentence's effective records into a GoldLabel.

    Binary gold is the flag endorsed by a strict majority of the n
    annotators (absent on a tie).  A category pair enters labels_gold
    when at least floor(n/2)+1 annotators' label sets contain it --
    majority is applied per pair, not per whole annotation, so partial
    overlaps between annotators still yield usable gold.  The result is
    invariant under annotator order.
    """
    records = list(records)
    if not records:
        raise StoreError(f"no records for sentence {sentence_id}")
    n = len(records)
    majority = n // 2 + 1

    flags = [r.annotation.contains_narrative for r in records]
    n_true = sum(flags)
    if n_true >= majority:
        binary_gold = True
    elif n - n_true >= majority:
        binary_gold = False
    else:
        binary_gold = None

    sets = [label_set(r.annotation) for r in records]
    endorsements: dict[tuple[str, str], int] = {}
    for s in sets:
        for pair in s:
            endorsements[pair] = endorsements.get(pair, 0) + 1
    labels_gold = frozenset(p for p, k in endorsements.items() if k >= majority)

    if all(f == flags[0] for f in flags) and all(s == sets[0] for s in sets):
        agreement = "full"
    elif n_true >= 2 or (n - n_true) >= 2:
        agreement = "partial"
    else:
        agreement = "none"

    return GoldLabel(
        sentence_id=sentence_id,
        binary_gold=binary_gold,
        labels_gold=labels_gold,
        agreement=agreement,
        n_annotators=n,
        excluded_multiclass=binary_gold is True and not labels_gold,
    )


@dataclass
class GoldSummary:
    n_total: int = 0
    n_full: int = 0
    n_partial: int = 0
    n_none: int = 0
    n_excluded_multiclass: int = 0

    def to_json(self) -> dict:
        return {
            "n_total": self.n_total,
            "n_full": self.n_full,
            "n_partial": self.n_partial,
            "n_none": self.n_none,
            "n_excluded_multiclass": self.n_excluded_multiclass,
        }


class AnnotationStore:
    """Line-delimited JSON store with an in-memory effective-record index.

    Writes are serialized through a lock and flushed to disk before
    ``append`` returns, so an acknowledged record survives a restart and
    is visible to every subsequent read.
    """

    def __init__(self, path, ontology: Ontology):
        self.path = path
        self.ontology = ontology
        self._lock = threading.Lock()
        self._log: list[AnnotationRecord] = []
        self._effective: dict[tuple[str, str], AnnotationRecord] = {}
        self._replay()

    def _replay(self):
        if not os.path.exists(self.path):
            return
        with open(self.path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    doc = json.loads(line)
                    record = record_from_json(doc, self.ontology)
                except (json.JSONDecodeError, StoreError) as exc:
                    raise StoreError(f"{self.path}:{line_no}: {exc}") from exc
                self._index(record)

    def _index(self, record: AnnotationRecord):
        self._log.append(record)
        self._effective[(record.sentence_id, record.annotator)] = record

    def append(self, record: AnnotationRecord) -> AnnotationRecord:
        """Validate, durably persist, and index one record."""
        record.annotation.validate(self.ontology)
        if record.split not in SPLITS:
            raise StoreError(f"bad split {record.split!r}")
        line = json.dumps(record.to_json()) + "\n"
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line)
                fh.flush()
                os.fsync(fh.fileno())
            self._index(record)
        return record

    def __len__(self) -> int:
        return len(self._log)

    @property
    def log(self) -> list[AnnotationRecord]:
        return list(self._log)

    def effective_records(self, split: str | None = None) -> list[AnnotationRecord]:
        """Latest record per (sentence, annotator), in first-submission order."""
        out = []
        seen = set()
        for record in self._log:
            key = (record.sentence_id, record.annotator)
            if key in seen:
                continue
            seen.add(key)
            effective = self._effective[key]
            if split is None or effective.split == split:
                out.append(effective)
        return out

    def records_for_sentence(self, sentence_id: str) -> list[AnnotationRecord]:
        return [
            r for (sid, _), r in sorted(self._effective.items()) if sid == sentence_id
        ]

    def by_sentence(self, split: str | None = None) -> dict[str, list[AnnotationRecord]]:
        grouped: dict[str, list[AnnotationRecord]] = {}
        for record in self.effective_records(split):
            grouped.setdefault(record.sentence_id, []).append(record)
        return grouped

    def annotators(self, split: str | None = None) -> list[str]:
        return sorted({r.annotator for r in self.effective_records(split)})

    def counts(self) -> dict:
        """Progress counts: per annotator, per split, and log depth."""
        per_annotator: dict[str, int] = {}
        per_split = {s: 0 for s in SPLITS}
        for record in self.effective_records():
            per_annotator[record.annotator] = per_annotator.get(record.annotator, 0) + 1
            per_split[record.split] += 1
        return {
            "log_records": len(self._log),
            "effective_records": len(self._effective),
            "by_annotator": dict(sorted(per_annotator.items())),
            "by_split": per_split,
        }

    def gold_table(self, split: str = "test") -> tuple[list[GoldLabel], GoldSummary]:
        """One GoldLabel per sentence of the split, plus agreement counts."""
        table = []
        summary = GoldSummary()
        for sentence_id, records in sorted(self.by_sentence(split).items()):
            gold = derive_gold(sentence_id, records)
            table.append(gold)
            summary.n_total += 1
            if gold.agreement == "full":
                summary.n_full += 1
            elif gold.agreement == "partial":
                summary.n_partial += 1
            else:
                summary.n_none += 1
            if gold.excluded_multiclass:
                summary.n_excluded_multiclass += 1
        return table, summary


def write_gold(table: Iterable[GoldLabel], fh):
    for gold in table:
        fh.write(json.dumps(gold.to_json()) + "\n")


def read_gold(path) -> list[GoldLabel]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(gold_from_json(json.loads(line)))
    return out
