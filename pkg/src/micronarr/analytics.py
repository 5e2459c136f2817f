"""Descriptive statistics over annotated or classified corpora.

Covers the three standing questions about a narrative dataset: how often
keyword sentences carry no narrative at all, how category occurrences
distribute within each kind (cause chart and effect chart, each summing
to one over occurrences), and how counts move through calendar time.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable

from .ontology import Ontology

LabelSet = frozenset


class AnalyticsError(ValueError):
    """Empty or unusable analytics input."""


@dataclass
class PrevalenceRow:
    category: str
    count: int
    proportion: float


def prevalence(
    label_sets: Iterable[LabelSet], kind: str, ontology: Ontology
) -> list[PrevalenceRow]:
    """Per-category share of occurrences for one kind (cause or effect).

    The denominator is occurrences of that kind, not sentences, so each
    chart's proportions sum to one; zero-count categories still appear.
    """
    if kind not in ("cause", "effect"):
        raise ValueError(f"bad kind {kind!r}")
    categories = [
        lab.label for lab in (ontology.causes if kind == "cause" else ontology.effects)
    ]
    counts = {c: 0 for c in categories}
    n_sets = 0
    for labels in label_sets:
        n_sets += 1
        for role, category in labels:
            if role == kind:
                if category not in counts:
                    raise AnalyticsError(f"category {category!r} not in ontology")
                counts[category] += 1
    if n_sets == 0:
        raise AnalyticsError("no input")
    total = sum(counts.values())
    if total == 0:
        raise AnalyticsError(f"no {kind} occurrences in input")
    return [PrevalenceRow(c, counts[c], counts[c] / total) for c in categories]


@dataclass
class NonNarrativeRate:
    rate: float
    n_counted: int
    n_excluded: int  # instances with undefined (no-majority) gold

    def to_json(self) -> dict:
        return {
            "rate": self.rate,
            "n_counted": self.n_counted,
            "n_excluded": self.n_excluded,
        }


def nonnarrative_rate(flags: Iterable[bool | None]) -> NonNarrativeRate:
    """Fraction of instances labeled non-narrative.

    ``None`` flags (no binary majority) are excluded from the
    denominator but counted in the result.
    """
    n_false = n_counted = n_excluded = 0
    for flag in flags:
        if flag is None:
            n_excluded += 1
            continue
        n_counted += 1
        if not flag:
            n_false += 1
    if n_counted == 0:
        raise AnalyticsError("no instances with defined gold")
    return NonNarrativeRate(n_false / n_counted, n_counted, n_excluded)


@dataclass
class TimeBucket:
    bucket: str
    n_sentences: int = 0
    n_narratives: int = 0
    class_counts: dict[str, int] = field(default_factory=dict)

    def shares(self, categories_by_kind: dict[str, list[str]]) -> dict[str, float]:
        """Occurrence-normalized share per category, within its kind."""
        out = {}
        for kind, categories in categories_by_kind.items():
            total = sum(self.class_counts.get(c, 0) for c in categories)
            for c in categories:
                out[c] = self.class_counts.get(c, 0) / total if total else 0.0
        return out


@dataclass
class ClassifiedSentence:
    """The slice of a classified sentence the time series needs."""

    date: str  # YYYY-MM-DD
    contains_narrative: bool
    labels: LabelSet


def _bucket_key(date: str, bucket: str) -> str:
    if not date or len(date) < 7:
        raise AnalyticsError(f"undated or malformed date {date!r}")
    year, month = date[:4], date[5:7]
    if bucket == "year":
        return year
    if bucket == "month":
        return f"{year}-{month}"
    if bucket == "quarter":
        q = (int(month) - 1) // 3 + 1
        return f"{year}-Q{q}"
    raise ValueError(f"bad bucket {bucket!r}")


def _next_bucket(key: str, bucket: str) -> str:
    if bucket == "year":
        return str(int(key) + 1)
    if bucket == "month":
        year, month = int(key[:4]), int(key[5:7])
        month += 1
        if month > 12:
            year, month = year + 1, 1
        return f"{year:04d}-{month:02d}"
    year, q = int(key[:4]), int(key[-1])
    q += 1
    if q > 4:
        year, q = year + 1, 1
    return f"{year:04d}-Q{q}"


def timeseries(
    sentences: Iterable[ClassifiedSentence], bucket: str = "month"
) -> list[TimeBucket]:
    """Chronological per-bucket counts with explicit zero rows for gaps."""
    buckets: dict[str, TimeBucket] = {}
    for s in sentences:
        key = _bucket_key(s.date, bucket)
        row = buckets.setdefault(key, TimeBucket(bucket=key))
        row.n_sentences += 1
        if s.contains_narrative:
            row.n_narratives += 1
        for _, category in s.labels:
            row.class_counts[category] = row.class_counts.get(category, 0) + 1
    if not buckets:
        raise AnalyticsError("no input")
    ordered = sorted(buckets)
    out = []
    key = ordered[0]
    while True:
        out.append(buckets.get(key, TimeBucket(bucket=key)))
        if key == ordered[-1]:
            break
        key = _next_bucket(key, bucket)
    return out


def prevalence_csv(rows: list[PrevalenceRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["category", "count", "proportion"])
    for row in rows:
        writer.writerow([row.category, row.count, f"{row.proportion:.6f}"])
    return buf.getvalue()


def timeseries_csv(rows: list[TimeBucket], ontology: Ontology) -> str:
    categories = [lab.label for lab in ontology.labels]
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["bucket", "sentences", "narratives"] + categories)
    for row in rows:
        writer.writerow(
            [row.bucket, row.n_sentences, row.n_narratives]
            + [row.class_counts.get(c, 0) for c in categories]
        )
    return buf.getvalue()


def prevalence_chart(rows: list[PrevalenceRow], title: str, path):
    """Write a horizontal bar chart of category proportions to a file."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 0.4 * len(rows) + 1.2))
    labels = [r.category for r in rows][::-1]
    values = [r.proportion for r in rows][::-1]
    ax.barh(labels, values, color="#4878a8")
    ax.set_xlabel("proportion of occurrences")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def confusion_heatmap(matrix, path):
    """Render a confusion matrix (gold rows x predicted columns) to a file."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = matrix.labels
    grid = [[matrix.cell(g, p) for p in labels] for g in labels]
    size = max(4.0, 0.45 * len(labels))
    fig, ax = plt.subplots(figsize=(size + 1.5, size))
    im = ax.imshow(grid, cmap="Blues")
    ax.set_xticks(range(len(labels)), labels, rotation=90, fontsize=7)
    ax.set_yticks(range(len(labels)), labels, fontsize=7)
    ax.set_xlabel("predicted")
    ax.set_ylabel("gold")
    vmax = max((max(row) for row in grid), default=0)
    for i, row in enumerate(grid):
        for j, v in enumerate(row):
            if v:
                color = "white" if vmax and v > vmax * 0.6 else "black"
                ax.text(j, i, str(v), ha="center", va="center", fontsize=6, color=color)
    fig.colorbar(im, ax=ax, shrink=0.75)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def timeseries_chart(rows: list[TimeBucket], title: str, path):
    """Write sentence and narrative counts per bucket as a line chart."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs = [r.bucket for r in rows]
    fig, ax = plt.subplots(figsize=(max(6.0, 0.35 * len(rows)), 4.0))
    ax.plot(xs, [r.n_sentences for r in rows], label="sentences", color="#888888")
    ax.plot(xs, [r.n_narratives for r in rows], label="narratives", color="#4878a8")
    step = max(1, len(xs) // 24)
    ax.set_xticks(range(0, len(xs), step), xs[::step], rotation=90, fontsize=7)
    ax.set_ylabel("count")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
