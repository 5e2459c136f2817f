"""Inter-annotator agreement: MASI set distance and Krippendorff's alpha.

alpha = 1 - D_o / D_e, where D_o is the observed mean pairwise distance
within units and D_e the expected distance over all annotations pooled
across units:

    D_o = (1/N) * sum_u [ 1/(m_u - 1) * sum_{i != j} delta(v_ui, v_uj) ]
    D_e = (1/(N(N-1))) * sum over ordered pairs of pooled annotations

Units with a single annotation are excluded from both sums (standard
missing-data treatment); N counts annotations in the remaining units.
All arithmetic is exact rational, so perfect agreement is exactly 1.0,
the frequency-counted D_e matches a naive double loop bit for bit, and
results agree with a brute-force oracle to machine precision.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Hashable, Iterable

from .schema import label_set
from .store import AnnotationStore


class InsufficientDataError(ValueError):
    """Fewer than two units carry multiple annotations; alpha undefined."""


class DegenerateDistributionError(ValueError):
    """Expected disagreement is zero; alpha undefined."""


def masi_fraction(a: frozenset, b: frozenset) -> Fraction:
    """MASI distance as an exact rational: 1 - J(a,b) * M(a,b).

    J is Jaccard similarity with J(empty, empty) = 1.  M is 1 for equal
    sets, 2/3 when one strictly contains the other, 1/3 for overlapping
    incomparable sets, and 0 for disjoint sets.
    """
    a, b = frozenset(a), frozenset(b)
    if a == b:
        return Fraction(0)  # J = M = 1, covers the empty-empty case
    inter = len(a & b)
    union = len(a | b)
    jaccard = Fraction(inter, union)
    if a < b or b < a:
        m = Fraction(2, 3)
    elif inter > 0:
        m = Fraction(1, 3)
    else:
        m = Fraction(0)
    return 1 - jaccard * m


def masi_distance(a: Iterable, b: Iterable) -> float:
    """MASI distance between two label sets, in [0, 1].

    0 iff the sets are equal; 1 iff they are disjoint and not both empty.
    """
    return float(masi_fraction(frozenset(a), frozenset(b)))


def masi_squared_fraction(a: frozenset, b: frozenset) -> Fraction:
    d = masi_fraction(a, b)
    return d * d


def nominal_fraction(a, b) -> Fraction:
    return Fraction(0) if a == b else Fraction(1)


DELTA_FUNCTIONS = {
    "masi": masi_fraction,
    "masi-squared": masi_squared_fraction,
    "nominal": nominal_fraction,
}


@dataclass
class ReliabilityMatrix:
    """Annotations grouped by unit; absent annotators are simply omitted.

    ``values[i]`` holds the annotation values (any hashables, typically
    frozen label sets or booleans) given to unit ``units[i]``.
    """

    units: list[str] = field(default_factory=list)
    values: list[list[Hashable]] = field(default_factory=list)

    def add(self, unit: str, annotations: Iterable[Hashable]):
        annotations = list(annotations)
        if not annotations:
            raise ValueError(f"unit {unit!r} has no annotations")
        self.units.append(unit)
        self.values.append(annotations)

    @property
    def m_u(self) -> list[int]:
        return [len(v) for v in self.values]


def krippendorff_alpha(
    matrix: ReliabilityMatrix,
    distance: Callable[[Hashable, Hashable], Fraction] = masi_fraction,
) -> float:
    """Distance-weighted Krippendorff's alpha for a reliability matrix.

    ``distance`` must be symmetric with distance(v, v) = 0; values it
    returns are coerced to exact rationals, so any float-valued distance
    still sums deterministically.  Invariant under annotator column
    permutation and unit reordering.  Raises InsufficientDataError with
    fewer than two pairable units and DegenerateDistributionError when
    expected disagreement vanishes without perfect agreement.
    """
    pairable = [vals for vals in matrix.values if len(vals) >= 2]
    if len(pairable) < 2:
        raise InsufficientDataError(
            f"need >= 2 units with >= 2 annotations, have {len(pairable)}"
        )
    n_total = sum(len(vals) for vals in pairable)

    cache: dict[tuple, Fraction] = {}

    def delta(a, b) -> Fraction:
        key = (a, b)
        hit = cache.get(key)
        if hit is None:
            hit = Fraction(distance(a, b))
            cache[key] = cache[(b, a)] = hit
        return hit

    d_obs = Fraction(0)
    for vals in pairable:
        within = Fraction(0)
        for i, vi in enumerate(vals):
            for j, vj in enumerate(vals):
                if i != j:
                    within += delta(vi, vj)
        d_obs += within / (len(vals) - 1)
    d_obs /= n_total
    if d_obs == 0:
        return 1.0  # perfect agreement regardless of the distance function

    # D_e over the pooled values: count distinct values once and weight by
    # frequency, which is O(k^2) in distinct values yet identical to the
    # naive O(N^2) double loop because the arithmetic is exact.
    pool = Counter()
    for vals in pairable:
        pool.update(vals)
    distinct = list(pool.items())
    d_exp = Fraction(0)
    for i, (vi, ni) in enumerate(distinct):
        d_exp += ni * (ni - 1) * delta(vi, vi)
        for vj, nj in distinct[i + 1 :]:
            d_exp += 2 * ni * nj * delta(vi, vj)
    d_exp /= n_total * (n_total - 1)
    if d_exp == 0:
        raise DegenerateDistributionError("expected disagreement is zero")
    return float(1 - d_obs / d_exp)


def binary_matrix(store: AnnotationStore, split: str = "test") -> ReliabilityMatrix:
    """Units valued by each annotator's contains-narrative flag."""
    matrix = ReliabilityMatrix()
    for sentence_id, records in sorted(store.by_sentence(split).items()):
        matrix.add(sentence_id, [r.annotation.contains_narrative for r in records])
    return matrix


def label_matrix(store: AnnotationStore, split: str = "test") -> ReliabilityMatrix:
    """Units valued by each annotator's (role, category) label set."""
    matrix = ReliabilityMatrix()
    for sentence_id, records in sorted(store.by_sentence(split).items()):
        matrix.add(sentence_id, [label_set(r.annotation) for r in records])
    return matrix


def agreement_report(
    store: AnnotationStore,
    split: str = "test",
    delta: str = "masi",
    sources: dict[str, str] | None = None,
) -> list[dict]:
    """Alpha per corpus source for the binary flag and the full label sets.

    Binary agreement uses nominal 0/1 distance; label sets use MASI (or
    squared MASI via ``delta``).  ``sources`` maps sentence ids to
    corpus tags; without it every sentence lands in one "all" group.
    Sources with too little overlap report an error string instead of a
    value, never raise.
    """
    if delta not in ("masi", "masi-squared"):
        raise ValueError(f"bad delta {delta!r}")
    set_delta = DELTA_FUNCTIONS[delta]
    sources = sources or {}

    grouped = store.by_sentence(split)
    buckets: dict[str, dict] = {}
    for sentence_id, records in sorted(grouped.items()):
        source = sources.get(sentence_id, "all")
        bucket = buckets.setdefault(
            source, {"binary": ReliabilityMatrix(), "labels": ReliabilityMatrix()}
        )
        bucket["binary"].add(sentence_id, [r.annotation.contains_narrative for r in records])
        bucket["labels"].add(sentence_id, [label_set(r.annotation) for r in records])

    order = sorted(buckets)
    if len(buckets) > 1:  # add a pooled row when sources are distinguished
        merged = {"binary": ReliabilityMatrix(), "labels": ReliabilityMatrix()}
        for bucket in buckets.values():
            for key in merged:
                merged[key].units.extend(bucket[key].units)
                merged[key].values.extend(bucket[key].values)
        buckets["all"] = merged
        order.append("all")

    rows = []
    for source in order:
        for task, dist in (("binary", nominal_fraction), ("label-set", set_delta)):
            matrix = buckets[source]["binary" if task == "binary" else "labels"]
            row = {"source": source, "task": task, "n_units": len(matrix.units)}
            try:
                row["alpha"] = krippendorff_alpha(matrix, dist)
            except (InsufficientDataError, DegenerateDistributionError) as exc:
                row["alpha"] = None
                row["error"] = f"{type(exc).__name__}: {exc}"
            rows.append(row)
    return rows
