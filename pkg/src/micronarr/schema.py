"""Annotation data model and codec.

A sentence-level annotation says whether the sentence carries a narrative
about the target and, if so, which cause/effect categories with a coarse
time tag each.  The wire format is a single JSON object:

    {"foreign": false,
     "contains-narrative": true,
     "inflation-narratives": {
        "inflation-time": "past"|"present"|"future"|"na",
        "inflation-direction": "down"|"up"|"na",
        "narratives": [{"cause"|"effect": <category>, "time": ...}, ...]}}

Non-narrative sentences carry ``"inflation-narratives": null``.  The codec
serializes deterministically and parses either strictly (the text must be
exactly one conforming object) or leniently (the first balanced JSON
object is pulled out of surrounding prose first).  Model output is never
trusted: every category string must resolve in the active ontology with
the right kind, or parsing fails with diagnostics rather than raising.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .ontology import Ontology, UnknownLabelError

TIME_TAGS = ("past", "present", "future", "na")
DIRECTIONS = ("down", "up", "na")
ROLES = ("cause", "effect")

# The paper-era wire format pluralizes the cause key; accept both spellings
# on input, always emit the singular.
_ROLE_KEYS = {"cause": "cause", "causes": "cause", "effect": "effect", "effects": "effect"}


class SchemaError(ValueError):
    """An annotation object violated its invariants on the producer side."""


@dataclass(frozen=True)
class NarrativeEntry:
    """One narrative within a sentence: a category plus its time tag."""

    role: str  # "cause" | "effect"
    category: str
    time: str  # "past" | "present" | "future" | "na"


@dataclass(frozen=True)
class NarrativeAnnotation:
    """The full per-sentence classification object.

    ``inflation_time``, ``inflation_direction`` and ``narratives`` are
    present exactly when ``contains_narrative`` is true.
    """

    foreign: bool
    contains_narrative: bool
    inflation_time: str | None = None
    inflation_direction: str | None = None
    narratives: tuple[NarrativeEntry, ...] | None = None

    def validate(self, ontology: Ontology | None = None):
        """Check structural invariants; with an ontology, category validity too."""
        if not self.contains_narrative:
            if (
                self.inflation_time is not None
                or self.inflation_direction is not None
                or self.narratives is not None
            ):
                raise SchemaError("non-narrative annotation carries narrative fields")
            return
        if self.inflation_time not in TIME_TAGS:
            raise SchemaError(f"bad inflation_time {self.inflation_time!r}")
        if self.inflation_direction not in DIRECTIONS:
            raise SchemaError(f"bad inflation_direction {self.inflation_direction!r}")
        if not self.narratives:
            raise SchemaError("narrative annotation has no narrative entries")
        seen = set()
        for entry in self.narratives:
            if entry.role not in ROLES:
                raise SchemaError(f"bad role {entry.role!r}")
            if entry.time not in TIME_TAGS:
                raise SchemaError(f"bad time tag {entry.time!r}")
            if (entry.role, entry.category) in seen:
                raise SchemaError(
                    f"duplicate narrative ({entry.role}, {entry.category})"
                )
            seen.add((entry.role, entry.category))
            if ontology is not None:
                try:
                    ontology.lookup(entry.category, kind=entry.role)
                except UnknownLabelError:
                    raise SchemaError(
                        f"category {entry.category!r} is not a {entry.role} "
                        f"in the {ontology.target!r} ontology"
                    ) from None


def non_narrative(foreign: bool = False) -> NarrativeAnnotation:
    return NarrativeAnnotation(foreign=foreign, contains_narrative=False)


def label_set(annotation: NarrativeAnnotation) -> frozenset[tuple[str, str]]:
    """The (role, category) pairs of an annotation, time tags dropped.

    This is the unit of evaluation matching; a non-narrative annotation
    maps to the empty set and duplicates collapse by construction.
    """
    if not annotation.contains_narrative or not annotation.narratives:
        return frozenset()
    return frozenset((e.role, e.category) for e in annotation.narratives)


def serialize(annotation: NarrativeAnnotation, ontology: Ontology | None = None) -> str:
    """Encode an annotation as its canonical JSON string.

    Key order is fixed, so equal annotations serialize to equal bytes.
    Raises :class:`SchemaError` if the annotation violates its invariants.
    """
    annotation.validate(ontology)
    return json.dumps(to_wire(annotation))


def to_wire(annotation: NarrativeAnnotation) -> dict:
    """The JSON-ready dict form of an annotation (canonical key order)."""
    doc = {
        "foreign": annotation.foreign,
        "contains-narrative": annotation.contains_narrative,
    }
    if not annotation.contains_narrative:
        doc["inflation-narratives"] = None
        return doc
    doc["inflation-narratives"] = {
        "inflation-time": annotation.inflation_time,
        "inflation-direction": annotation.inflation_direction,
        "narratives": [
            {entry.role: entry.category, "time": entry.time}
            for entry in annotation.narratives
        ],
    }
    return doc


@dataclass
class Issue:
    """One problem found while parsing, with a rough location."""

    kind: str
    message: str
    path: str = "$"
    fatal: bool = True


@dataclass
class ParseOutcome:
    """Result of parsing model or annotator output.

    status "ok": the input was a clean conforming object.
    status "recovered": a conforming object was extracted from prose.
    status "failed": no valid annotation; see diagnostics.
    """

    status: str
    annotation: NarrativeAnnotation | None = None
    diagnostics: list[Issue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status in ("ok", "recovered")


def _extract_first_object(text: str) -> str | None:
    """Return the first brace-balanced JSON object substring, or None.

    A real scanner, not a regex: braces inside string literals (and
    escaped quotes inside those) do not count toward balance.
    """
    start = text.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        for i in range(start, len(text)):
            c = text[i]
            if in_string:
                if escaped:
                    escaped = False
                elif c == "\\":
                    escaped = True
                elif c == '"':
                    in_string = False
            elif c == '"':
                in_string = True
            elif c == "{":
                depth += 1
            elif c == "}":
                depth -= 1
                if depth == 0:
                    candidate = text[start : i + 1]
                    try:
                        json.loads(candidate)
                    except json.JSONDecodeError:
                        break  # balanced but not JSON; try a later "{"
                    return candidate
        start = text.find("{", start + 1)
    return None


def _fail(diags: list[Issue]) -> ParseOutcome:
    return ParseOutcome(status="failed", annotation=None, diagnostics=diags)


def parse(text: str, ontology: Ontology, mode: str = "strict") -> ParseOutcome:
    """Parse annotation JSON, validating every category against the ontology.

    Never raises on bad input (arbitrary bytes included): problems come
    back as a failed outcome with diagnostics.  ``mode`` is "strict"
    (text must be exactly one JSON object) or "lenient" (the object may
    be wrapped in prose; recovery is flagged in the status).
    """
    if mode not in ("strict", "lenient"):
        raise ValueError(f"bad parse mode {mode!r}")
    diags: list[Issue] = []
    recovered = False
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        if mode == "strict":
            return _fail([Issue("malformed-json", str(exc))])
        candidate = _extract_first_object(text or "")
        if candidate is None:
            return _fail([Issue("malformed-json", "no JSON object found in text")])
        doc = json.loads(candidate)
        recovered = True
    else:
        if not isinstance(doc, dict):
            if mode == "strict":
                return _fail(
                    [Issue("malformed-json", f"expected a JSON object, got {type(doc).__name__}")]
                )
            candidate = _extract_first_object(text)
            if candidate is None:
                return _fail([Issue("malformed-json", "no JSON object found in text")])
            doc = json.loads(candidate)
            recovered = True

    annotation = _validate_document(doc, ontology, diags)
    if annotation is None:
        return _fail(diags)
    return ParseOutcome(
        status="recovered" if recovered else "ok",
        annotation=annotation,
        diagnostics=diags,
    )


def _validate_document(doc, ontology: Ontology, diags: list[Issue]):
    """Validate a parsed JSON document; append issues, return annotation or None."""
    ok = True

    def err(kind, message, path="$"):
        nonlocal ok
        diags.append(Issue(kind, message, path))
        ok = False

    def note(kind, message, path="$"):
        diags.append(Issue(kind, message, path, fatal=False))

    if not isinstance(doc, dict):
        err("malformed-json", f"expected object, got {type(doc).__name__}")
        return None

    for key in ("foreign", "contains-narrative", "inflation-narratives"):
        if key not in doc:
            err("missing-key", f"missing required key {key!r}", f"$.{key}")
    known = {"foreign", "contains-narrative", "inflation-narratives"}
    for key in doc:
        if key not in known:
            note("unexpected-key", f"ignoring unexpected key {key!r}", f"$.{key}")
    if not ok:
        return None

    foreign = doc["foreign"]
    contains = doc["contains-narrative"]
    body = doc["inflation-narratives"]
    if not isinstance(foreign, bool):
        err("wrong-type", f"foreign must be a boolean, got {foreign!r}", "$.foreign")
    if not isinstance(contains, bool):
        err(
            "wrong-type",
            f"contains-narrative must be a boolean, got {contains!r}",
            "$.contains-narrative",
        )
    if not ok:
        return None

    if not contains:
        if body is not None:
            err(
                "non-null-narratives",
                'contains-narrative is false but "inflation-narratives" is not null',
                "$.inflation-narratives",
            )
            return None
        return NarrativeAnnotation(foreign=foreign, contains_narrative=False)

    # Some producers wrap the narrative body in a one-element array.
    if isinstance(body, list) and len(body) == 1 and isinstance(body[0], dict):
        note("array-wrapped-body", "unwrapped single-element inflation-narratives array")
        body = body[0]
    if not isinstance(body, dict):
        err(
            "wrong-type",
            "inflation-narratives must be an object when contains-narrative is true",
            "$.inflation-narratives",
        )
        return None

    time = body.get("inflation-time")
    direction = body.get("inflation-direction")
    entries_raw = body.get("narratives")
    path = "$.inflation-narratives"
    if "inflation-time" not in body:
        err("missing-key", 'missing "inflation-time"', f"{path}.inflation-time")
    elif time not in TIME_TAGS:
        err(
            "wrong-value",
            f"inflation-time must be one of {TIME_TAGS}, got {time!r}",
            f"{path}.inflation-time",
        )
    if "inflation-direction" not in body:
        err("missing-key", 'missing "inflation-direction"', f"{path}.inflation-direction")
    elif direction not in DIRECTIONS:
        err(
            "wrong-value",
            f"inflation-direction must be one of {DIRECTIONS}, got {direction!r}",
            f"{path}.inflation-direction",
        )
    if "narratives" not in body:
        err("missing-key", 'missing "narratives"', f"{path}.narratives")
        return None
    if not isinstance(entries_raw, list) or not entries_raw:
        err(
            "empty-narratives",
            "contains-narrative is true but narratives is not a non-empty list",
            f"{path}.narratives",
        )
        return None

    entries: list[NarrativeEntry] = []
    seen: set[tuple[str, str]] = set()
    for i, raw in enumerate(entries_raw):
        epath = f"{path}.narratives[{i}]"
        if not isinstance(raw, dict):
            err("wrong-type", f"narrative entry must be an object, got {raw!r}", epath)
            continue
        role_keys = [k for k in raw if k in _ROLE_KEYS]
        if len(role_keys) != 1:
            err(
                "missing-key",
                'narrative entry needs exactly one "cause" or "effect" key',
                epath,
            )
            continue
        raw_key = role_keys[0]
        role = _ROLE_KEYS[raw_key]
        if raw_key != role:
            note("alias-key", f"accepted {raw_key!r} as {role!r}", epath)
        category = raw[raw_key]
        if "time" not in raw:
            err("missing-key", 'narrative entry missing "time"', f"{epath}.time")
            continue
        etime = raw["time"]
        if etime not in TIME_TAGS:
            err(
                "wrong-value",
                f"time must be one of {TIME_TAGS}, got {etime!r}",
                f"{epath}.time",
            )
            continue
        if not isinstance(category, str):
            err("wrong-type", f"category must be a string, got {category!r}", epath)
            continue
        try:
            ontology.lookup(category, kind=role)
        except UnknownLabelError:
            try:
                ontology.lookup(category)
            except UnknownLabelError:
                err(
                    "unknown-category",
                    f"category {category!r} is not in the {ontology.target!r} ontology",
                    epath,
                )
            else:
                err(
                    "kind-mismatch",
                    f"category {category!r} is not a {role} of {ontology.target!r}",
                    epath,
                )
            continue
        if (role, category) in seen:
            note("duplicate-entry", f"collapsed duplicate ({role}, {category})", epath)
            continue
        seen.add((role, category))
        entries.append(NarrativeEntry(role=role, category=category, time=etime))

    if not ok:
        return None
    if not entries:
        err("empty-narratives", "no valid narrative entries", f"{path}.narratives")
        return None
    return NarrativeAnnotation(
        foreign=foreign,
        contains_narrative=True,
        inflation_time=time,
        inflation_direction=direction,
        narratives=tuple(entries),
    )
