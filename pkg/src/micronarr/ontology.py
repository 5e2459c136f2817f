"""Target ontology: the fixed sets of cause and effect categories.

The ontology is data, not code.  A config file names a target (e.g.
"inflation"), the keyword used for corpus filtering, and two ordered
category lists.  Everything downstream -- the annotation schema, prompt
construction, gold derivation, evaluation axes -- is parameterized by a
loaded :class:`Ontology`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

VALID_KINDS = ("cause", "effect")


class OntologyError(ValueError):
    """A config file or label failed validation."""


class UnknownLabelError(KeyError):
    """Lookup of a label string that is not in the ontology."""

    def __init__(self, label, kind=None):
        self.label = label
        self.kind = kind
        detail = f" with kind={kind}" if kind else ""
        super().__init__(f"unknown label {label!r}{detail}")


@dataclass(frozen=True)
class OntologyLabel:
    """One cause or effect category of the target subject."""

    kind: str  # "cause" | "effect"
    label: str  # short identifier used in annotations, e.g. "fiscal"
    name: str  # human-readable title
    description: str  # definition text, required for prompt construction

    def validate(self):
        if self.kind not in VALID_KINDS:
            raise OntologyError(f"bad kind {self.kind!r} for label {self.label!r}")
        if not self.label:
            raise OntologyError("empty label string")
        if self.label != self.label.lower() or any(c.isspace() for c in self.label):
            raise OntologyError(
                f"label {self.label!r} must be lowercase with no whitespace"
            )
        if not self.description.strip():
            raise OntologyError(f"label {self.label!r} has no description")


@dataclass(frozen=True)
class Ontology:
    """A target plus its ordered cause and effect categories.

    Immutable after load; safe to share across threads by reference.
    Labels share one namespace across kinds unless the config sets
    ``allow_shared_labels``, in which case the same string may appear
    under both kinds and lookups must say which kind they mean.
    """

    target: str
    keyword: str
    causes: tuple[OntologyLabel, ...]
    effects: tuple[OntologyLabel, ...]
    allow_shared_labels: bool = False

    def __post_init__(self):
        if not self.causes:
            raise OntologyError("ontology has no causes")
        if not self.effects:
            raise OntologyError("ontology has no effects")
        for lab in self.causes:
            lab.validate()
            if lab.kind != "cause":
                raise OntologyError(f"label {lab.label!r} in causes has kind {lab.kind!r}")
        for lab in self.effects:
            lab.validate()
            if lab.kind != "effect":
                raise OntologyError(f"label {lab.label!r} in effects has kind {lab.kind!r}")
        seen = set()
        for lab in self.causes + self.effects:
            key = (lab.kind, lab.label) if self.allow_shared_labels else lab.label
            if key in seen:
                raise OntologyError(f"duplicate label {lab.label!r}")
            seen.add(key)

    @property
    def labels(self) -> tuple[OntologyLabel, ...]:
        return self.causes + self.effects

    def lookup(self, label: str, kind: str | None = None) -> OntologyLabel:
        """Return the category for an exact, case-sensitive label string.

        ``kind`` narrows the search to causes or effects; it is required
        when shared labels are allowed and the string is ambiguous.
        Raises :class:`UnknownLabelError` when nothing matches, carrying
        the offending string so callers can surface it (the codec uses
        this to reject hallucinated categories).
        """
        pools = {"cause": self.causes, "effect": self.effects}
        if kind is not None:
            if kind not in VALID_KINDS:
                raise OntologyError(f"bad kind {kind!r}")
            for lab in pools[kind]:
                if lab.label == label:
                    return lab
            raise UnknownLabelError(label, kind)
        hits = [lab for lab in self.labels if lab.label == label]
        if not hits:
            raise UnknownLabelError(label)
        if len(hits) > 1:
            raise OntologyError(
                f"label {label!r} is shared between kinds; pass kind= to disambiguate"
            )
        return hits[0]

    def to_config(self) -> dict:
        """Serialize back to the config-file structure (round-trips)."""
        doc = {
            "target": self.target,
            "keyword": self.keyword,
            "causes": [
                {"label": c.label, "name": c.name, "description": c.description}
                for c in self.causes
            ],
            "effects": [
                {"label": e.label, "name": e.name, "description": e.description}
                for e in self.effects
            ],
        }
        if self.allow_shared_labels:
            doc["allow_shared_labels"] = True
        return doc


def _parse_labels(items, kind: str) -> tuple[OntologyLabel, ...]:
    if not isinstance(items, list):
        raise OntologyError(f"{kind}s must be a list")
    out = []
    for item in items:
        if not isinstance(item, dict):
            raise OntologyError(f"{kind} entry is not an object: {item!r}")
        missing = {"label", "name", "description"} - set(item)
        if missing:
            raise OntologyError(f"{kind} entry missing {sorted(missing)}: {item!r}")
        out.append(
            OntologyLabel(
                kind=kind,
                label=item["label"],
                name=item["name"],
                description=item["description"],
            )
        )
    return tuple(out)


def ontology_from_config(doc: dict) -> Ontology:
    """Build a validated Ontology from a parsed config document."""
    if not isinstance(doc, dict):
        raise OntologyError("ontology config must be a JSON object")
    for key in ("target", "keyword", "causes", "effects"):
        if key not in doc:
            raise OntologyError(f"ontology config missing {key!r}")
    return Ontology(
        target=doc["target"],
        keyword=doc["keyword"],
        causes=_parse_labels(doc["causes"], "cause"),
        effects=_parse_labels(doc["effects"], "effect"),
        allow_shared_labels=bool(doc.get("allow_shared_labels", False)),
    )


def load_ontology(path) -> Ontology:
    """Load and validate an ontology config file (UTF-8 JSON).

    Deterministic: the same bytes always produce a structurally
    identical Ontology, with label order preserved from the file.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise OntologyError(f"cannot read ontology file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise OntologyError(f"ontology file {path} is not valid JSON: {exc}") from exc
    return ontology_from_config(doc)


def load_builtin(name: str = "inflation") -> Ontology:
    """Load an ontology shipped with the package (currently "inflation")."""
    ref = resources.files("micronarr.data").joinpath(f"{name}.ontology.json")
    with resources.as_file(ref) as path:
        return load_ontology(path)
