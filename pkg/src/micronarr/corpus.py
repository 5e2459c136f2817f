"""News corpus ingestion, sentence segmentation, and candidate filtering.

Documents come in as line-delimited JSON and flow through a deterministic
rule-based sentence segmenter, then a keyword + length filter that keeps
sentences mentioning the target and drops anything longer than the word
cutoff (default 150).  Everything is stream-oriented so corpus-scale
inputs never need to fit in memory.
"""

from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

# The segmenter suppresses sentence breaks after these tokens (compared
# case-insensitively, trailing period stripped).  Single capital letters
# (initials) are always suppressed.
DEFAULT_ABBREVIATIONS = frozenset(
    """
    mr mrs ms dr prof rev hon sen rep gov pres gen col maj capt lt sgt
    st ave blvd rd
    inc corp co ltd dept assn bros
    jan feb mar apr jun jul aug sep sept oct nov dec
    no vol fig figs p pp approx est
    a.m p.m u.s u.k u.n d.c e.g i.e etc vs al
    """.split()
)

SOURCE_CONTEMPORARY = "contemporary"
SOURCE_HISTORICAL = "historical"

_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")


class CorpusError(ValueError):
    """Unreadable input or an invalid document stream."""


@dataclass(frozen=True)
class Document:
    """One news article."""

    doc_id: str
    source: str  # "contemporary" | "historical" | any other corpus tag
    publication: str
    date: str  # YYYY-MM-DD
    title: str
    text: str

    def to_json(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "source": self.source,
            "publication": self.publication,
            "date": self.date,
            "title": self.title,
            "text": self.text,
        }


@dataclass(frozen=True)
class Sentence:
    """One segmented sentence, carrying its provenance."""

    sentence_id: str
    doc_id: str
    ordinal: int  # 0-based position within the document
    text: str
    word_count: int  # whitespace-separated tokens, punctuation attached
    date: str
    source: str

    def to_json(self) -> dict:
        return {
            "sentence_id": self.sentence_id,
            "doc_id": self.doc_id,
            "ordinal": self.ordinal,
            "date": self.date,
            "source": self.source,
            "text": self.text,
            "word_count": self.word_count,
        }


def sentence_from_json(doc: dict) -> Sentence:
    return Sentence(
        sentence_id=doc["sentence_id"],
        doc_id=doc["doc_id"],
        ordinal=int(doc["ordinal"]),
        text=doc["text"],
        word_count=int(doc["word_count"]),
        date=doc["date"],
        source=doc["source"],
    )


@dataclass(frozen=True)
class SegmenterConfig:
    """Rules for the deterministic sentence segmenter.

    Splits happen at ``.?!`` runs followed by whitespace and an
    uppercase letter, digit, or opening quote -- unless the token before
    a period is a known abbreviation or a single initial.  Any segment
    that still exceeds ``hard_cap_words`` is force-split so pathological
    unpunctuated text cannot produce unbounded sentences.
    """

    abbreviations: frozenset[str] = DEFAULT_ABBREVIATIONS
    hard_cap_words: int = 400


# Candidate break: terminal punctuation, whitespace, then an upper/digit/quote.
_BREAK_RE = re.compile(r"[.?!]+[\"'”’)\]]*\s+(?=[A-Z0-9\"'“‘(\[])")


def _last_token(text: str) -> str:
    parts = text.rsplit(None, 1)
    return parts[-1] if parts else text


def _is_abbreviation(token: str, config: SegmenterConfig) -> bool:
    word = token.rstrip(".")
    if not word:
        return False
    if len(word) == 1 and word.isalpha() and word.isupper():
        return True  # initials like "J. Smith"
    return word.lower() in config.abbreviations


def _hard_split(text: str, cap: int) -> list[str]:
    words = text.split()
    if len(words) <= cap:
        return [text]
    return [" ".join(words[i : i + cap]) for i in range(0, len(words), cap)]


def segment_text(text: str, config: SegmenterConfig = SegmenterConfig()) -> list[str]:
    """Split raw text into sentence strings (whitespace-trimmed, non-empty)."""
    pieces: list[str] = []
    start = 0
    for match in _BREAK_RE.finditer(text):
        before = text[start : match.end(0)].rstrip()
        token = _last_token(text[start : match.start(0) + 1])
        if token.endswith(".") and _is_abbreviation(token, config):
            continue  # suppressed break, keep scanning
        if before:
            pieces.append(before)
        start = match.end(0)
    tail = text[start:].strip()
    if tail:
        pieces.append(tail)
    out: list[str] = []
    for piece in pieces:
        out.extend(_hard_split(piece, config.hard_cap_words))
    return [p.strip() for p in out if p.strip()]


def segment_sentences(
    doc: Document, config: SegmenterConfig = SegmenterConfig()
) -> list[Sentence]:
    """Segment one document into Sentence records with stable ids."""
    sentences = []
    for ordinal, text in enumerate(segment_text(doc.text, config)):
        sentences.append(
            Sentence(
                sentence_id=f"{doc.doc_id}:{ordinal}",
                doc_id=doc.doc_id,
                ordinal=ordinal,
                text=text,
                word_count=len(text.split()),
                date=doc.date,
                source=doc.source,
            )
        )
    return sentences


def segment_documents(
    docs: Iterable[Document],
    config: SegmenterConfig = SegmenterConfig(),
    workers: int = 1,
    ordered: bool = True,
) -> Iterator[Sentence]:
    """Segment a document stream, optionally in parallel.

    Per-document sentence order is always preserved.  With ``ordered``
    (the default) cross-document order matches the input; unordered mode
    yields whole documents as workers finish, trading order for
    throughput.
    """
    if workers <= 1:
        for doc in docs:
            yield from segment_sentences(doc, config)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        if ordered:
            for batch in pool.map(lambda d: segment_sentences(d, config), docs):
                yield from batch
        else:
            from concurrent.futures import as_completed

            futures = [pool.submit(segment_sentences, doc, config) for doc in docs]
            for future in as_completed(futures):
                yield from future.result()


def filter_sentences(
    sentences: Iterable[Sentence],
    keyword: str,
    max_words: int = 150,
    word_boundary: bool = False,
) -> Iterator[Sentence]:
    """Keep sentences that mention the keyword and fit the length cutoff.

    Matching is case-insensitive.  By default it is a plain substring
    match, so "inflationary" matches the keyword "inflation";
    ``word_boundary`` switches to the stricter whole-word reading.
    Input order is preserved.
    """
    if not keyword:
        raise ValueError("keyword must be non-empty")
    if max_words < 1:
        raise ValueError("max_words must be >= 1")
    needle = keyword.lower()
    pattern = re.compile(r"\b" + re.escape(needle) + r"\b") if word_boundary else None
    for sentence in sentences:
        if sentence.word_count > max_words:
            continue
        haystack = sentence.text.lower()
        if pattern is not None:
            if not pattern.search(haystack):
                continue
        elif needle not in haystack:
            continue
        yield sentence


@dataclass
class IngestReport:
    """Per-line problems recorded while ingesting a document file."""

    skipped: list[tuple[int, str]] = field(default_factory=list)  # (line no, reason)

    def record(self, line_no: int, reason: str):
        self.skipped.append((line_no, reason))


_REQUIRED_DOC_KEYS = ("doc_id", "source", "publication", "date", "title", "text")


def ingest(
    path,
    source: str | None = None,
    report: IngestReport | None = None,
    on_error: Callable[[int, str], None] | None = None,
) -> Iterator[Document]:
    """Stream Documents from a line-delimited JSON file.

    Malformed lines (bad JSON, missing fields, empty text, duplicate
    doc_id, bad date) are reported through ``report``/``on_error`` and
    skipped; only an unreadable file is fatal.  ``source`` overrides the
    per-line source tag when given.
    """

    def complain(line_no, reason):
        if report is not None:
            report.record(line_no, reason)
        if on_error is not None:
            on_error(line_no, reason)

    if hasattr(path, "read"):
        fh = path  # already an open text stream (e.g. stdin)
    else:
        try:
            fh = open(path, encoding="utf-8")
        except OSError as exc:
            raise CorpusError(f"cannot read document file {path}: {exc}") from exc
    seen_ids: set[str] = set()
    with fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                complain(line_no, f"bad JSON: {exc}")
                continue
            if not isinstance(raw, dict):
                complain(line_no, "line is not a JSON object")
                continue
            missing = [k for k in _REQUIRED_DOC_KEYS if k not in raw]
            if missing:
                complain(line_no, f"missing fields: {missing}")
                continue
            if not isinstance(raw["text"], str) or not raw["text"].strip():
                complain(line_no, "empty text")
                continue
            if not isinstance(raw["date"], str) or not _DATE_RE.match(raw["date"]):
                complain(line_no, f"bad date {raw.get('date')!r} (want YYYY-MM-DD)")
                continue
            doc_id = str(raw["doc_id"])
            if doc_id in seen_ids:
                complain(line_no, f"duplicate doc_id {doc_id!r}")
                continue
            seen_ids.add(doc_id)
            yield Document(
                doc_id=doc_id,
                source=source if source is not None else str(raw["source"]),
                publication=str(raw["publication"]),
                date=raw["date"],
                title=str(raw["title"]),
                text=raw["text"],
            )
