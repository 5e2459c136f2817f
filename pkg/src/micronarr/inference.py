"""Prompt construction and remote model classification.

Three prompt modes share one skeleton: an instruction, the full category
list with definitions, optional worked examples, then the target sentence.
``classify`` drives an OpenAI-compatible chat-completions endpoint with a
content-addressed disk cache, bounded concurrency, and retry-with-backoff
on transient failures.  Raw model text is persisted before any parsing so
a bad parser never costs a paid request.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Iterator

import httpx

from . import schema
from .ontology import Ontology, load_builtin

MODES = ("zero_shot", "few_shot", "finetune_style")

API_KEY_VARS = ("MICRONARR_API_KEY", "OPENAI_API_KEY")


class InferenceError(ValueError):
    pass


class AuthenticationError(InferenceError):
    """The endpoint rejected our credentials; retrying cannot help."""


@dataclass(frozen=True)
class Exemplar:
    sentence: str
    annotation: schema.NarrativeAnnotation


@dataclass(frozen=True)
class PromptSpec:
    mode: str
    ontology: Ontology
    instruction: str
    exemplars: tuple[Exemplar, ...] = ()

    def validate(self):
        if self.mode not in MODES:
            raise InferenceError(f"unknown prompt mode {self.mode!r}")
        if not self.instruction.strip():
            raise InferenceError("instruction text is empty")
        if self.mode != "few_shot":
            return
        covered = set()
        non_narrative = 0
        for ex in self.exemplars:
            ex.annotation.validate(self.ontology)
            if ex.annotation.contains_narrative:
                covered.update(schema.label_set(ex.annotation))
            else:
                non_narrative += 1
        for label in self.ontology.labels:
            if (label.kind, label.label) not in covered:
                raise InferenceError(
                    f"few_shot mode missing a category exemplar: {label.kind} {label.label!r}"
                )
        if non_narrative == 0:
            raise InferenceError("few_shot mode requires at least one non-narrative exemplar")


def _definitions(ontology: Ontology) -> str:
    lines = []
    for kind, labels in (("Causes", ontology.causes), ("Effects", ontology.effects)):
        lines.append(f"{kind} of {ontology.target}:")
        for label in labels:
            lines.append(f"- {label.label}: {label.name}. {label.description}")
        lines.append("")
    return "\n".join(lines)


def build_prompt(spec: PromptSpec, sentence_text: str) -> str:
    """Assemble the full prompt for one sentence; byte-deterministic."""
    parts = [
        spec.instruction.format(target=spec.ontology.target).rstrip(),
        "",
        _definitions(spec.ontology).rstrip(),
        "",
    ]
    if spec.mode == "few_shot" and spec.exemplars:
        parts.append("Examples:")
        parts.append("")
        for ex in spec.exemplars:
            parts.append(f"Sentence: {ex.sentence}")
            parts.append(f"Output: {schema.serialize(ex.annotation)}")
            parts.append("")
    parts.append(f"Sentence: {sentence_text}")
    parts.append("Output:")
    return "\n".join(parts)


def load_exemplars(source, ontology: Ontology) -> tuple[Exemplar, ...]:
    """Read ``{"sentence", "annotation"}`` JSONL; invalid rows are fatal."""
    out = []
    for line_no, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InferenceError(f"exemplar line {line_no}: bad JSON ({exc})")
        outcome = schema.parse(json.dumps(doc.get("annotation")), ontology, mode="strict")
        if not outcome.ok or not isinstance(doc.get("sentence"), str):
            raise InferenceError(f"exemplar line {line_no}: invalid annotation")
        out.append(Exemplar(sentence=doc["sentence"], annotation=outcome.annotation))
    return tuple(out)


def default_instruction() -> str:
    return resources.files("micronarr").joinpath("data/prompt_instruction.txt").read_text("utf-8")


def load_default_spec(mode: str, ontology: Ontology | None = None) -> PromptSpec:
    """Spec built from the packaged instruction and exemplar fixtures."""
    ontology = ontology or load_builtin()
    exemplars: tuple[Exemplar, ...] = ()
    if mode == "few_shot":
        text = resources.files("micronarr").joinpath("data/fewshot_exemplars.jsonl").read_text("utf-8")
        exemplars = load_exemplars(text.splitlines(), ontology)
    spec = PromptSpec(mode=mode, ontology=ontology, instruction=default_instruction(), exemplars=exemplars)
    spec.validate()
    return spec


@dataclass(frozen=True)
class ModelConfig:
    endpoint: str
    model: str
    temperature: float = 0.0
    max_tokens: int = 512
    timeout: float = 30.0
    max_retries: int = 3
    concurrency: int = 4
    cache_dir: str | None = None
    backoff_base: float = 0.5


def prompt_hash(prompt: str, config: ModelConfig) -> str:
    """Content address over everything that changes the model's answer."""
    key = json.dumps(
        {
            "max_tokens": config.max_tokens,
            "model": config.model,
            "prompt": prompt,
            "temperature": config.temperature,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(key.encode("utf-8")).hexdigest()


def _cache_path(cache_dir: str, digest: str) -> str:
    return os.path.join(cache_dir, f"{digest}.json")


def _cache_read(cache_dir: str | None, digest: str) -> str | None:
    if cache_dir is None:
        return None
    try:
        with open(_cache_path(cache_dir, digest), encoding="utf-8") as fh:
            return json.load(fh)["raw"]
    except (OSError, json.JSONDecodeError, KeyError):
        return None


def _cache_write(cache_dir: str | None, digest: str, raw: str, config: ModelConfig):
    if cache_dir is None:
        return
    os.makedirs(cache_dir, exist_ok=True)
    path = _cache_path(cache_dir, digest)
    if os.path.exists(path):
        return
    body = {
        "model": config.model,
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
        "raw": raw,
    }
    # Temp file + rename keeps concurrent writers from ever exposing a torn file.
    tmp = f"{path}.{os.getpid()}.{id(raw)}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(body, fh, ensure_ascii=False)
    os.replace(tmp, path)


@dataclass
class ClassificationResult:
    sentence_id: str
    raw: str
    outcome: schema.ParseOutcome | None
    model: str
    prompt_hash: str
    cached: bool
    latency: float
    retries: int
    error: str | None = None

    @property
    def status(self) -> str:
        if self.error is not None:
            return "error"
        return self.outcome.status if self.outcome else "failed"

    def to_json(self) -> dict:
        annotation = None
        diagnostics = []
        if self.outcome is not None:
            if self.outcome.annotation is not None:
                annotation = schema.to_wire(self.outcome.annotation)
            diagnostics = [
                {"kind": i.kind, "message": i.message, "path": i.path}
                for i in self.outcome.diagnostics
            ]
        return {
            "sentence_id": self.sentence_id,
            "status": self.status,
            "annotation": annotation,
            "model": self.model,
            "prompt_hash": self.prompt_hash,
            "cached": self.cached,
            "retries": self.retries,
            "raw": self.raw,
            "diagnostics": diagnostics,
            "error": self.error,
        }


def _api_key() -> str | None:
    for var in API_KEY_VARS:
        value = os.environ.get(var)
        if value:
            return value
    return None


def _request(client: httpx.Client, prompt: str, config: ModelConfig) -> tuple[str | None, str | None, int]:
    """One prompt against the endpoint.  Returns (raw, error, retries)."""
    body = {
        "model": config.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
    }
    headers = {}
    key = _api_key()
    if key:
        headers["Authorization"] = f"Bearer {key}"
    retries = 0
    last_error = "no attempt made"
    for attempt in range(config.max_retries + 1):
        if attempt > 0:
            retries += 1
            time.sleep(config.backoff_base * (2 ** (attempt - 1)))
        try:
            response = client.post(config.endpoint, json=body, headers=headers)
        except (httpx.TimeoutException, httpx.TransportError) as exc:
            last_error = f"transport: {exc.__class__.__name__}"
            continue
        if response.status_code in (401, 403):
            raise AuthenticationError(f"endpoint returned {response.status_code}; check credentials")
        if response.status_code == 429 or response.status_code >= 500:
            last_error = f"http {response.status_code}"
            continue
        if response.status_code != 200:
            return None, f"http {response.status_code}: {response.text[:200]}", retries
        try:
            raw = response.json()["choices"][0]["message"]["content"]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError):
            return None, "malformed completion body", retries
        if not isinstance(raw, str):
            return None, "malformed completion body", retries
        return raw, None, retries
    return None, f"retries exhausted ({last_error})", retries


def _classify_one(
    sentence_id: str,
    prompt: str,
    spec: PromptSpec,
    config: ModelConfig,
    client: httpx.Client,
) -> ClassificationResult:
    digest = prompt_hash(prompt, config)
    start = time.monotonic()
    raw = _cache_read(config.cache_dir, digest)
    cached = raw is not None
    retries = 0
    if not cached:
        raw, error, retries = _request(client, prompt, config)
        if raw is None:
            return ClassificationResult(
                sentence_id=sentence_id,
                raw="",
                outcome=None,
                model=config.model,
                prompt_hash=digest,
                cached=False,
                latency=time.monotonic() - start,
                retries=retries,
                error=error,
            )
        # Persist before parsing: a parser bug must not lose paid output.
        _cache_write(config.cache_dir, digest, raw, config)
    outcome = schema.parse(raw, spec.ontology, mode="lenient")
    return ClassificationResult(
        sentence_id=sentence_id,
        raw=raw,
        outcome=outcome,
        model=config.model,
        prompt_hash=digest,
        cached=cached,
        latency=time.monotonic() - start,
        retries=retries,
    )


def classify(sentences: Iterable, spec: PromptSpec, config: ModelConfig) -> Iterator[ClassificationResult]:
    """One result per sentence, input order, at most ``concurrency`` in flight.

    Sentences need ``sentence_id`` and ``text`` attributes.  Transient
    endpoint trouble becomes an error-status result; authentication
    failure aborts the stream.
    """
    spec.validate()
    stream = iter(sentences)
    with httpx.Client(timeout=config.timeout) as client:
        with ThreadPoolExecutor(max_workers=max(1, config.concurrency)) as pool:
            window: deque = deque()

            def submit_next() -> bool:
                try:
                    sentence = next(stream)
                except StopIteration:
                    return False
                prompt = build_prompt(spec, sentence.text)
                window.append(
                    pool.submit(_classify_one, sentence.sentence_id, prompt, spec, config, client)
                )
                return True

            for _ in range(max(1, config.concurrency)):
                if not submit_next():
                    break
            while window:
                result = window.popleft().result()
                submit_next()
                yield result


def dataset_export(store, sentences_by_id: dict[str, str], spec: PromptSpec, split: str = "train") -> Iterator[dict]:
    """Prompt/completion rows for an external trainer, one per annotation."""
    for record in store.effective_records(split=split):
        text = sentences_by_id.get(record.sentence_id)
        if text is None:
            raise InferenceError(f"no sentence text for {record.sentence_id!r}")
        yield {
            "prompt": build_prompt(spec, text),
            "completion": schema.serialize(record.annotation),
        }
