"""Prompt building, the classify pipeline, caching, retries, and export."""

import json
import threading
import time
from dataclasses import dataclass

import pytest

from micronarr import schema
from micronarr.inference import (
    API_KEY_VARS,
    AuthenticationError,
    Exemplar,
    InferenceError,
    ModelConfig,
    PromptSpec,
    _api_key,
    _cache_read,
    _cache_write,
    build_prompt,
    classify,
    dataset_export,
    load_default_spec,
    load_exemplars,
    prompt_hash,
)
from micronarr.store import AnnotationRecord, AnnotationStore


@dataclass
class FakeSentence:
    sentence_id: str
    text: str


GOOD = schema.serialize(schema.non_narrative())
NARR = schema.serialize(
    schema.NarrativeAnnotation(
        foreign=False,
        contains_narrative=True,
        inflation_time="present",
        inflation_direction="up",
        narratives=(schema.NarrativeEntry("cause", "fiscal", "present"),),
    )
)


def config(url, **kw):
    kw.setdefault("backoff_base", 0.0)
    kw.setdefault("model", "test-model")
    return ModelConfig(endpoint=url, **kw)


@pytest.fixture(autouse=True)
def no_ambient_keys(monkeypatch):
    for var in API_KEY_VARS:
        monkeypatch.delenv(var, raising=False)


# --- prompt specs -----------------------------------------------------------


def test_spec_rejects_unknown_mode(onto):
    with pytest.raises(InferenceError, match="unknown prompt mode"):
        PromptSpec("one_shot", onto, "Classify.").validate()


def test_spec_rejects_blank_instruction(onto):
    with pytest.raises(InferenceError, match="instruction"):
        PromptSpec("zero_shot", onto, "   ").validate()


def test_few_shot_requires_full_category_cover(tiny):
    hype = schema.NarrativeAnnotation(
        foreign=False,
        contains_narrative=True,
        inflation_time="na",
        inflation_direction="na",
        narratives=(schema.NarrativeEntry("cause", "hype", "na"),),
    )
    spec = PromptSpec("few_shot", tiny, "Classify.", (Exemplar("Hype!", hype),))
    with pytest.raises(InferenceError, match="effect 'waste'"):
        spec.validate()


def test_few_shot_requires_non_narrative_exemplar(tiny):
    narrative = schema.NarrativeAnnotation(
        foreign=False,
        contains_narrative=True,
        inflation_time="na",
        inflation_direction="na",
        narratives=(
            schema.NarrativeEntry("cause", "hype", "na"),
            schema.NarrativeEntry("effect", "waste", "na"),
        ),
    )
    spec = PromptSpec("few_shot", tiny, "Classify.", (Exemplar("Both.", narrative),))
    with pytest.raises(InferenceError, match="non-narrative"):
        spec.validate()


def test_zero_shot_needs_no_exemplars(onto):
    PromptSpec("zero_shot", onto, "Classify {target} talk.").validate()


def test_default_specs_load_and_validate(onto):
    for mode in ("zero_shot", "few_shot", "finetune_style"):
        spec = load_default_spec(mode, onto)
        assert spec.mode == mode
    few = load_default_spec("few_shot", onto)
    narrative = [e for e in few.exemplars if e.annotation.contains_narrative]
    plain = [e for e in few.exemplars if not e.annotation.contains_narrative]
    assert len(narrative) == 24
    assert len(plain) == 5
    covered = set()
    for ex in narrative:
        covered |= schema.label_set(ex.annotation)
    assert len(covered) == len(onto.labels)


def test_load_exemplars_errors(onto):
    with pytest.raises(InferenceError, match="line 1"):
        load_exemplars(["not json"], onto)
    bad = json.dumps({"sentence": "x", "annotation": {"foreign": False}})
    with pytest.raises(InferenceError, match="line 2"):
        load_exemplars(["", bad], onto)


# --- prompt text ------------------------------------------------------------


def test_prompt_is_deterministic_and_complete(onto):
    spec = load_default_spec("few_shot", onto)
    a = build_prompt(spec, "Prices rose.")
    b = build_prompt(spec, "Prices rose.")
    assert a == b
    for label in onto.labels:
        assert f"- {label.label}:" in a
    assert "Causes of inflation:" in a
    assert "Effects of inflation:" in a
    assert a.endswith("Sentence: Prices rose.\nOutput:")
    assert "Examples:" in a
    assert spec.exemplars[0].sentence in a
    assert schema.serialize(spec.exemplars[0].annotation) in a


def test_zero_shot_prompt_has_no_examples(onto):
    prompt = build_prompt(load_default_spec("zero_shot", onto), "Prices rose.")
    assert "Examples:" not in prompt
    assert "Causes of inflation:" in prompt


def test_instruction_target_substitution(tiny):
    spec = PromptSpec("zero_shot", tiny, "Find {target} narratives.")
    prompt = build_prompt(spec, "Widgets rule.")
    assert "Find widgets narratives." in prompt
    assert "Causes of widgets:" in prompt


def test_exemplar_order_preserved(onto):
    spec = load_default_spec("few_shot", onto)
    prompt = build_prompt(spec, "x")
    positions = [prompt.index(ex.sentence) for ex in spec.exemplars]
    assert positions == sorted(positions)


# --- cache keys and files ---------------------------------------------------


def test_prompt_hash_sensitivity():
    base = config("http://x")
    digest = prompt_hash("p", base)
    assert digest == prompt_hash("p", base)
    assert len(digest) == 64
    assert prompt_hash("q", base) != digest
    assert prompt_hash("p", config("http://x", model="other")) != digest
    assert prompt_hash("p", config("http://x", temperature=0.5)) != digest
    assert prompt_hash("p", config("http://x", max_tokens=64)) != digest
    # Transport settings must not invalidate the cache.
    assert prompt_hash("p", config("http://elsewhere", timeout=5.0, concurrency=9)) == digest


def test_cache_round_trip_and_write_once(tmp_path):
    cfg = config("http://x", cache_dir=str(tmp_path))
    assert _cache_read(str(tmp_path), "d1") is None
    _cache_write(str(tmp_path), "d1", "first", cfg)
    assert _cache_read(str(tmp_path), "d1") == "first"
    _cache_write(str(tmp_path), "d1", "second", cfg)
    assert _cache_read(str(tmp_path), "d1") == "first"
    assert _cache_read(None, "d1") is None


def test_cache_file_carries_request_params(tmp_path):
    cfg = config("http://x", cache_dir=str(tmp_path))
    _cache_write(str(tmp_path), "d2", "raw text", cfg)
    doc = json.loads((tmp_path / "d2.json").read_text())
    assert doc == {
        "model": "test-model",
        "temperature": 0.0,
        "max_tokens": 512,
        "raw": "raw text",
    }


# --- classify against the stub endpoint -------------------------------------


def sentences(n):
    return [FakeSentence(f"d1:{i}", f"Sentence number {i} about prices.") for i in range(n)]


def test_classify_happy_path(stub_server, onto):
    stub = stub_server(lambda body, n: (200, GOOD))
    spec = load_default_spec("zero_shot", onto)
    results = list(classify(sentences(20), spec, config(stub.url)))
    assert [r.sentence_id for r in results] == [s.sentence_id for s in sentences(20)]
    assert all(r.status == "ok" for r in results)
    assert all(not r.cached and r.retries == 0 for r in results)
    assert len(stub.calls) == 20
    body = stub.calls[0]
    assert body["model"] == "test-model"
    assert body["temperature"] == 0.0
    assert body["max_tokens"] == 512
    assert body["messages"][0]["role"] == "user"


def test_classify_result_json_shape(stub_server, onto):
    stub = stub_server(lambda body, n: (200, NARR))
    spec = load_default_spec("zero_shot", onto)
    (result,) = classify(sentences(1), spec, config(stub.url))
    doc = result.to_json()
    assert doc["status"] == "ok"
    assert doc["annotation"]["contains-narrative"] is True
    assert doc["annotation"]["inflation-narratives"]["narratives"] == [
        {"cause": "fiscal", "time": "present"}
    ]
    assert doc["raw"] == NARR
    assert doc["error"] is None


def test_classify_second_run_is_fully_cached(stub_server, tmp_path, onto):
    stub = stub_server(lambda body, n: (200, GOOD))
    spec = load_default_spec("zero_shot", onto)
    cfg = config(stub.url, cache_dir=str(tmp_path))
    first = [r.to_json() for r in classify(sentences(10), spec, cfg)]
    assert len(stub.calls) == 10
    second = [r.to_json() for r in classify(sentences(10), spec, cfg)]
    assert len(stub.calls) == 10  # no new requests
    assert all(doc["cached"] for doc in second)
    for a, b in zip(first, second):
        assert b == {**a, "cached": True}


def test_cache_hits_never_touch_the_network(stub_server, tmp_path, onto):
    stub = stub_server(lambda body, n: (200, GOOD))
    spec = load_default_spec("zero_shot", onto)
    live = config(stub.url, cache_dir=str(tmp_path))
    list(classify(sentences(5), spec, live))
    stub.stop()
    dead = config("http://127.0.0.1:1/v1/chat/completions", cache_dir=str(tmp_path))
    results = list(classify(sentences(5), spec, dead))
    assert all(r.cached and r.status == "ok" for r in results)


def test_classify_retries_on_429(stub_server, onto):
    stub = stub_server(lambda body, n: (429, "") if n <= 2 else (200, GOOD))
    spec = load_default_spec("zero_shot", onto)
    (result,) = classify(sentences(1), spec, config(stub.url))
    assert result.status == "ok"
    assert result.retries == 2
    assert len(stub.calls) == 3


def test_classify_survives_persistent_server_errors(stub_server, onto):
    def plan(body, n):
        if "number 0" in body["messages"][0]["content"]:
            return 500, ""
        return 200, GOOD

    stub = stub_server(plan)
    spec = load_default_spec("zero_shot", onto)
    results = list(classify(sentences(3), spec, config(stub.url, max_retries=2, concurrency=1)))
    assert results[0].status == "error"
    assert "retries exhausted" in results[0].error
    assert results[0].retries == 2
    assert results[0].to_json()["annotation"] is None
    assert [r.status for r in results[1:]] == ["ok", "ok"]


def test_classify_auth_failure_aborts(stub_server, onto):
    stub = stub_server(lambda body, n: (200, GOOD), require_key=True)
    spec = load_default_spec("zero_shot", onto)
    with pytest.raises(AuthenticationError):
        list(classify(sentences(2), spec, config(stub.url)))


def test_classify_sends_bearer_key_from_env(stub_server, monkeypatch, onto):
    monkeypatch.setenv("MICRONARR_API_KEY", "sk-test")
    stub = stub_server(lambda body, n: (200, GOOD), require_key=True)
    spec = load_default_spec("zero_shot", onto)
    results = list(classify(sentences(2), spec, config(stub.url)))
    assert all(r.status == "ok" for r in results)


def test_api_key_precedence(monkeypatch):
    assert _api_key() is None
    monkeypatch.setenv("OPENAI_API_KEY", "sk-b")
    assert _api_key() == "sk-b"
    monkeypatch.setenv("MICRONARR_API_KEY", "sk-a")
    assert _api_key() == "sk-a"


def test_classify_recovers_prose_wrapped_output(stub_server, onto):
    wrapped = f"Sure, here is the annotation:\n{GOOD}\nHope that helps!"
    stub = stub_server(lambda body, n: (200, wrapped))
    spec = load_default_spec("zero_shot", onto)
    (result,) = classify(sentences(1), spec, config(stub.url))
    assert result.status == "recovered"
    assert result.outcome.annotation is not None


def test_classify_marks_unparseable_output_failed(stub_server, tmp_path, onto):
    stub = stub_server(lambda body, n: (200, "I cannot answer that."))
    spec = load_default_spec("zero_shot", onto)
    cfg = config(stub.url, cache_dir=str(tmp_path))
    (result,) = classify(sentences(1), spec, cfg)
    assert result.status == "failed"
    assert result.error is None
    assert result.to_json()["diagnostics"]
    # The raw text was persisted before parsing, so the verdict replays
    # from cache without a new request.
    (replay,) = classify(sentences(1), spec, cfg)
    assert replay.cached and replay.status == "failed"
    assert len(stub.calls) == 1


def test_classify_flags_malformed_completion_body(stub_server, onto):
    stub = stub_server(lambda body, n: (200, None))
    spec = load_default_spec("zero_shot", onto)
    (result,) = classify(sentences(1), spec, config(stub.url))
    assert result.status == "error"
    assert result.error == "malformed completion body"


def test_classify_preserves_order_under_concurrency(stub_server, onto):
    state = {"active": 0, "peak": 0}
    gate = threading.Lock()

    def plan(body, n):
        with gate:
            state["active"] += 1
            state["peak"] = max(state["peak"], state["active"])
        # First sentences answer slowest; order must still hold.
        text = body["messages"][0]["content"]
        ordinal = int(text.rsplit("number ", 1)[1].split()[0])
        time.sleep(0.15 if ordinal < 3 else 0.02)
        with gate:
            state["active"] -= 1
        return 200, GOOD

    stub = stub_server(plan)
    spec = load_default_spec("zero_shot", onto)
    results = list(classify(sentences(9), spec, config(stub.url, concurrency=3)))
    assert [r.sentence_id for r in results] == [f"d1:{i}" for i in range(9)]
    assert 2 <= state["peak"] <= 3


# --- training export --------------------------------------------------------


def _train_store(tmp_path, onto):
    store = AnnotationStore(tmp_path / "store.jsonl", onto)
    annotation = schema.NarrativeAnnotation(
        foreign=False,
        contains_narrative=True,
        inflation_time="past",
        inflation_direction="up",
        narratives=(schema.NarrativeEntry("effect", "rates", "past"),),
    )
    for i in range(3):
        store.append(AnnotationRecord(f"d1:{i}", "a1", "t", "train", annotation))
    store.append(AnnotationRecord("d1:9", "a1", "t", "test", schema.non_narrative()))
    return store


def test_dataset_export_rows(tmp_path, onto):
    store = _train_store(tmp_path, onto)
    texts = {f"d1:{i}": f"Sentence {i}." for i in range(3)}
    spec = load_default_spec("finetune_style", onto)
    rows = list(dataset_export(store, texts, spec))
    assert len(rows) == 3  # the test-split record stays out
    for i, row in enumerate(rows):
        assert row["prompt"].endswith(f"Sentence: Sentence {i}.\nOutput:")
        parsed = json.loads(row["completion"])
        assert parsed["contains-narrative"] is True


def test_dataset_export_missing_text_fails(tmp_path, onto):
    store = _train_store(tmp_path, onto)
    spec = load_default_spec("finetune_style", onto)
    with pytest.raises(InferenceError, match="d1:1"):
        list(dataset_export(store, {"d1:0": "x"}, spec))
