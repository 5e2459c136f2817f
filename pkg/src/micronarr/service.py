"""HTTP service backing the annotation UI.

Serves the ontology, hands out sentences to annotate, accepts submissions,
and reports progress plus live inter-annotator agreement.  Test-split
queues go to every annotator; train-split queues are split round-robin
across a fixed annotator list.  All writes go through the append-only
store, so a restart replays to identical state.
"""

from __future__ import annotations

import json
from datetime import datetime, timezone
from typing import Any

from fastapi import Body, FastAPI, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import agreement, schema
from .corpus import Sentence
from .ontology import Ontology
from .store import AnnotationRecord, AnnotationStore


class ServiceError(ValueError):
    pass


def _now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def create_app(
    ontology: Ontology,
    store: AnnotationStore,
    sentences: list[Sentence],
    split: str = "test",
    annotators: list[str] | None = None,
    ui_dir: str | None = None,
) -> FastAPI:
    """Build the service; refuses obviously unusable configurations."""
    if split not in ("train", "test"):
        raise ServiceError(f"split must be train or test, got {split!r}")
    if not sentences:
        raise ServiceError("no sentences loaded; refusing to serve an empty queue")
    queue_ids = [s.sentence_id for s in sentences]
    if len(set(queue_ids)) != len(queue_ids):
        raise ServiceError("duplicate sentence ids in queue")
    if split == "train" and not annotators:
        raise ServiceError("train split needs an annotator list for round-robin assignment")

    by_id = {s.sentence_id: s for s in sentences}
    # Round-robin over queue order; test split ignores the assignment map.
    assigned_to = {
        s.sentence_id: annotators[i % len(annotators)] for i, s in enumerate(sentences)
    } if split == "train" else {}

    app = FastAPI(title="micronarr annotation service")

    @app.exception_handler(RequestValidationError)
    async def _bad_request(request, exc):
        diags = [
            {
                "kind": "invalid-request",
                "message": err.get("msg", "invalid"),
                "path": "/".join(str(p) for p in err.get("loc", ())),
            }
            for err in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"error": "invalid-request", "diagnostics": diags})

    def _known(annotator: str) -> bool:
        return annotators is None or annotator in annotators

    def _done_ids(annotator: str) -> set[str]:
        return {
            r.sentence_id
            for r in store.effective_records(split=split)
            if r.annotator == annotator
        }

    def _queue_for(annotator: str) -> list[Sentence]:
        if split == "test":
            return sentences
        return [s for s in sentences if assigned_to[s.sentence_id] == annotator]

    @app.get("/api/ontology")
    def get_ontology():
        return ontology.to_config()

    @app.get("/api/tasks/next")
    def next_task(annotator: str):
        if not _known(annotator):
            return JSONResponse(status_code=403, content={"error": "unknown-annotator"})
        done = _done_ids(annotator)
        pending = [s for s in _queue_for(annotator) if s.sentence_id not in done]
        if not pending:
            return Response(status_code=204)
        return {"sentence": pending[0].to_json(), "remaining": len(pending)}

    @app.post("/api/annotations")
    def submit(body: dict = Body(...)):
        diags = []
        sentence_id = body.get("sentence_id")
        annotator = body.get("annotator")
        if not isinstance(sentence_id, str) or not sentence_id:
            diags.append({"kind": "missing-key", "message": "sentence_id required", "path": "sentence_id"})
        if not isinstance(annotator, str) or not annotator:
            diags.append({"kind": "missing-key", "message": "annotator required", "path": "annotator"})
        if diags:
            return JSONResponse(status_code=400, content={"error": "invalid-request", "diagnostics": diags})
        if not _known(annotator):
            return JSONResponse(status_code=403, content={"error": "unknown-annotator"})
        if sentence_id not in by_id:
            return JSONResponse(status_code=409, content={"error": "unknown-sentence", "sentence_id": sentence_id})
        outcome = schema.parse(json.dumps(body.get("annotation")), ontology, mode="strict")
        if not outcome.ok:
            return JSONResponse(
                status_code=400,
                content={
                    "error": "invalid-annotation",
                    "diagnostics": [
                        {"kind": i.kind, "message": i.message, "path": i.path}
                        for i in outcome.diagnostics
                    ],
                },
            )
        record = AnnotationRecord(
            sentence_id=sentence_id,
            annotator=annotator,
            timestamp=_now(),
            split=split,
            annotation=outcome.annotation,
        )
        store.append(record)
        return {"ok": True, "sentence_id": sentence_id, "log_records": len(store)}

    @app.get("/api/progress")
    def progress():
        body: dict[str, Any] = {"split": split, "n_total": len(sentences)}
        body.update(store.counts())
        if annotators is not None:
            body["assigned"] = {a: len(_queue_for(a)) for a in annotators}
        return body

    @app.get("/api/agreement")
    def get_agreement():
        # Agreement only means something where annotators overlap: the test split.
        return {"split": "test", "rows": agreement.agreement_report(store, split="test")}

    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
