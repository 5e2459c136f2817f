"""Shared fixtures: ontologies, random annotation builders, a stub endpoint."""

from __future__ import annotations

import http.server
import json
import random
import threading

import pytest

from micronarr import schema
from micronarr.ontology import Ontology, OntologyLabel, load_builtin


@pytest.fixture(scope="session")
def onto() -> Ontology:
    return load_builtin()


@pytest.fixture(scope="session")
def tiny() -> Ontology:
    return Ontology(
        target="widgets",
        keyword="widget",
        causes=(OntologyLabel("cause", "hype", "Hype", "Buzz drives widget demand."),),
        effects=(OntologyLabel("effect", "waste", "Waste", "Widgets pile up unused."),),
    )


def random_annotation(rng: random.Random, ontology: Ontology) -> schema.NarrativeAnnotation:
    """A uniformly messy but always-valid annotation."""
    if rng.random() < 0.35:
        return schema.non_narrative(foreign=rng.random() < 0.1)
    labels = rng.sample(list(ontology.labels), rng.randint(1, min(3, len(ontology.labels))))
    entries = tuple(
        schema.NarrativeEntry(
            role=lab.kind, category=lab.label, time=rng.choice(schema.TIME_TAGS)
        )
        for lab in labels
    )
    return schema.NarrativeAnnotation(
        foreign=rng.random() < 0.1,
        contains_narrative=True,
        inflation_time=rng.choice(schema.TIME_TAGS),
        inflation_direction=rng.choice(schema.DIRECTIONS),
        narratives=entries,
    )


def random_label_set(rng: random.Random, categories: list[str], max_size: int = 3) -> frozenset:
    """A (role, category) set over synthetic category names."""
    n = rng.randint(0, min(max_size, len(categories)))
    return frozenset(("cause", c) for c in rng.sample(categories, n))


class StubEndpoint:
    """Chat-completions stand-in with a scriptable reply plan.

    ``plan(request_body, call_no)`` returns ``(status, content)``;
    content is the assistant message for 200 responses.  Every request
    body is recorded for cache/auth assertions.
    """

    def __init__(self, plan, require_key: bool = False):
        self.plan = plan
        self.require_key = require_key
        self.calls: list[dict] = []
        self.lock = threading.Lock()
        stub = self

        class Handler(http.server.BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length))
                if stub.require_key and not self.headers.get("Authorization"):
                    self._reply(401, b"{}")
                    return
                with stub.lock:
                    stub.calls.append(body)
                    call_no = len(stub.calls)
                status, content = stub.plan(body, call_no)
                if status != 200:
                    self._reply(status, b"{}")
                    return
                payload = json.dumps(
                    {"choices": [{"message": {"role": "assistant", "content": content}}]}
                ).encode()
                self._reply(200, payload)

            def _reply(self, status, payload):
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        self.server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self) -> str:
        host, port = self.server.server_address
        return f"http://{host}:{port}/v1/chat/completions"

    def stop(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def stub_server():
    servers = []

    def make(plan, require_key: bool = False) -> StubEndpoint:
        server = StubEndpoint(plan, require_key=require_key)
        servers.append(server)
        return server

    yield make
    for server in servers:
        server.stop()
