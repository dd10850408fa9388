"""Shared fixtures: corpus builders, random corpora, a loopback chat server."""

from __future__ import annotations

import http.server
import json
import random
import threading

import pytest

from dialectmt.corpus import RawEntry, make_pair_record, make_transcript_record, merge_short_runs
from dialectmt.embedding import HashEmbedder
from dialectmt.index import build_hybrid
from dialectmt.retrieve import Retriever

# Small pool of short romanized-Bengali-ish words keeps oracle DP cheap.
VOCAB = [
    "ami", "tumi", "bhai", "bala", "gori", "kita", "kemon", "acho",
    "bhalo", "achi", "jabo", "khai", "pani", "ghor", "mach", "bhat",
    "aj", "kal", "raite", "din", "hoy", "na", "ki", "re",
]

DISTRICTS = ["Chittagong", "Sylhet", "Rangpur", "Tangail"]


def pair_records(specs):
    """specs: (id, district, local, standard) tuples -> merged pair records."""
    entries = [
        RawEntry(id=i, district=d, source_line=line, local=l, standard=s)
        for line, (i, d, l, s) in enumerate(specs, start=1)
    ]
    return merge_short_runs([make_pair_record(e) for e in entries])


def transcript_records(specs):
    """specs: (id, district, text) tuples -> transcript records."""
    return [
        make_transcript_record(RawEntry(id=i, district=d, source_line=line, text=t))
        for line, (i, d, t) in enumerate(specs, start=1)
    ]


def random_pair_records(rng: random.Random, n: int, districts=None, min_tokens=1, max_tokens=6):
    districts = districts or DISTRICTS
    specs = []
    for i in range(n):
        length = rng.randint(min_tokens, max_tokens)
        local = " ".join(rng.choice(VOCAB) for _ in range(length))
        standard = " ".join(rng.choice(VOCAB) for _ in range(rng.randint(min_tokens, max_tokens)))
        specs.append((f"r{i:04d}", rng.choice(districts), local, standard))
    return pair_records(specs)


def random_query(rng: random.Random, records=None):
    """Sometimes an exact standard text (bonus paths), else random tokens."""
    if records and rng.random() < 0.3:
        return rng.choice(records).standard_norm
    return " ".join(rng.choice(VOCAB) for _ in range(rng.randint(1, 6)))


def make_retriever(records, dim=64):
    provider = HashEmbedder(dim=dim)
    return Retriever(records, build_hybrid(records, provider), provider), provider


@pytest.fixture
def provider():
    return HashEmbedder(dim=64)


class _ChatHandler(http.server.BaseHTTPRequestHandler):
    """Answers chat-completion requests from the server's lookup table.

    The translation for a prompt is found by parsing the final input line
    the prompt templates produce, then consulting ``server.translations``.
    Unknown inputs echo back the input sentence.
    """

    def do_POST(self):
        length = int(self.headers.get("Content-Length", "0"))
        body = json.loads(self.rfile.read(length).decode("utf-8"))
        server = self.server
        server.requests.append(body)
        scripted = server.script.pop(0) if server.script else None
        if scripted is not None:
            status, payload = scripted
            self._reply(status, payload)
            return
        content = body["messages"][0]["content"]
        sentence = _extract_input(content)
        translation = server.translations.get(sentence, sentence)
        self._reply(200, {
            "choices": [{"message": {"content": translation}, "finish_reason": "stop"}],
            "usage": {"prompt_tokens": len(content.split()), "completion_tokens": len(translation.split())},
        })

    def _reply(self, status, payload):
        data = json.dumps(payload, ensure_ascii=False).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


def _extract_input(prompt_text: str) -> str:
    for line in reversed(prompt_text.splitlines()):
        for prefix in ("STANDARD: ", "Standard Bengali: "):
            if line.startswith(prefix):
                return line[len(prefix):]
    return ""


class FakeChatServer:
    """Loopback chat-completions endpoint for record-mode tests."""

    def __init__(self):
        self._httpd = http.server.ThreadingHTTPServer(("127.0.0.1", 0), _ChatHandler)
        self._httpd.translations = {}
        self._httpd.script = []
        self._httpd.requests = []
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self._httpd.server_port}/v1/chat/completions"

    @property
    def translations(self) -> dict:
        return self._httpd.translations

    @property
    def requests(self) -> list:
        return self._httpd.requests

    def push_script(self, status: int, payload: dict) -> None:
        """Queue a raw response served before lookup-table answers."""
        self._httpd.script.append((status, payload))

    def close(self):
        self._httpd.shutdown()
        self._httpd.server_close()


@pytest.fixture
def chat_server():
    server = FakeChatServer()
    yield server
    server.close()


@pytest.fixture(autouse=True)
def _offline_embeddings(monkeypatch):
    """Keep the suite hermetic: never pick up a real embedding service."""
    monkeypatch.delenv("EMBED_URL", raising=False)
    monkeypatch.delenv("LLM_URL", raising=False)
    monkeypatch.delenv("LLM_API_KEY", raising=False)
    monkeypatch.delenv("LLM_MODEL", raising=False)
