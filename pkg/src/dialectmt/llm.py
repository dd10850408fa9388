"""Chat-completion client: one prompt in, one dialect translation out.

Speaks the de-facto chat-completions JSON schema (``model``, ``messages``,
``temperature``, ``max_tokens``) over plain POST. Transport errors and
429/5xx responses are retried with exponential backoff (base 0.5 s,
factor 2, +/-25% jitter); 401/403 fail immediately.

Three transports exist: live HTTP, a recording wrapper that captures
``{request_hash, status, body, delay_ms}`` JSON lines, and a replay
transport that serves those fixtures back, so the whole evaluation path
runs offline and byte-deterministically on fixtures. Fixtures never store
the API key, only its hash.
"""

from __future__ import annotations

import hashlib
import json
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import requests

from .errors import (
    ApiError,
    AuthError,
    ContentFiltered,
    DataError,
    MalformedResponse,
    RateLimited,
    Timeout,
    TransportFailure,
)
from .prompt import FewShotPrompt

BACKOFF_BASE = 0.5
BACKOFF_FACTOR = 2.0
_JITTER = 0.25

_QUOTE_PAIRS = (('"', '"'), ("'", "'"), ("“", "”"), ("‘", "’"), ("«", "»"))


class ReplayMiss(DataError):
    """Replay fixture has no (remaining) entry for a request."""


class _RetryableSendError(Exception):
    """Internal: transport-level failure that the client may retry."""

    def __init__(self, kind: str, message: str):
        self.kind = kind  # "timeout" | "connection"
        super().__init__(message)


@dataclass
class ModelConfig:
    """Connection and decoding settings for one chat endpoint."""

    endpoint: str
    model: str
    temperature: float = 0.0
    max_tokens: int = 256
    timeout: float = 60.0
    max_retries: int = 3
    api_key: str = ""

    def key_hash(self) -> str:
        if not self.api_key:
            return ""
        return hashlib.sha256(self.api_key.encode("utf-8")).hexdigest()[:16]

    def config_hash(self) -> str:
        """Hash of everything except the secret; goes into run manifests."""
        payload = json.dumps(
            {
                "endpoint": self.endpoint,
                "model": self.model,
                "temperature": self.temperature,
                "max_tokens": self.max_tokens,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass
class TranslationResult:
    output_text: str
    prompt_id: str
    model: str
    latency: float = 0.0
    attempts: int = 0
    usage: tuple[int, int] | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def build_request(prompt_text: str, cfg: ModelConfig) -> dict:
    """The request body; one user-role message carrying the prompt."""
    return {
        "model": cfg.model,
        "messages": [{"role": "user", "content": prompt_text}],
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_tokens,
    }


def request_hash(body: dict) -> str:
    canonical = json.dumps(body, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class HttpTransport:
    """Live POST to the configured endpoint. API key only in headers."""

    deterministic = False

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        self._session = requests.Session()

    def send(self, body: dict) -> tuple[int, dict]:
        headers = {}
        if self.cfg.api_key:
            headers["Authorization"] = f"Bearer {self.cfg.api_key}"
        try:
            resp = self._session.post(
                self.cfg.endpoint, json=body, headers=headers, timeout=self.cfg.timeout
            )
        except requests.Timeout as exc:
            raise _RetryableSendError("timeout", "request timed out") from exc
        except requests.RequestException as exc:
            raise _RetryableSendError("connection", type(exc).__name__) from exc
        try:
            payload = resp.json()
        except ValueError:
            payload = {"error": resp.text[:500]}
        return resp.status_code, payload


class ReplayTransport:
    """Serves recorded responses; consumes entries per hash in file order."""

    deterministic = True

    def __init__(self, path: str):
        self._queues: dict[str, list[dict]] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                entry = json.loads(line)
                if "meta" in entry:
                    continue
                self._queues.setdefault(entry["request_hash"], []).append(entry)

    def send(self, body: dict) -> tuple[int, dict]:
        h = request_hash(body)
        queue = self._queues.get(h)
        if not queue:
            raise ReplayMiss(f"no fixture entry for request {h[:12]}")
        entry = queue.pop(0)
        return int(entry["status"]), entry["body"]


class RecordingTransport:
    """Wraps a live transport and appends every exchange to a fixture."""

    deterministic = False

    def __init__(self, inner, path: str, cfg: ModelConfig):
        self._inner = inner
        self._path = Path(path)
        if not self._path.exists() or self._path.stat().st_size == 0:
            meta = {"meta": {"key_hash": cfg.key_hash(), "model": cfg.model}}
            self._path.write_text(json.dumps(meta) + "\n", encoding="utf-8")

    def send(self, body: dict) -> tuple[int, dict]:
        started = time.monotonic()
        status, payload = self._inner.send(body)
        entry = {
            "request_hash": request_hash(body),
            "status": status,
            "body": payload,
            "delay_ms": int((time.monotonic() - started) * 1000),
        }
        with open(self._path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, ensure_ascii=False, sort_keys=True) + "\n")
        return status, payload


def _postprocess(content: str) -> str:
    """First nonempty line, stripped of one layer of symmetric quotes."""
    for line in content.splitlines():
        line = line.strip()
        if not line:
            continue
        for opening, closing in _QUOTE_PAIRS:
            if len(line) >= 2 and line[0] == opening and line[-1] == closing:
                line = line[1:-1].strip()
                break
        return line
    return ""


def _parse_success(payload: dict) -> tuple[str, tuple[int, int] | None]:
    choices = payload.get("choices")
    if not isinstance(choices, list) or not choices:
        raise MalformedResponse("response has no choices")
    first = choices[0]
    message = first.get("message") if isinstance(first, dict) else None
    if not isinstance(message, dict):
        raise MalformedResponse("choice has no message")
    if message.get("refusal") or first.get("finish_reason") == "content_filter":
        raise ContentFiltered(str(message.get("refusal") or "content filtered"))
    content = message.get("content")
    if not isinstance(content, str):
        raise MalformedResponse("message has no content")
    usage = payload.get("usage")
    tokens = None
    if isinstance(usage, dict) and "prompt_tokens" in usage and "completion_tokens" in usage:
        tokens = (int(usage["prompt_tokens"]), int(usage["completion_tokens"]))
    return content, tokens


class ChatClient:
    """Retry loop + response parsing over a pluggable transport."""

    def __init__(self, cfg: ModelConfig, transport=None, sleeper=time.sleep, rng=None):
        self.cfg = cfg
        self.transport = transport if transport is not None else HttpTransport(cfg)
        self._sleep = sleeper
        self._rng = rng if rng is not None else random.Random()

    def _backoff(self, attempt: int) -> None:
        if self.transport.deterministic:
            return
        delay = BACKOFF_BASE * BACKOFF_FACTOR ** (attempt - 1)
        delay *= 1.0 + _JITTER * (2.0 * self._rng.random() - 1.0)
        self._sleep(delay)

    def translate(self, prompt: FewShotPrompt) -> TranslationResult:
        """Send the prompt; return the first choice's cleaned content.

        Raises:
            AuthError: 401/403 (never retried).
            RateLimited / Timeout / TransportFailure: retries exhausted.
            ApiError: other non-retryable 4xx.
            MalformedResponse / ContentFiltered: bad or refused content.
        """
        body = build_request(prompt.text, self.cfg)
        prompt_id = hashlib.sha256(prompt.text.encode("utf-8")).hexdigest()[:16]
        started = time.monotonic()
        attempts = 0
        last_retryable: Exception | None = None
        while attempts <= self.cfg.max_retries:
            if attempts:
                self._backoff(attempts)
            attempts += 1
            try:
                status, payload = self.transport.send(body)
            except _RetryableSendError as exc:
                last_retryable = Timeout(str(exc)) if exc.kind == "timeout" else TransportFailure(str(exc))
                continue
            if status == 200:
                content, usage = _parse_success(payload)
                return TranslationResult(
                    output_text=_postprocess(content),
                    prompt_id=prompt_id,
                    model=self.cfg.model,
                    latency=time.monotonic() - started,
                    attempts=attempts,
                    usage=usage,
                )
            detail = str(payload.get("error", ""))[:200] if isinstance(payload, dict) else ""
            if status in (401, 403):
                exc = AuthError(f"HTTP {status}: {detail}")
                exc.attempts = attempts
                raise exc
            if status == 429:
                last_retryable = RateLimited(f"HTTP 429: {detail}")
                continue
            if status >= 500:
                last_retryable = TransportFailure(f"HTTP {status}: {detail}")
                continue
            exc = ApiError(status, detail)
            exc.attempts = attempts
            raise exc
        assert last_retryable is not None
        last_retryable.attempts = attempts
        raise last_retryable

    def translate_batch(
        self, prompts: list[FewShotPrompt], parallelism: int = 1
    ) -> list[TranslationResult]:
        """Translate many prompts; results stay in input order.

        Per-item failures become results with ``error`` set; the batch
        always completes.
        """
        if parallelism < 1:
            raise ValueError("parallelism must be >= 1")

        def one(prompt: FewShotPrompt) -> TranslationResult:
            try:
                return self.translate(prompt)
            except Exception as exc:  # noqa: BLE001 - per-item isolation
                return TranslationResult(
                    output_text="",
                    prompt_id=hashlib.sha256(prompt.text.encode("utf-8")).hexdigest()[:16],
                    model=self.cfg.model,
                    attempts=getattr(exc, "attempts", 0),
                    error=f"{type(exc).__name__}: {exc}",
                )

        if parallelism == 1:
            return [one(p) for p in prompts]
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            return list(pool.map(one, prompts))
