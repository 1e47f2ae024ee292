"""Chat endpoint client with HTTP, replay, scripted and record backends."""

import hashlib
import json
import logging
import os
import threading
import time
from collections import deque
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional

import httpx

from app.exceptions import CassetteMiss, CassetteWriteError, ScriptMiss, Unreachable
from app.schemas.llm import CassetteRecord, ChatMessages, LlmBackendKind, LlmConfig, ScriptRule

logger = logging.getLogger(__name__)


def build_request_body(config: LlmConfig, messages: ChatMessages) -> dict:
    options: dict = {"temperature": config.temperature}
    if config.seed is not None:
        options["seed"] = config.seed
    return {
        "model": config.model_name,
        "messages": [m.model_dump() for m in messages],
        "stream": False,
        "options": options,
    }


def request_hash(body: dict) -> str:
    """Digest of (model, messages, temperature); independent of key order in the body."""
    key = {
        "model": body["model"],
        "messages": body["messages"],
        "temperature": body.get("options", {}).get("temperature"),
    }
    blob = json.dumps(key, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def extract_content(response_body: dict) -> str:
    """Assistant text from an Ollama-style or OpenAI-compatible reply."""
    if isinstance(response_body.get("message"), dict):
        return response_body["message"].get("content", "")
    choices = response_body.get("choices")
    if choices:
        return choices[0].get("message", {}).get("content", "")
    raise Unreachable(f"reply has no message content: {str(response_body)[:200]}")


def load_cassette(path: str | Path) -> list[CassetteRecord]:
    records = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                records.append(CassetteRecord.model_validate_json(line))
    return records


def load_script(path: str | Path) -> list[ScriptRule]:
    """Scripted backend rules: JSONL of {"match": ..., "reply": ...} or {"request_hash": ..., "reply": ...}."""
    rules = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                rules.append(ScriptRule.model_validate_json(line))
    return rules


class LlmClient:
    """Thread-safe chat client.

    At most `config.max_in_flight` calls run at once. Replay queues are consumed
    in cassette order per request hash; cassette writes go through one lock.
    """

    def __init__(
        self,
        config: LlmConfig,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
        usage=None,
    ):
        self.config = config
        self.usage = usage
        self.batch_id: Optional[str] = None
        self._transport = transport
        self._sleep = sleep
        self._in_flight = threading.BoundedSemaphore(config.max_in_flight)
        self._lock = threading.Lock()
        self._http: Optional[httpx.Client] = None
        self._replay: dict[str, deque[CassetteRecord]] = {}
        self.calls = 0

        if config.backend in (LlmBackendKind.REPLAY, LlmBackendKind.RECORD) and config.cassette_path is None:
            raise ValueError(f"{config.backend.value} backend needs a cassette path")
        if config.backend is LlmBackendKind.REPLAY:
            for record in load_cassette(config.cassette_path):
                self._replay.setdefault(record.request_hash, deque()).append(record)

    def __enter__(self) -> "LlmClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        if self._http is not None:
            self._http.close()
            self._http = None

    def _client(self) -> httpx.Client:
        with self._lock:
            if self._http is None:
                self._http = httpx.Client(timeout=self.config.timeout, transport=self._transport)
            return self._http

    # ========== Backends ==========

    def _post(self, body: dict) -> dict:
        """POST with retry on transport errors and 5xx; backoff base * factor**attempt."""
        attempts = self.config.max_retries + 1
        last_error = ""
        for attempt in range(attempts):
            try:
                response = self._client().post(self.config.endpoint_url, json=body)
                if response.status_code >= 500:
                    last_error = f"HTTP {response.status_code}"
                else:
                    response.raise_for_status()
                    return response.json()
            except httpx.HTTPStatusError as e:
                raise Unreachable(f"HTTP {e.response.status_code} from {self.config.endpoint_url}") from e
            except (httpx.TransportError, json.JSONDecodeError) as e:
                last_error = f"{type(e).__name__}: {e}"

            if attempt + 1 < attempts:
                delay = self.config.backoff_base * self.config.backoff_factor ** attempt
                logger.warning(f"LLM request failed ({last_error}), retry {attempt + 1}/{self.config.max_retries} in {delay:.1f}s")
                self._sleep(delay)

        raise Unreachable(f"{self.config.endpoint_url} unreachable after {attempts} attempts: {last_error}")

    def _replayed(self, digest: str) -> dict:
        with self._lock:
            queue = self._replay.get(digest)
            if not queue:
                logger.error(f"Cassette miss for request {digest[:12]}")
                raise CassetteMiss(f"no recorded reply left for request {digest}")
            return queue.popleft().response_body

    def _scripted(self, digest: str, messages: ChatMessages) -> str:
        user_text = next((m.content for m in reversed(messages) if m.role == "user"), "")
        for rule in self.config.script:
            if rule.request_hash is not None:
                if rule.request_hash == digest:
                    return rule.reply
            elif rule.match in user_text:
                return rule.reply
        raise ScriptMiss(f"no script rule matches request {digest[:12]}")

    def _append_cassette(self, digest: str, body: dict, response_body: dict) -> None:
        record = CassetteRecord(
            request_hash=digest,
            request_body=body,
            response_body=response_body,
            timestamp=datetime.now(timezone.utc),
        )
        line = record.model_dump_json() + "\n"
        with self._lock:
            try:
                with open(self.config.cassette_path, "a", encoding="utf-8") as f:
                    f.write(line)
                    f.flush()
                    os.fsync(f.fileno())
            except OSError as e:
                raise CassetteWriteError(f"cannot append to {self.config.cassette_path}: {e}") from e

    # ========== Public API ==========

    def chat(self, messages: ChatMessages, request_type: str = "chat", doc_id: Optional[str] = None) -> str:
        """Send one chat request and return the assistant content."""
        if not messages:
            raise ValueError("messages must not be empty")
        body = build_request_body(self.config, messages)
        digest = request_hash(body)
        backend = self.config.backend

        start_time = time.time()
        content, error = "", None
        with self._in_flight:
            with self._lock:
                self.calls += 1
            try:
                if backend is LlmBackendKind.SCRIPTED:
                    content = self._scripted(digest, messages)
                elif backend is LlmBackendKind.REPLAY:
                    content = extract_content(self._replayed(digest))
                else:
                    response_body = self._post(body)
                    if backend is LlmBackendKind.RECORD:
                        self._append_cassette(digest, body, response_body)
                    content = extract_content(response_body)
            except Exception as e:
                error = f"{type(e).__name__}: {e}"
                raise
            finally:
                if self.usage is not None:
                    self.usage.record(
                        request_type=request_type,
                        model_name=self.config.model_name,
                        request_hash=digest,
                        messages=messages,
                        response_text=content,
                        processing_time_ms=int((time.time() - start_time) * 1000),
                        success=error is None,
                        error_message=error,
                        doc_id=doc_id,
                        batch_id=self.batch_id,
                    )
        return content

    def record_session(self, messages: ChatMessages) -> str:
        """Chat over HTTP and append the exchange to the cassette."""
        if self.config.backend not in (LlmBackendKind.HTTP, LlmBackendKind.RECORD):
            raise ValueError("record_session needs the http backend")
        if self.config.cassette_path is None:
            raise ValueError("record_session needs a cassette path")
        body = build_request_body(self.config, messages)
        with self._in_flight:
            with self._lock:
                self.calls += 1
            response_body = self._post(body)
        self._append_cassette(request_hash(body), body, response_body)
        return extract_content(response_body)
