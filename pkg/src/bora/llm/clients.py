"""Chat-completion clients: live HTTP, fixture replay, recording and scripted."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

import httpx

log = logging.getLogger(__name__)

API_KEY_ENV = "BORA_API_KEY"
BASE_URL_ENV = "BORA_BASE_URL"
DEFAULT_BASE_URL = "https://api.openai.com/v1"
DEFAULT_MODEL = "gpt-4o-mini"
MANIFEST = "manifest.json"


class TransportError(RuntimeError):
    """The chat endpoint could not produce a reply."""


class ReplayExhausted(TransportError):
    pass


class FixtureDirNotEmpty(FileExistsError):
    pass


class MissingAPIKey(RuntimeError):
    pass


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text) / 4)


@dataclass(frozen=True)
class ChatReply:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0

    @property
    def usage(self) -> dict:
        return {"prompt_tokens": self.prompt_tokens, "completion_tokens": self.completion_tokens}


class ChatClient(Protocol):
    def send(self, messages: list[dict], temperature: float = 0.7, max_tokens: int = 2048) -> ChatReply: ...


class LiveClient:
    """OpenAI-compatible ``/chat/completions`` client with retry and backoff."""

    RETRY_STATUS = {408, 409, 429, 500, 502, 503, 504}

    def __init__(self, model: str = DEFAULT_MODEL, base_url: str | None = None, api_key: str | None = None,
                 timeout: float = 120.0, retries: int = 3, backoff: float = 1.0,
                 http_client: httpx.Client | None = None, sleep: Callable[[float], None] = time.sleep):
        api_key = api_key or os.environ.get(API_KEY_ENV)
        if not api_key:
            raise MissingAPIKey(f"set {API_KEY_ENV} to use the live client")
        self.model = model
        self.base_url = (base_url or os.environ.get(BASE_URL_ENV) or DEFAULT_BASE_URL).rstrip("/")
        self.retries = retries
        self.backoff = backoff
        self._sleep = sleep
        self._http = http_client or httpx.Client(timeout=timeout)
        self._headers = {"Authorization": f"Bearer {api_key}"}

    def send(self, messages, temperature=0.7, max_tokens=2048) -> ChatReply:
        payload = {"model": self.model, "messages": messages, "temperature": temperature, "max_tokens": max_tokens}
        last = None
        for attempt in range(self.retries + 1):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self._http.post(f"{self.base_url}/chat/completions", json=payload, headers=self._headers)
            except httpx.TransportError as exc:
                last = f"{type(exc).__name__}: {exc}"
                log.warning("chat request failed (attempt %d): %s", attempt + 1, last)
                continue
            if resp.status_code in self.RETRY_STATUS:
                last = f"HTTP {resp.status_code}"
                log.warning("chat request failed (attempt %d): %s", attempt + 1, last)
                continue
            if resp.status_code != 200:
                raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                body = resp.json()
                text = body["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise TransportError(f"unexpected response body: {exc}") from exc
            usage = body.get("usage") or {}
            return ChatReply(text or "", int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0)))
        raise TransportError(f"giving up after {self.retries + 1} attempts: {last}")


class ScriptedClient:
    """Replies with ``responder(messages, temperature)``; usage is estimated from text length."""

    def __init__(self, responder: Callable[[list[dict], float], str]):
        self.responder = responder
        self.calls = 0

    def send(self, messages, temperature=0.7, max_tokens=2048) -> ChatReply:
        self.calls += 1
        text = self.responder(messages, temperature)
        prompt = sum(estimate_tokens(m["content"]) for m in messages)
        return ChatReply(text, prompt, estimate_tokens(text))


def _fixture_files(directory: Path) -> list[Path]:
    return sorted(p for p in directory.iterdir()
                  if p.name != MANIFEST and p.suffix in (".json", ".txt") and not p.name.startswith("."))


class ReplayClient:
    """Serves recorded replies first-in first-out, ignoring the request.

    Fixture files are ``NNNNN.json`` documents with ``response`` and ``usage``
    fields (as written by :class:`RecordingClient`) or plain ``.txt`` replies,
    consumed in filename order.
    """

    def __init__(self, directory):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise FileNotFoundError(f"fixture directory {self.directory} does not exist")
        self._replies = []
        for path in _fixture_files(self.directory):
            if path.suffix == ".txt":
                self._replies.append(ChatReply(path.read_text()))
            else:
                doc = json.loads(path.read_text())
                usage = doc.get("usage") or {}
                self._replies.append(ChatReply(doc["response"], int(usage.get("prompt_tokens", 0)),
                                               int(usage.get("completion_tokens", 0))))
        manifest = self.directory / MANIFEST
        self.complete = json.loads(manifest.read_text()).get("complete", False) if manifest.exists() else True
        if not self.complete:
            log.warning("replaying an incomplete recording from %s", self.directory)
        self.position = 0

    def __len__(self):
        return len(self._replies)

    def send(self, messages, temperature=0.7, max_tokens=2048) -> ChatReply:
        if self.position >= len(self._replies):
            raise ReplayExhausted(f"no reply left after {self.position} in {self.directory}")
        reply = self._replies[self.position]
        self.position += 1
        return reply


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


class RecordingClient:
    """Forwards to ``inner`` and writes every exchange as a replay fixture.

    The manifest says ``complete: false`` until :meth:`close` is called with
    ``complete=True``, so a crashed session is recognisable as partial.
    Requests are stored as a SHA-256 digest unless ``full_requests`` is set.
    """

    def __init__(self, inner: ChatClient, directory, force: bool = False, full_requests: bool = False):
        self.inner = inner
        self.full_requests = full_requests
        self.directory = Path(directory)
        if self.directory.exists() and any(self.directory.iterdir()):
            if not force:
                raise FixtureDirNotEmpty(f"{self.directory} is not empty (use force to overwrite)")
            for p in _fixture_files(self.directory) + [self.directory / MANIFEST]:
                p.unlink(missing_ok=True)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.count = 0
        self._write_manifest(False)

    def _write_manifest(self, complete: bool):
        _atomic_write(self.directory / MANIFEST, json.dumps({"complete": complete, "responses": self.count}) + "\n")

    def send(self, messages, temperature=0.7, max_tokens=2048) -> ChatReply:
        reply = self.inner.send(messages, temperature, max_tokens)
        request = {"messages": messages, "temperature": temperature, "max_tokens": max_tokens}
        if not self.full_requests:
            digest = hashlib.sha256(json.dumps(messages, sort_keys=True).encode()).hexdigest()
            request = {"sha256": digest, "temperature": temperature, "max_tokens": max_tokens}
        doc = {
            "request": request,
            "response": reply.text,
            "usage": reply.usage,
        }
        _atomic_write(self.directory / f"{self.count:05d}.json", json.dumps(doc, indent=1) + "\n")
        self.count += 1
        self._write_manifest(False)
        return reply

    def close(self, complete: bool = True) -> None:
        self._write_manifest(complete)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close(complete=exc_type is None)
        return False


@dataclass
class UsageMeter:
    prompt_tokens: int = 0
    completion_tokens: int = 0
    calls: int = 0

    def add(self, reply: ChatReply) -> None:
        self.prompt_tokens += reply.prompt_tokens
        self.completion_tokens += reply.completion_tokens
        self.calls += 1

    def as_dict(self) -> dict:
        return {"prompt_tokens": self.prompt_tokens, "completion_tokens": self.completion_tokens, "calls": self.calls}
