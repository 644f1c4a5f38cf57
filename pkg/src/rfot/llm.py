"""Backend-agnostic completion contract plus live, scripted and cassette backends."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence
from urllib.parse import urlsplit, urlunsplit

import httpx

from .errors import BackendError, CassetteMissError, PersistenceError, TransportError

logger = logging.getLogger(__name__)

GENERATION_TEMPERATURE = 0.7
LABEL_TEMPERATURE = 0.0


@dataclass(frozen=True)
class PromptRequest:
    user: str
    system: str = ""
    temperature: float = LABEL_TEMPERATURE
    max_tokens: int = 512
    seed_hint: int | None = None

    def __post_init__(self):
        if not self.user:
            raise ValueError("PromptRequest.user must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")

    @property
    def fingerprint(self) -> str:
        return fingerprint(self)

    def to_dict(self) -> dict:
        return {
            "system": self.system,
            "user": self.user,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "seed_hint": self.seed_hint,
        }


@dataclass(frozen=True)
class Completion:
    text: str
    latency: float = 0.0
    backend_id: str = ""

    def __post_init__(self):
        if self.latency < 0:
            raise ValueError("latency must be >= 0")


def fingerprint(req: PromptRequest | Mapping) -> str:
    """Stable key over system, user and temperature only.

    Accepts either a request or its serialized mapping, so the key does not
    depend on field order in a stored request.
    """
    if isinstance(req, PromptRequest):
        system, user, temperature = req.system, req.user, req.temperature
    else:
        system, user, temperature = req.get("system", ""), req["user"], req.get("temperature", 0.0)
    canonical = json.dumps(
        {"system": system, "temperature": round(float(temperature), 6), "user": user},
        sort_keys=True,
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class LLMBackend(Protocol):
    backend_id: str

    def complete(self, req: PromptRequest) -> Completion: ...


class CallCounter:
    """Mixin keeping a thread-safe log of issued requests."""

    def __init__(self):
        self._log_lock = threading.Lock()
        self.requests: list[PromptRequest] = []

    def _note(self, req: PromptRequest) -> None:
        with self._log_lock:
            self.requests.append(req)

    @property
    def call_count(self) -> int:
        return len(self.requests)


class ScriptedBackend(CallCounter):
    """In-process backend answering from a callable or a lookup table.

    ``script`` may be a callable ``req -> str``, or a mapping whose keys are
    either request fingerprints or raw user texts. Mapping values may be a
    string or a list of strings consumed in order.
    """

    backend_id = "scripted"

    def __init__(self, script: Callable[[PromptRequest], str] | Mapping[str, str | Sequence[str]]):
        super().__init__()
        self._lock = threading.Lock()
        if callable(script):
            self._fn = script
            self._table = None
        else:
            self._fn = None
            self._table = {k: [v] if isinstance(v, str) else list(v) for k, v in script.items()}
            self._cursor: dict[str, int] = {}

    def complete(self, req: PromptRequest) -> Completion:
        self._note(req)
        if self._fn is not None:
            text = self._fn(req)
        else:
            fp = fingerprint(req)
            key = fp if fp in self._table else req.user
            if key not in self._table:
                raise CassetteMissError(fp, "request not scripted")
            with self._lock:
                replies = self._table[key]
                i = self._cursor.get(key, 0)
                self._cursor[key] = i + 1
            text = replies[min(i, len(replies) - 1)]
        if not text:
            raise BackendError("scripted backend produced an empty completion")
        return Completion(text=text, latency=0.0, backend_id=self.backend_id)


class Cassette:
    """Recorded completions keyed by request fingerprint, replayed in order."""

    def __init__(self, entries: Mapping[str, Sequence[str]] | None = None):
        self._lock = threading.Lock()
        self.entries: dict[str, list[str]] = {k: list(v) for k, v in (entries or {}).items()}
        self._cursor: dict[str, int] = {}

    def __contains__(self, fp: str) -> bool:
        return fp in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def remaining(self, fp: str) -> int:
        with self._lock:
            return len(self.entries.get(fp, ())) - self._cursor.get(fp, 0)

    def next_text(self, fp: str) -> str:
        with self._lock:
            texts = self.entries.get(fp)
            if texts is None:
                raise CassetteMissError(fp)
            i = self._cursor.get(fp, 0)
            if i >= len(texts):
                raise CassetteMissError(fp, f"all {len(texts)} recorded completion(s) already replayed")
            self._cursor[fp] = i + 1
            return texts[i]

    def take_if_available(self, fp: str) -> str | None:
        with self._lock:
            texts = self.entries.get(fp, [])
            i = self._cursor.get(fp, 0)
            if i < len(texts):
                self._cursor[fp] = i + 1
                return texts[i]
            return None

    def append(self, fp: str, text: str) -> None:
        with self._lock:
            texts = self.entries.setdefault(fp, [])
            texts.append(text)
            # an appended entry counts as already consumed by the recording run
            self._cursor[fp] = len(texts)

    def rewind(self) -> None:
        with self._lock:
            self._cursor.clear()

    def to_json(self) -> str:
        with self._lock:
            return json.dumps(self.entries, ensure_ascii=False, sort_keys=True, indent=1)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        try:
            tmp.write_text(self.to_json() + "\n", encoding="utf-8")
            os.replace(tmp, path)
        except OSError as exc:
            raise PersistenceError(f"cannot write cassette {path}: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "Cassette":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise PersistenceError(f"cannot read cassette {path}: {exc}") from exc
        if not isinstance(raw, dict) or not all(
            isinstance(v, list) and all(isinstance(t, str) for t in v) for v in raw.values()
        ):
            raise PersistenceError(f"{path}: cassette must map fingerprints to lists of texts")
        return cls(raw)


def record(req: PromptRequest, completion: Completion, cassette: Cassette) -> Cassette:
    cassette.append(fingerprint(req), completion.text)
    return cassette


class ReplayBackend(CallCounter):
    backend_id = "replay"

    def __init__(self, cassette: Cassette):
        super().__init__()
        self.cassette = cassette

    def complete(self, req: PromptRequest) -> Completion:
        self._note(req)
        text = self.cassette.next_text(fingerprint(req))
        return Completion(text=text, latency=0.0, backend_id=self.backend_id)


class RecordingBackend(CallCounter):
    """Replays what the cassette already holds and records everything else.

    Starting from a partial cassette therefore only issues the missing calls.
    """

    def __init__(self, inner: LLMBackend, cassette: Cassette, path: str | Path | None = None):
        super().__init__()
        self.inner = inner
        self.cassette = cassette
        self.path = Path(path) if path is not None else None
        self.live_calls = 0
        self.backend_id = f"record:{inner.backend_id}"

    def complete(self, req: PromptRequest) -> Completion:
        self._note(req)
        fp = fingerprint(req)
        text = self.cassette.take_if_available(fp)
        if text is not None:
            return Completion(text=text, latency=0.0, backend_id="replay")
        completion = self.inner.complete(req)
        with self._log_lock:
            self.live_calls += 1
        record(req, completion, self.cassette)
        return completion

    def save(self) -> None:
        if self.path is not None:
            self.cassette.save(self.path)


@dataclass
class HTTPBackend:
    """OpenAI-compatible chat-completions client (also reads the local-runner reply shape)."""

    url: str
    model: str
    api_key: str | None = None
    timeout: float = 60.0
    retries: int = 3
    backoff: float = 1.0
    sleep: Callable[[float], None] = time.sleep
    transport: httpx.BaseTransport | None = None
    backend_id: str = field(init=False)

    def __post_init__(self):
        self.backend_id = f"http:{self.model}"
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        self._client = httpx.Client(timeout=self.timeout, headers=headers, transport=self.transport)

    @classmethod
    def from_env(cls, **overrides) -> "HTTPBackend":
        kwargs = {
            "url": os.environ.get("RFOT_BACKEND_URL", "http://localhost:11434/v1/chat/completions"),
            "model": os.environ.get("RFOT_MODEL", "llama3"),
            "api_key": os.environ.get("RFOT_API_KEY") or None,
            "timeout": float(os.environ.get("RFOT_TIMEOUT", "60")),
        }
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kwargs)

    def body(self, req: PromptRequest) -> dict:
        messages = []
        if req.system:
            messages.append({"role": "system", "content": req.system})
        messages.append({"role": "user", "content": req.user})
        body = {
            "model": self.model,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
            "stream": False,
        }
        if req.seed_hint is not None:
            body["seed"] = req.seed_hint
        return body

    @staticmethod
    def extract_text(payload: dict) -> str | None:
        try:
            return payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            pass
        try:
            return payload["message"]["content"]
        except (KeyError, TypeError):
            return None

    def complete(self, req: PromptRequest) -> Completion:
        body = self.body(req)
        delay = self.backoff
        for attempt in range(self.retries + 1):
            start = time.perf_counter()
            try:
                resp = self._client.post(self.url, json=body)
            except httpx.TransportError as exc:
                if attempt == self.retries:
                    raise TransportError(f"{self.url}: {exc!r} after {self.retries} retries") from exc
                logger.warning("transport error (%r), retry %d in %.1fs", exc, attempt + 1, delay)
                self.sleep(delay)
                delay *= 2
                continue
            latency = time.perf_counter() - start
            if not 200 <= resp.status_code < 300:
                raise BackendError(
                    f"{self.url} answered HTTP {resp.status_code}: {resp.text[:200]}",
                    status=resp.status_code,
                )
            try:
                text = self.extract_text(resp.json())
            except ValueError as exc:
                raise BackendError(f"{self.url} returned non-JSON body") from exc
            if not text:
                raise BackendError(f"{self.url} returned an empty completion", status=resp.status_code)
            return Completion(text=text, latency=latency, backend_id=self.backend_id)
        raise AssertionError("unreachable")

    def check_reachable(self) -> None:
        """Raise TransportError unless something answers on the endpoint's host."""
        parts = urlsplit(self.url)
        probe = urlunsplit((parts.scheme, parts.netloc, "/", "", ""))
        try:
            self._client.get(probe, timeout=min(self.timeout, 5.0))
        except httpx.TransportError as exc:
            raise TransportError(f"backend {self.url} unreachable: {exc!r}") from exc

    def close(self) -> None:
        self._client.close()
