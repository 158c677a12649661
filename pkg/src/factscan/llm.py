"""LLM client with pluggable backends, caching and record/replay.

The wire backend speaks the OpenAI-compatible chat completions protocol
(POST {endpoint}/v1/chat/completions, single user message). A scripted
backend replays recorded completions keyed by a request digest, which
makes every pipeline in this package runnable offline and byte-for-byte
reproducible. A persistent cache with the same digest keys makes reruns
resumable without repeating calls.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import httpx


class LlmError(Exception):
    """Base class for client failures."""


class EmptyPromptError(LlmError):
    pass


class BackendUnreachable(LlmError):
    pass


class MalformedBackendResponse(LlmError):
    pass


class BudgetExceeded(LlmError):
    pass


class MissingRecording(LlmError):
    pass


class CorruptSession(LlmError):
    pass


@dataclass(frozen=True)
class GenerationParams:
    """Decoding settings for a single completion request."""

    model_id: str
    temperature: float = 0.0
    max_tokens: int = 1024
    seed: int | None = None

    def __post_init__(self) -> None:
        if not self.model_id:
            raise ValueError("model_id must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be positive, got {self.max_tokens}")

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GenerationParams":
        return cls(
            model_id=data["model_id"],
            temperature=data["temperature"],
            max_tokens=data["max_tokens"],
            seed=data.get("seed"),
        )


def request_digest(prompt: str, params: GenerationParams) -> str:
    """Stable content digest of (prompt, generation params).

    Used as the cache key and the replay key: equal requests share a
    digest, any change to prompt text or parameters changes it.
    """
    payload = json.dumps(
        {"prompt": prompt, "params": params.to_dict()},
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _record_digest(cache_key: str, completion: str) -> str:
    # integrity digest over the full record: detects edited completions on load
    return hashlib.sha256((cache_key + "\x00" + completion).encode("utf-8")).hexdigest()


@dataclass
class LlmExchange:
    """One completed request/response pair, as recorded in the audit trail."""

    prompt: str
    params: GenerationParams
    completion: str
    cache_key: str
    backend: str  # "http", "scripted" or "cache-hit"
    timestamp: str

    def to_record(self) -> dict:
        return {
            "cache_key": self.cache_key,
            "prompt": self.prompt,
            "params": self.params.to_dict(),
            "completion": self.completion,
            "backend": self.backend,
            "timestamp": self.timestamp,
            "record_digest": _record_digest(self.cache_key, self.completion),
        }


class HttpBackend:
    """OpenAI-compatible chat completions over HTTP.

    Transient failures (connection errors, HTTP 5xx/429) are retried with
    bounded exponential backoff, at most ``max_retries`` retries. Any
    other unusable answer raises MalformedBackendResponse.
    """

    name = "http"

    def __init__(
        self,
        endpoint: str,
        api_key: str | None = None,
        timeout: float = 120.0,
        max_retries: int = 3,
        backoff_base: float = 0.5,
        transport: httpx.BaseTransport | None = None,
    ):
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(
            base_url=endpoint.rstrip("/"), headers=headers, timeout=timeout, transport=transport
        )
        self.max_retries = max_retries
        self.backoff_base = backoff_base

    def generate(self, prompt: str, params: GenerationParams) -> str:
        body: dict = {
            "model": params.model_id,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        if params.seed is not None:
            body["seed"] = params.seed

        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_base * (2 ** (attempt - 1)))
            try:
                response = self._client.post("/v1/chat/completions", json=body)
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code in (429,) or response.status_code >= 500:
                last_error = BackendUnreachable(
                    f"backend returned HTTP {response.status_code}"
                )
                continue
            if response.status_code != 200:
                raise MalformedBackendResponse(
                    f"backend returned HTTP {response.status_code}: {response.text[:200]}"
                )
            return self._extract_content(response)
        raise BackendUnreachable(
            f"backend unreachable after {self.max_retries + 1} attempts: {last_error}"
        )

    @staticmethod
    def _extract_content(response: httpx.Response) -> str:
        try:
            data = response.json()
            content = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedBackendResponse(f"cannot read completion from response: {exc}")
        if not isinstance(content, str):
            raise MalformedBackendResponse("completion content is not a string")
        return content

    def close(self) -> None:
        self._client.close()


class ScriptedBackend:
    """Replays recorded completions keyed by request digest.

    An unknown request raises MissingRecording, so a replayed pipeline
    can never silently invent an answer.
    """

    name = "scripted"

    def __init__(self, completions: dict[str, str] | None = None):
        self._completions = dict(completions or {})

    def __len__(self) -> int:
        return len(self._completions)

    def generate(self, prompt: str, params: GenerationParams) -> str:
        key = request_digest(prompt, params)
        try:
            return self._completions[key]
        except KeyError:
            raise MissingRecording(
                f"no recorded completion for request {key[:12]} "
                f"(prompt starts: {prompt[:80]!r})"
            ) from None


class ResponseCache:
    """Append-only completion cache keyed by request digest.

    Entries are persisted as JSON lines when a path is given, so an
    interrupted run resumes without repeating calls. Reads are lock-free
    on a plain dict; writes are serialized. A row whose stored digest
    does not match its recomputed request digest is ignored on load: the
    cache can never return a completion for a different request.
    """

    def __init__(self, path: str | Path | None = None):
        self._path = Path(path) if path is not None else None
        self._entries: dict[str, str] = {}
        self._write_lock = threading.Lock()
        if self._path is not None and self._path.exists():
            self._load()

    def _load(self) -> None:
        assert self._path is not None
        with self._path.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                    key = row["cache_key"]
                    completion = row["completion"]
                    params = GenerationParams.from_dict(row["params"])
                    if request_digest(row["prompt"], params) != key:
                        continue
                except (ValueError, KeyError, TypeError):
                    continue
                self._entries[key] = completion

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: str) -> str | None:
        return self._entries.get(key)

    def put(self, exchange: LlmExchange) -> None:
        with self._write_lock:
            if exchange.cache_key in self._entries:
                return
            self._entries[exchange.cache_key] = exchange.completion
            if self._path is not None:
                with self._path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(exchange.to_record(), ensure_ascii=False) + "\n")


class LlmClient:
    """Front door for all completions: cache, budget, audit trail.

    Thread-safe; concurrent in-flight backend requests are bounded by
    ``max_in_flight``. The budget (``max_calls``) counts backend calls
    only; cache hits are free. Every exchange, hit or miss, lands in the
    audit trail for session recording.
    """

    def __init__(
        self,
        backend,
        cache: ResponseCache | None = None,
        max_calls: int | None = None,
        max_in_flight: int = 8,
    ):
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be positive")
        self.backend = backend
        self.cache = cache
        self.max_calls = max_calls
        self.max_in_flight = max_in_flight
        self.exchanges: list[LlmExchange] = []
        self.backend_calls = 0
        self.cache_hits = 0
        self._sem = threading.Semaphore(max_in_flight)
        self._lock = threading.Lock()

    def complete(self, prompt: str, params: GenerationParams) -> LlmExchange:
        if not prompt or not prompt.strip():
            raise EmptyPromptError("prompt is empty")
        key = request_digest(prompt, params)

        cached = self.cache.get(key) if self.cache is not None else None
        if cached is not None:
            exchange = self._make_exchange(prompt, params, cached, key, "cache-hit")
            with self._lock:
                self.cache_hits += 1
                self.exchanges.append(exchange)
            return exchange

        with self._lock:
            if self.max_calls is not None and self.backend_calls >= self.max_calls:
                raise BudgetExceeded(f"call budget of {self.max_calls} exhausted")
            self.backend_calls += 1
        with self._sem:
            completion = self.backend.generate(prompt, params)
        exchange = self._make_exchange(prompt, params, completion, key, self.backend.name)
        if self.cache is not None:
            self.cache.put(exchange)
        with self._lock:
            self.exchanges.append(exchange)
        return exchange

    def complete_many(
        self, prompts: Sequence[str], params: GenerationParams
    ) -> list[LlmExchange]:
        """Complete several prompts, joined deterministically in input order."""
        if not prompts:
            return []
        if len(prompts) == 1:
            return [self.complete(prompts[0], params)]
        with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
            return list(pool.map(lambda p: self.complete(p, params), prompts))

    @staticmethod
    def _make_exchange(
        prompt: str, params: GenerationParams, completion: str, key: str, backend: str
    ) -> LlmExchange:
        return LlmExchange(
            prompt=prompt,
            params=params,
            completion=completion,
            cache_key=key,
            backend=backend,
            timestamp=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        )


def record_session(exchanges: Iterable[LlmExchange], path: str | Path) -> int:
    """Write an audit trail as a JSON-lines session file.

    Duplicate request digests are collapsed to their first completion,
    which mirrors cache semantics on replay. Returns the number of rows
    written.
    """
    seen: dict[str, dict] = {}
    for ex in exchanges:
        seen.setdefault(ex.cache_key, ex.to_record())
    with Path(path).open("w", encoding="utf-8") as fh:
        # sorted by digest: concurrent runs record the same file
        for key in sorted(seen):
            fh.write(json.dumps(seen[key], ensure_ascii=False) + "\n")
    return len(seen)


def load_session(path: str | Path) -> ScriptedBackend:
    """Load a session file into a replay backend.

    Every row is integrity-checked: the stored request digest must match
    a recomputation from the stored prompt and params, and the stored
    record digest must match the stored completion. Any mismatch or
    undecodable row raises CorruptSession.
    """
    completions: dict[str, str] = {}
    session_path = Path(path)
    with session_path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                key = row["cache_key"]
                prompt = row["prompt"]
                params = GenerationParams.from_dict(row["params"])
                completion = row["completion"]
                stored_digest = row["record_digest"]
            except (ValueError, KeyError, TypeError) as exc:
                raise CorruptSession(f"{session_path}:{lineno}: unreadable row ({exc})")
            if request_digest(prompt, params) != key:
                raise CorruptSession(
                    f"{session_path}:{lineno}: request digest mismatch"
                )
            if _record_digest(key, completion) != stored_digest:
                raise CorruptSession(
                    f"{session_path}:{lineno}: record digest mismatch"
                )
            completions.setdefault(key, completion)
    return ScriptedBackend(completions)
