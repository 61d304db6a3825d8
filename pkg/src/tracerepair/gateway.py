"""Provider-agnostic chat-completion gateway with caching, retries and rate limiting.

The wire protocol is the de-facto chat-completions HTTP interface: POST
{model, messages, temperature} with a bearer token taken from the
GATEWAY_API_KEY environment variable.  Offline runs use the scripted
implementations, which share the HTTP gateway's exact call surface.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence


class GatewayError(RuntimeError):
    pass


@dataclass(frozen=True)
class GatewayConfig:
    endpoint: str = "http://localhost:8000/v1/chat/completions"
    model: str = "local-model"
    temperature: float = 0.7
    max_retries: int = 3
    timeout: float = 60.0
    cache_dir: str | None = None
    rate_limit: int = 60  # requests per minute, 0 disables

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


def call_key(model: str, prompt: str, temperature: float, sample_index: int) -> str:
    """Stable content hash identifying one gateway call for cache/stub lookup."""
    payload = "\x00".join([model, prompt, repr(float(temperature)), str(sample_index)])
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class _TokenBucket:
    def __init__(self, per_minute: int):
        self.capacity = max(1, per_minute)
        self.tokens = float(self.capacity)
        self.fill_rate = per_minute / 60.0
        self.updated = time.monotonic()
        self.lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self.lock:
                now = time.monotonic()
                self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.fill_rate)
                self.updated = now
                if self.tokens >= 1:
                    self.tokens -= 1
                    return
                wait = (1 - self.tokens) / self.fill_rate
            time.sleep(wait)


class HttpChatGateway:
    """Thread-safe HTTP gateway with exponential-backoff retries."""

    def __init__(self, config: GatewayConfig):
        self.config = config
        self.model = config.model
        self.calls = 0
        self._lock = threading.Lock()
        self._bucket = _TokenBucket(config.rate_limit) if config.rate_limit else None

    def _count(self) -> None:
        with self._lock:
            self.calls += 1

    def complete(self, prompt: str, *, temperature: float | None = None, sample_index: int = 0) -> str:
        import requests

        if self._bucket is not None:
            self._bucket.acquire()
        self._count()
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get("GATEWAY_API_KEY")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature if temperature is None else temperature,
        }
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            try:
                response = requests.post(
                    self.config.endpoint, json=payload, headers=headers,
                    timeout=self.config.timeout,
                )
                if response.status_code in (429,) or response.status_code >= 500:
                    raise GatewayError(f"retryable status {response.status_code}")
                response.raise_for_status()
                data = response.json()
                return data["choices"][0]["message"]["content"]
            except Exception as e:  # noqa: BLE001 - network layer
                last_error = e
                if attempt < self.config.max_retries:
                    time.sleep(min(30.0, 0.5 * 2**attempt))
        raise GatewayError(f"gateway call failed after {self.config.max_retries + 1} attempts: {last_error}")


class ScriptedGateway:
    """In-memory stub: replies come from a fixed sequence or a callable.

    Deterministic and offline by construction; tests drive every
    gateway-dependent code path through this.
    """

    def __init__(
        self,
        replies: Sequence[str] | Callable[[str, float, int], str] = (),
        model: str = "scripted",
    ):
        self.model = model
        self.calls = 0
        self.prompts: list[str] = []
        self._lock = threading.Lock()
        self._replies = replies

    def complete(self, prompt: str, *, temperature: float | None = None, sample_index: int = 0) -> str:
        with self._lock:
            index = self.calls
            self.calls += 1
            self.prompts.append(prompt)
        if callable(self._replies):
            return self._replies(prompt, temperature if temperature is not None else 0.0, sample_index)
        if index >= len(self._replies):
            raise GatewayError(f"scripted gateway exhausted after {len(self._replies)} replies")
        return self._replies[index]


class StubDirGateway:
    """Replays canned replies from a directory of call-hash records.

    Each record is ``<call_key>.json`` containing ``{"reply": ...}``; the
    key is :func:`call_key` over (model, prompt, temperature, sample_index).
    Records can be captured from real runs or authored by tests.
    """

    def __init__(self, directory: str | Path, model: str = "stub"):
        self.directory = Path(directory)
        self.model = model
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, prompt: str, *, temperature: float | None = None, sample_index: int = 0) -> str:
        with self._lock:
            self.calls += 1
        key = call_key(self.model, prompt, temperature if temperature is not None else 0.0, sample_index)
        record = self.directory / f"{key}.json"
        if not record.exists():
            raise GatewayError(f"no stub record {key} in {self.directory}")
        return json.loads(record.read_text(encoding="utf-8"))["reply"]


def write_stub_record(
    directory: str | Path,
    model: str,
    prompt: str,
    temperature: float,
    sample_index: int,
    reply: str,
) -> Path:
    """Author one stub record; used by tests and by capture tooling."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    key = call_key(model, prompt, temperature, sample_index)
    path = directory / f"{key}.json"
    _atomic_write(path, json.dumps({"reply": reply}, ensure_ascii=False))
    return path


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def cached_call(gateway, prompt: str, temperature: float, sample_index: int = 0) -> str:
    """Disk-cached gateway call keyed by (model, prompt, temperature, sample).

    Hits return the stored reply without touching the network; corrupted
    cache entries are treated as misses and transparently re-fetched.
    """
    cache_dir = getattr(getattr(gateway, "config", None), "cache_dir", None)
    if cache_dir is None:
        return gateway.complete(prompt, temperature=temperature, sample_index=sample_index)
    cache = Path(cache_dir)
    cache.mkdir(parents=True, exist_ok=True)
    key = call_key(gateway.model, prompt, temperature, sample_index)
    entry = cache / f"{key}.json"
    if entry.exists():
        try:
            return json.loads(entry.read_text(encoding="utf-8"))["reply"]
        except (json.JSONDecodeError, KeyError, UnicodeDecodeError):
            pass  # corrupted entry: fall through to a fresh call
    reply = gateway.complete(prompt, temperature=temperature, sample_index=sample_index)
    _atomic_write(entry, json.dumps({"reply": reply}, ensure_ascii=False))
    return reply
