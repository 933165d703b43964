"""Uniform access to text-generation backends.

Three routes produce a :class:`RawCompletion`:

* a chat-completion HTTP endpoint (the de-facto JSON wire protocol exposed
  by hosted and local inference servers), with retry on transient failures;
* a deterministic offline mock, addressed with a ``mock:`` base URL, whose
  output is a pure function of (seed, profile, prompt);
* a persistent JSONL response cache layered over either of the above.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from urllib.parse import parse_qs, urlparse

import requests

logger = logging.getLogger(__name__)


class ProviderError(Exception):
    """Base class for completion-backend failures."""


class TransportError(ProviderError):
    """Network-level failure (connection, timeout); retried."""


class ProviderUnavailableError(ProviderError):
    """All retry attempts exhausted."""


class ProviderAuthError(ProviderError):
    """Authentication rejected or credential missing; never retried."""


class ProviderRequestError(ProviderError):
    """Backend rejected the request (non-transient 4xx); never retried."""


class ProviderProtocolError(ProviderError):
    """The backend returned a body the wire protocol does not allow."""


class CacheIOError(Exception):
    """The response cache could not be read or written."""


@dataclass(frozen=True)
class JudgeEndpoint:
    """A text-generation backend plus its decoding parameters.

    ``base_url`` may use the ``mock:`` scheme to select the offline
    deterministic backend (see :func:`parse_mock_url`). The credential is
    read from the environment variable named by ``auth_token_env`` and is
    never stored in configuration or cache files.
    """

    endpoint_id: str
    base_url: str
    model_name: str
    temperature: float = 0.0
    max_tokens: int = 64
    auth_token_env: str | None = None
    completions_path: str = "/v1/chat/completions"
    timeout: float = 30.0
    parallelism: int = 4

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")

    @property
    def is_mock(self) -> bool:
        return self.base_url.startswith("mock:")


@dataclass(frozen=True)
class RawCompletion:
    text: str
    latency: float = 0.0
    from_cache: bool = False


@dataclass(frozen=True)
class RetryPolicy:
    """Exponential backoff with jitter for transient failures."""

    max_attempts: int = 3
    base_delay: float = 0.5
    multiplier: float = 2.0
    max_delay: float = 8.0
    jitter: float = 0.25

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")

    def delay(self, attempt: int, rng: random.Random) -> float:
        base = min(self.base_delay * self.multiplier ** (attempt - 1), self.max_delay)
        return base * (1.0 + self.jitter * rng.uniform(-1.0, 1.0))


# ---------------------------------------------------------------------------
# Mock backend


@dataclass(frozen=True)
class MockProfile:
    """Behavior of the offline mock judge.

    kind:
      fixed      -- always emit ``str(value)``.
      digest     -- emit a label in 0..3 derived from sha256(seed, prompt).
      copy-gold  -- echo the label embedded in the prompt as ``[gold=N]``.
      malformed  -- with probability ``rate`` (digest-derived) emit
                    non-numeric text, otherwise behave like ``digest``.
    """

    kind: str
    value: int = 0
    rate: float = 1.0

    _KINDS = ("fixed", "digest", "copy-gold", "malformed")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown mock profile kind {self.kind!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError("rate must be in [0, 1]")


_GOLD_MARKER_RE = re.compile(r"\[gold=(-?\d+)\]")
_MALFORMED_TEXT = "I am unable to give a numeric relevance grade for this passage."


def _mock_digest(seed: int, prompt: str) -> bytes:
    return hashlib.sha256(f"{seed}\x1f{prompt}".encode("utf-8")).digest()


def mock_complete(seed: int, profile: MockProfile, prompt: str) -> RawCompletion:
    """Deterministic completion: a pure function of (seed, profile, prompt)."""
    digest = _mock_digest(seed, prompt)
    if profile.kind == "fixed":
        text = str(profile.value)
    elif profile.kind == "digest":
        text = str(digest[0] % 4)
    elif profile.kind == "copy-gold":
        match = _GOLD_MARKER_RE.search(prompt)
        text = match.group(1) if match else "no gold marker present"
    else:  # malformed
        draw = (digest[1] * 256 + digest[2]) / 65536.0
        text = _MALFORMED_TEXT if draw < profile.rate else str(digest[0] % 4)
    return RawCompletion(text=text, latency=0.0, from_cache=False)


def parse_mock_url(base_url: str) -> tuple[int, MockProfile]:
    """Decode a ``mock:`` base URL into (seed, profile).

    Examples: ``mock:fixed?value=2``, ``mock:digest?seed=11``,
    ``mock:copy-gold``, ``mock:malformed?rate=0.3&seed=5``.
    """
    parsed = urlparse(base_url)
    if parsed.scheme != "mock":
        raise ValueError(f"not a mock URL: {base_url!r}")
    kind = parsed.path
    params = {k: v[-1] for k, v in parse_qs(parsed.query).items()}
    seed = int(params.get("seed", 0))
    profile = MockProfile(
        kind=kind,
        value=int(params.get("value", 0)),
        rate=float(params.get("rate", 1.0)),
    )
    return seed, profile


# ---------------------------------------------------------------------------
# HTTP transport and completion with retry

# A transport takes (url, payload, headers, timeout) and returns
# (status_code, body_text). Tests inject fakes; the default speaks HTTP.
Transport = Callable[[str, dict, dict, float], tuple[int, str]]


def http_transport(url: str, payload: dict, headers: dict, timeout: float) -> tuple[int, str]:
    try:
        response = requests.post(url, json=payload, headers=headers, timeout=timeout)
    except requests.RequestException as exc:
        raise TransportError(f"request to {url} failed: {exc}") from exc
    return response.status_code, response.text


def _completion_url(endpoint: JudgeEndpoint) -> str:
    return endpoint.base_url.rstrip("/") + endpoint.completions_path


def _request_payload(endpoint: JudgeEndpoint, prompt: str) -> dict:
    return {
        "model": endpoint.model_name,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": endpoint.temperature,
        "max_tokens": endpoint.max_tokens,
    }


def _request_headers(endpoint: JudgeEndpoint) -> dict:
    headers = {"Content-Type": "application/json"}
    if endpoint.auth_token_env:
        token = os.environ.get(endpoint.auth_token_env)
        if not token:
            raise ProviderAuthError(
                f"environment variable {endpoint.auth_token_env!r} is not set"
            )
        headers["Authorization"] = f"Bearer {token}"
    return headers


def _extract_text(body: str) -> str:
    try:
        data = json.loads(body)
        choice = data["choices"][0]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise ProviderProtocolError(f"malformed completion body: {body[:200]!r}") from exc
    message = choice.get("message")
    if isinstance(message, dict) and isinstance(message.get("content"), str):
        return message["content"]
    if isinstance(choice.get("text"), str):
        return choice["text"]
    raise ProviderProtocolError(f"no generated text in first choice: {body[:200]!r}")


def complete(
    endpoint: JudgeEndpoint,
    prompt: str,
    *,
    retry: RetryPolicy | None = None,
    transport: Transport | None = None,
    sleep: Callable[[float], None] = time.sleep,
    rng: random.Random | None = None,
) -> RawCompletion:
    """One completion call, retrying transient failures per ``retry``.

    Transport errors and HTTP 429/5xx are retried with backoff; auth
    failures and other 4xx are surfaced immediately. After the last
    attempt a :class:`ProviderUnavailableError` chains the final cause.
    """
    if not prompt:
        raise ValueError("prompt must be non-empty")
    if endpoint.is_mock:
        seed, profile = parse_mock_url(endpoint.base_url)
        return mock_complete(seed, profile, prompt)
    retry = retry or RetryPolicy()
    transport = transport or http_transport
    rng = rng or random.Random()
    url = _completion_url(endpoint)
    payload = _request_payload(endpoint, prompt)
    headers = _request_headers(endpoint)
    last_error: Exception | None = None
    for attempt in range(1, retry.max_attempts + 1):
        started = time.monotonic()
        try:
            status, body = transport(url, payload, headers, endpoint.timeout)
        except TransportError as exc:
            last_error = exc
        else:
            if status == 200:
                return RawCompletion(
                    text=_extract_text(body),
                    latency=time.monotonic() - started,
                    from_cache=False,
                )
            if status in (401, 403):
                raise ProviderAuthError(f"{endpoint.endpoint_id}: HTTP {status}")
            if status == 429 or status >= 500:
                last_error = TransportError(f"HTTP {status} from {url}")
            else:
                raise ProviderRequestError(
                    f"{endpoint.endpoint_id}: HTTP {status}: {body[:200]}"
                )
        if attempt < retry.max_attempts:
            delay = retry.delay(attempt, rng)
            logger.debug("retrying %s (attempt %d) in %.2fs", url, attempt + 1, delay)
            sleep(delay)
    raise ProviderUnavailableError(
        f"{endpoint.endpoint_id}: no response after {retry.max_attempts} attempts"
    ) from last_error


# ---------------------------------------------------------------------------
# Response cache

def cache_key(endpoint: JudgeEndpoint, prompt: str) -> str:
    """Digest of (model, decoding parameters, full prompt text).

    Keyed on the prompt rather than the (query, doc) pair so that prompt
    edits invalidate stale judgments.
    """
    material = json.dumps(
        {
            "model": endpoint.model_name,
            "temperature": endpoint.temperature,
            "max_tokens": endpoint.max_tokens,
            "prompt": prompt,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


class ResponseCache:
    """Append-only JSONL store of completions with an in-memory index.

    Each line is ``{key, model, prompt_digest, text, created_at}``. Writes
    are serialized internally; reads are lock-free dict lookups. Partial
    trailing lines (from a crash) are skipped with a warning.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._index: dict[str, str] = {}
        self._lock = threading.Lock()
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        try:
            raw = self.path.read_text(encoding="utf-8")
        except OSError as exc:
            raise CacheIOError(f"cannot read cache {self.path}: {exc}") from exc
        for line_no, line in enumerate(raw.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
                self._index[entry["key"]] = entry["text"]
            except (ValueError, KeyError, TypeError):
                logger.warning("skipping unreadable cache line %d in %s", line_no, self.path)

    def __len__(self) -> int:
        return len(self._index)

    def get(self, key: str) -> str | None:
        return self._index.get(key)

    def put(self, key: str, model: str, prompt: str, text: str) -> None:
        entry = {
            "key": key,
            "model": model,
            "prompt_digest": hashlib.sha256(prompt.encode("utf-8")).hexdigest(),
            "text": text,
            "created_at": datetime.now(timezone.utc).isoformat(),
        }
        line = json.dumps(entry, sort_keys=True, ensure_ascii=False) + "\n"
        with self._lock:
            try:
                with open(self.path, "a", encoding="utf-8") as handle:
                    handle.write(line)
            except OSError as exc:
                raise CacheIOError(f"cannot write cache {self.path}: {exc}") from exc
            self._index[key] = text


def cached_complete(
    cache: ResponseCache,
    endpoint: JudgeEndpoint,
    prompt: str,
    **complete_kwargs,
) -> RawCompletion:
    """Cache-through completion: hits return stored text with
    ``from_cache=True`` and make no backend call."""
    key = cache_key(endpoint, prompt)
    hit = cache.get(key)
    if hit is not None:
        return RawCompletion(text=hit, latency=0.0, from_cache=True)
    result = complete(endpoint, prompt, **complete_kwargs)
    cache.put(key, endpoint.model_name, prompt, result.text)
    return result


@dataclass
class CompletionClient:
    """Shared completion plumbing for batch judging.

    Bundles an optional cache, an injectable transport, and a retry
    policy, and counts backend calls versus cache hits (the counters back
    the instrumented-call-count contracts in the test suite).
    """

    cache: ResponseCache | None = None
    transport: Transport | None = None
    retry: RetryPolicy | None = None
    sleep: Callable[[float], None] = time.sleep
    backend_calls: int = 0
    cache_hits: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def complete(self, endpoint: JudgeEndpoint, prompt: str) -> RawCompletion:
        kwargs = {"retry": self.retry, "transport": self.transport, "sleep": self.sleep}
        if self.cache is not None:
            result = cached_complete(self.cache, endpoint, prompt, **kwargs)
        else:
            result = complete(endpoint, prompt, **kwargs)
        with self._lock:
            if result.from_cache:
                self.cache_hits += 1
            else:
                self.backend_calls += 1
        return result
