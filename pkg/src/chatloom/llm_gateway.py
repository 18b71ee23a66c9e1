"""Chat-completion access with retries, rate limiting, and a mock backend.

The gateway sends one user-role message containing the whole rendered
prompt, retries transient failures with exponential backoff, limits the
client-side request rate with a token bucket, and runs batches with a
bounded worker pool that preserves submission order. Every request is
appended to a JSON-lines audit log.

The mock backend makes the whole pipeline runnable offline: it replays
pinned fixture texts by prompt fingerprint and otherwise synthesizes a
small valid dialogue deterministically from the fingerprint alone.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

MAX_ATTEMPTS = 5
BACKOFF_BASE_S = 1.0
BACKOFF_FACTOR = 2.0


class GatewayError(Exception):
    pass


class TransientBackendError(GatewayError):
    """Retryable condition: timeouts, connection resets, 429s, 5xx."""


class TransportError(GatewayError):
    """All retry attempts exhausted."""


class ProviderRejected(GatewayError):
    """The provider refused the request (content filter, policy)."""

    def __init__(self, message: str, payload: object = None):
        super().__init__(message)
        self.payload = payload


class PromptTooLong(GatewayError):
    pass


@dataclass(frozen=True)
class BackendDescriptor:
    endpoint: str = ""
    model: str = "mock"
    credential_env: str = ""


@dataclass(frozen=True)
class GenerationConfig:
    top_p: float = 1.0
    temperature: float = 1.0
    max_output_tokens: int = 2048
    backend: BackendDescriptor = field(default_factory=BackendDescriptor)

    def __post_init__(self):
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.temperature < 0.0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")


@dataclass(frozen=True)
class BackendReply:
    text: str
    truncated: bool = False
    model: str = ""
    prompt_tokens: int = 0
    completion_tokens: int = 0


@dataclass(frozen=True)
class RawTranscript:
    text: str
    prompt_fingerprint: str
    model: str = ""
    latency_s: float = 0.0
    prompt_tokens: int = 0
    completion_tokens: int = 0
    truncated: bool = False
    attempts: int = 1


def prompt_fingerprint(prompt_text: str) -> str:
    return hashlib.sha256(prompt_text.encode("utf-8")).hexdigest()


class ChatBackend(Protocol):
    def complete(self, prompt_text: str, config: GenerationConfig) -> BackendReply: ...


class HttpChatBackend:
    """Chat-completions endpoint speaking the common JSON wire format."""

    def __init__(self, descriptor: BackendDescriptor, timeout_s: float = 120.0):
        if not descriptor.endpoint:
            raise ValueError("HTTP backend requires an endpoint URL")
        self.descriptor = descriptor
        self.timeout_s = timeout_s

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.descriptor.credential_env:
            import os

            token = os.environ.get(self.descriptor.credential_env, "")
            if not token:
                raise GatewayError(
                    f"credential env var {self.descriptor.credential_env} is not set"
                )
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def complete(self, prompt_text: str, config: GenerationConfig) -> BackendReply:
        import requests

        payload = {
            "model": self.descriptor.model,
            "messages": [{"role": "user", "content": prompt_text}],
            "top_p": config.top_p,
            "temperature": config.temperature,
            "max_tokens": config.max_output_tokens,
        }
        try:
            response = requests.post(
                self.descriptor.endpoint,
                json=payload,
                headers=self._headers(),
                timeout=self.timeout_s,
            )
        except requests.RequestException as exc:
            raise TransientBackendError(str(exc)) from exc
        if response.status_code == 429 or response.status_code >= 500:
            raise TransientBackendError(f"HTTP {response.status_code}")
        body = response.json()
        if response.status_code == 400:
            message = str(body.get("error", {}).get("message", body))
            if "context length" in message or "maximum context" in message or "too long" in message:
                raise PromptTooLong(message)
            raise ProviderRejected(message, payload=body)
        if response.status_code != 200:
            raise ProviderRejected(f"HTTP {response.status_code}", payload=body)
        choice = body["choices"][0]
        finish = choice.get("finish_reason", "stop")
        if finish == "content_filter":
            raise ProviderRejected("completion blocked by content filter", payload=body)
        usage = body.get("usage", {})
        return BackendReply(
            text=choice["message"]["content"],
            truncated=finish == "length",
            model=body.get("model", self.descriptor.model),
            prompt_tokens=usage.get("prompt_tokens", 0),
            completion_tokens=usage.get("completion_tokens", 0),
        )


IMAGE_LIST_MARKER = "must and can only contain the following input images:"

MOCK_DEFECTS = (
    "drift",
    "unknown_image",
    "duplicate_image",
    "too_many_turns",
    "starts_with_assistant",
    "truncated",
)

_OPENERS = (
    "Hi! I keep thinking about {0}. What makes it interesting?",
    "Hello, I came across {0} recently. Could you tell me more?",
    "I am planning a small exhibit around {0}. Where should I start?",
    "My friend mentioned {0} yesterday. Why do people care about it?",
)
_FOLLOWUPS = (
    "That helps. Could you show me a picture that fits here?",
    "Interesting. Do you have an image that goes with this?",
    "Nice. What would a matching picture look like?",
    "Good point. Can you illustrate that with one of the images?",
)
_CLOSERS = (
    "Thanks, this gives me plenty to work with.",
    "Great, that answers my question.",
    "Perfect, exactly what I needed.",
)
_FACTS = (
    "People often connect it with everyday life in surprising ways.",
    "Collectors and historians both find it worth a closer look.",
    "It tends to spark conversations about how things are made.",
    "There is a long story behind how it became popular.",
)


class MockChatBackend:
    """Deterministic stand-in for a hosted model.

    Fixture texts are returned byte-for-byte when the prompt fingerprint
    matches. Otherwise a small dialogue is synthesized from the image list
    embedded in the prompt, seeded by the fingerprint, so equal prompts
    always produce equal replies. A named defect can be injected into a
    deterministic fraction of synthesized replies to exercise the filters.
    """

    def __init__(
        self,
        fixtures: dict[str, str] | None = None,
        defect: str | None = None,
        defect_rate: float = 1.0,
        seed_salt: int = 0,
        latency_s: float = 0.0,
        model: str = "mock",
    ):
        if defect is not None and defect not in MOCK_DEFECTS:
            raise ValueError(f"unknown mock defect: {defect}")
        self.fixtures = dict(fixtures or {})
        self.defect = defect
        self.defect_rate = defect_rate
        self.seed_salt = seed_salt
        self.latency_s = latency_s
        self.model = model

    def add_fixture(self, fingerprint: str, text: str) -> None:
        self.fixtures[fingerprint] = text

    def complete(self, prompt_text: str, config: GenerationConfig) -> BackendReply:
        if self.latency_s:
            time.sleep(self.latency_s)
        fingerprint = prompt_fingerprint(prompt_text)
        if fingerprint in self.fixtures:
            return BackendReply(text=self.fixtures[fingerprint], model=self.model)
        rng = np.random.default_rng(
            int.from_bytes(hashlib.sha256(f"{self.seed_salt}:{fingerprint}".encode()).digest()[:8], "big")
        )
        captions = self._prompt_captions(prompt_text)
        apply_defect = self.defect is not None and rng.random() < self.defect_rate
        text = self._synthesize(captions, rng, self.defect if apply_defect else None)
        truncated = apply_defect and self.defect == "truncated"
        return BackendReply(text=text, truncated=truncated, model=self.model)

    @staticmethod
    def _prompt_captions(prompt_text: str) -> list[str]:
        from .convparse import extract_image_tags

        marker_at = prompt_text.find(IMAGE_LIST_MARKER)
        if marker_at < 0:
            return ["something curious"]
        block = prompt_text[marker_at + len(IMAGE_LIST_MARKER) :]
        lines = []
        for line in block.splitlines()[1:]:
            if not line.strip():
                break
            lines.append(line)
        extraction = extract_image_tags("\n".join(lines))
        ordered = sorted(extraction.tags, key=lambda t: t.index)
        return [t.description for t in ordered] or ["something curious"]

    def _synthesize(self, captions: list[str], rng: np.random.Generator, defect: str | None) -> str:
        from .promptkit import render_image_tag

        tags = [render_image_tag(i, c, validate=False) for i, c in enumerate(captions)]
        if defect == "drift":
            drifted = captions[0].upper()
            if drifted == captions[0]:
                drifted = captions[0] + " and then some entirely different thing"
            tags[0] = render_image_tag(0, drifted, validate=False)
        lines = [
            f"Human: {rng.choice(_OPENERS).format(captions[0])}",
            f"Assistant: {rng.choice(_FACTS)} Here is a fitting image. {tags[0]}",
        ]
        in_instruction = rng.random() < 0.25
        for i in range(1, len(captions)):
            if in_instruction and i == 1:
                lines.append(f"Human: I also have this one. {tags[i]} How does it relate?")
                lines.append(f"Assistant: {rng.choice(_FACTS)}")
            else:
                lines.append(f"Human: {rng.choice(_FOLLOWUPS)}")
                lines.append(f"Assistant: Certainly, take a look. {tags[i]}")
        if defect == "unknown_image":
            ghost = render_image_tag(len(captions), "an image that was never provided", validate=False)
            lines.append("Human: Anything else?")
            lines.append(f"Assistant: One more for good measure. {ghost}")
        elif defect == "duplicate_image":
            lines.append("Human: Could you show the first one again?")
            lines.append(f"Assistant: Here it is once more. {tags[0]}")
        elif defect == "too_many_turns":
            while len(lines) < 12:
                lines.append(f"Human: {rng.choice(_FOLLOWUPS)}")
                lines.append(f"Assistant: {rng.choice(_FACTS)}")
        else:
            if rng.random() < 0.6 and len(lines) < 10:
                lines.append(f"Human: {rng.choice(_CLOSERS)} Anything I should remember?")
                lines.append(f"Assistant: {rng.choice(_FACTS)}")
        if defect == "starts_with_assistant":
            lines.insert(0, "Assistant: Hello! How can I help you today?")
        if defect == "truncated":
            lines[-1] = lines[-1][: max(12, len(lines[-1]) // 2)]
        return "\n".join(lines)


class TokenBucket:
    """Client-side requests-per-minute limiter. rpm = 0 disables limiting."""

    def __init__(
        self,
        rpm: float,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.rpm = rpm
        self.capacity = max(rpm, 1.0)
        self.tokens = self.capacity
        self.clock = clock
        self.sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        if self.rpm <= 0:
            return
        rate = self.rpm / 60.0
        while True:
            with self._lock:
                now = self.clock()
                self.tokens = min(self.capacity, self.tokens + (now - self._last) * rate)
                self._last = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / rate
            self.sleep(wait)


def _utc_now_iso() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class LlmGateway:
    """Retry, rate-limit, log, and parallelize completions."""

    def __init__(
        self,
        backend: ChatBackend,
        config: GenerationConfig | None = None,
        rpm: float = 0.0,
        max_inflight: int = 4,
        log_path: Path | str | None = None,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.monotonic,
        timestamp: Callable[[], str] = _utc_now_iso,
    ):
        if max_inflight < 1:
            raise ValueError("max_inflight must be >= 1")
        self.backend = backend
        self.config = config or GenerationConfig()
        self.bucket = TokenBucket(rpm, clock=clock, sleep=sleep)
        self.max_inflight = max_inflight
        self.log_path = Path(log_path) if log_path is not None else None
        self._sleep = sleep
        self._clock = clock
        self._timestamp = timestamp
        self._log_lock = threading.Lock()

    def _log(self, record: dict) -> None:
        if self.log_path is None:
            return
        with self._log_lock:
            with open(self.log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    def generate(self, prompt_text: str) -> RawTranscript:
        fingerprint = prompt_fingerprint(prompt_text)
        last_error: Exception | None = None
        for attempt in range(1, MAX_ATTEMPTS + 1):
            self.bucket.acquire()
            started = self._clock()
            try:
                reply = self.backend.complete(prompt_text, self.config)
            except TransientBackendError as exc:
                last_error = exc
                self._log(
                    {
                        "at": self._timestamp(),
                        "fingerprint": fingerprint,
                        "attempt": attempt,
                        "status": "transient_error",
                        "error": str(exc),
                    }
                )
                if attempt < MAX_ATTEMPTS:
                    self._sleep(BACKOFF_BASE_S * BACKOFF_FACTOR ** (attempt - 1))
                continue
            except (ProviderRejected, PromptTooLong) as exc:
                self._log(
                    {
                        "at": self._timestamp(),
                        "fingerprint": fingerprint,
                        "attempt": attempt,
                        "status": type(exc).__name__,
                        "error": str(exc),
                    }
                )
                raise
            latency = self._clock() - started
            self._log(
                {
                    "at": self._timestamp(),
                    "fingerprint": fingerprint,
                    "attempt": attempt,
                    "status": "ok",
                    "model": reply.model,
                    "latency_s": round(latency, 6),
                    "prompt_tokens": reply.prompt_tokens,
                    "completion_tokens": reply.completion_tokens,
                    "truncated": reply.truncated,
                }
            )
            return RawTranscript(
                text=reply.text,
                prompt_fingerprint=fingerprint,
                model=reply.model,
                latency_s=latency,
                prompt_tokens=reply.prompt_tokens,
                completion_tokens=reply.completion_tokens,
                truncated=reply.truncated,
                attempts=attempt,
            )
        raise TransportError(f"all {MAX_ATTEMPTS} attempts failed: {last_error}")

    def generate_batch(self, prompt_texts: Sequence[str]) -> list[RawTranscript]:
        """Run prompts with at most max_inflight concurrent requests.

        Results come back in submission order regardless of completion
        order, so downstream processing is deterministic.
        """
        if not prompt_texts:
            return []
        with ThreadPoolExecutor(max_workers=self.max_inflight) as pool:
            return list(pool.map(self.generate, prompt_texts))
