"""Uniform client over rating-model backends.

One chat-completions wire shape (JSON over HTTP, base64 data-URL images)
covers both local quantized model servers and hosted APIs; a scriptable mock
stands in for tests and dry runs. Transient failures (connection errors,
HTTP 5xx, 429) are retried with exponential backoff and jitter; other 4xx
responses are permanent. Credentials come only from an environment variable
named in the config and never appear in logs or run records.
"""

from __future__ import annotations

import base64
import io
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np
import requests
from PIL import Image

from .prompts import RenderedPrompt

BACKOFF_BASE_S = 1.0
BACKOFF_FACTOR = 2.0
BACKOFF_JITTER = 0.2


class GatewayError(Exception):
    pass


class TransientBackendError(GatewayError):
    """Worth retrying: network failure, HTTP 5xx, or 429."""


class PermanentBackendError(GatewayError):
    """Not retried: client errors other than 429, malformed responses."""


class RetriesExhaustedError(GatewayError):
    def __init__(self, attempts: int, last: Exception):
        super().__init__(f"transport error after {attempts} attempts: {last}")
        self.attempts = attempts
        self.last = last


@dataclass(frozen=True)
class BackendConfig:
    kind: str  # http_chat | mock
    model_tag: str
    endpoint: str = ""
    temperature: float = 0.0
    max_output_tokens: int = 256
    timeout_s: float = 60.0
    max_retries: int = 3
    max_parallel: int = 1
    credentials_env: str = ""
    options: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("http_chat", "mock"):
            raise ValueError(f"backend kind must be http_chat or mock, got {self.kind!r}")
        if self.kind == "http_chat" and (not self.endpoint or not self.model_tag):
            raise ValueError("http_chat backend requires endpoint and model_tag")
        if not (self.temperature >= 0 and self.temperature == self.temperature):
            raise ValueError(f"temperature must be finite and >= 0, got {self.temperature}")
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass(frozen=True, eq=False)
class VlmRequest:
    prompt: RenderedPrompt
    images: tuple[np.ndarray, ...]
    config: BackendConfig
    tag: str = ""  # e.g. "<instance_id>:<robot_id>"; used only by the mock

    def __post_init__(self):
        if len(self.images) != self.prompt.image_slots:
            raise ValueError(
                f"prompt declares {self.prompt.image_slots} image slot(s), got {len(self.images)} image(s)"
            )


@dataclass(frozen=True)
class VlmResponse:
    raw_text: str
    latency_ms: float
    attempt_count: int
    metadata: Mapping[str, Any] = field(default_factory=dict)


def encode_image_data_url(image: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")


def build_chat_payload(request: VlmRequest, temperature: float | None = None) -> dict:
    """Chat-completions JSON body; images attach to the first user turn."""
    config = request.config
    messages = []
    images_attached = False
    for role, text in request.prompt.turns:
        content: Any = [{"type": "text", "text": text}]
        if role == "user" and not images_attached:
            for image in request.images:
                content.append({"type": "image_url", "image_url": {"url": encode_image_data_url(image)}})
            images_attached = True
        messages.append({"role": role, "content": content})
    return {
        "model": config.model_tag,
        "temperature": config.temperature if temperature is None else temperature,
        "max_tokens": config.max_output_tokens,
        "messages": messages,
    }


def backoff_delay_s(attempt: int, rng: random.Random) -> float:
    """Delay before retry number `attempt` (1-based): 1 s base, doubling,
    jittered by +-20%."""
    return BACKOFF_BASE_S * (BACKOFF_FACTOR ** (attempt - 1)) * rng.uniform(1 - BACKOFF_JITTER, 1 + BACKOFF_JITTER)


class HttpChatBackend:
    """Single-attempt POST against a chat-completions style endpoint."""

    def __init__(self, config: BackendConfig, session: requests.Session | None = None):
        self.config = config
        self.session = session or requests.Session()

    def attempt(self, request: VlmRequest) -> tuple[str, Mapping[str, Any]]:
        headers = {"Content-Type": "application/json"}
        if self.config.credentials_env:
            secret = os.environ.get(self.config.credentials_env, "")
            if secret:
                headers["Authorization"] = f"Bearer {secret}"
        try:
            resp = self.session.post(
                self.config.endpoint,
                json=build_chat_payload(request),
                headers=headers,
                timeout=self.config.timeout_s,
            )
        except requests.RequestException as exc:
            raise TransientBackendError(f"network error: {type(exc).__name__}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientBackendError(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise PermanentBackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise PermanentBackendError(f"malformed response body: {exc}") from exc
        if not isinstance(text, str):
            raise PermanentBackendError(f"response content is not text: {type(text).__name__}")
        metadata = {}
        if isinstance(body, dict) and isinstance(body.get("usage"), dict):
            metadata["usage"] = body["usage"]
        return text, metadata


@dataclass
class MockRule:
    """Scripted behavior for requests matching by index or substring.

    `match` is an int request index, or a string matched against the request
    tag and the full prompt text (expected keys appear in the prompt, so a
    key substring targets its instance). fail_times forces that many
    transient failures before success; always_fail never succeeds.
    """

    match: int | str
    text: str = ""
    fail_times: int = 0
    always_fail: bool = False
    permanent: bool = False


class MockBackend:
    """Deterministic scripted backend with concurrency instrumentation."""

    def __init__(self, rules: Sequence[MockRule] = (), default_text: str = "", hold_s: float = 0.0):
        self.rules = list(rules)
        self.default_text = default_text
        self.hold_s = hold_s
        self._lock = threading.Lock()
        self._counter = 0
        self._inflight = 0
        self.max_inflight_seen = 0
        self._failures_left: dict[int, int] = {
            i: rule.fail_times for i, rule in enumerate(self.rules) if rule.fail_times > 0
        }

    def _find_rule(self, index: int, request: VlmRequest) -> tuple[int, MockRule] | None:
        prompt_text = request.prompt.text()
        for i, rule in enumerate(self.rules):
            if isinstance(rule.match, int):
                if rule.match == index:
                    return i, rule
            elif rule.match in request.tag or rule.match in prompt_text:
                return i, rule
        return None

    def attempt(self, request: VlmRequest) -> tuple[str, Mapping[str, Any]]:
        with self._lock:
            index = self._counter
            self._counter += 1
            self._inflight += 1
            self.max_inflight_seen = max(self.max_inflight_seen, self._inflight)
        try:
            if self.hold_s:
                time.sleep(self.hold_s)
            found = self._find_rule(index, request)
            if found is None:
                return self.default_text, {"mock_index": index}
            rule_idx, rule = found
            if rule.always_fail:
                if rule.permanent:
                    raise PermanentBackendError("mock: scripted permanent failure")
                raise TransientBackendError("mock: scripted failure")
            with self._lock:
                left = self._failures_left.get(rule_idx, 0)
                if left > 0:
                    self._failures_left[rule_idx] = left - 1
                    raise TransientBackendError(f"mock: scripted failure ({left} left)")
            return rule.text, {"mock_index": index}
        finally:
            with self._lock:
                self._inflight -= 1


def make_backend(config: BackendConfig):
    if config.kind == "mock":
        return mock_backend_from_options(config.options)
    return HttpChatBackend(config)


def mock_backend_from_options(options: Mapping[str, Any]) -> MockBackend:
    """Build a MockBackend from run-config options.

    by_index: {"<request index>": raw text}, matched first. ratings:
    {"<tag substring>": 1..4} answered as {"<key>": value} where the key is
    the instance id part of the tag. answers: {"<tag substring>": raw text}
    returned verbatim (e.g. multi-key dictionaries for full-image queries).
    unparseable: list of tag substrings answered with free prose (parse
    failure by construction).
    """
    rules = []
    for index, text in dict(options.get("by_index", {})).items():
        rules.append(MockRule(match=int(index), text=str(text)))
    for tag, rating in dict(options.get("ratings", {})).items():
        key = tag.split(":", 1)[0]
        rules.append(MockRule(match=tag, text='{"%s": %d}' % (key, int(rating))))
    for tag, text in dict(options.get("answers", {})).items():
        rules.append(MockRule(match=tag, text=str(text)))
    for tag in options.get("unparseable", []):
        rules.append(MockRule(match=tag, text="The water looks shallow enough to simply drive through it."))
    default = options.get("default_text", "")
    return MockBackend(rules=rules, default_text=default, hold_s=float(options.get("hold_s", 0.0)))


class VlmGateway:
    """Retrying, rate-bounded front over one backend."""

    def __init__(
        self,
        config: BackendConfig,
        backend=None,
        sleeper: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ):
        self.config = config
        self.backend = backend if backend is not None else make_backend(config)
        self.sleeper = sleeper
        self.rng = rng or random.Random()

    def send(self, request: VlmRequest) -> VlmResponse:
        """First successful response; transient failures retried with backoff
        up to config.max_retries. Raw text is returned verbatim."""
        start = time.monotonic()
        attempts = self.config.max_retries + 1
        last: Exception | None = None
        for attempt in range(1, attempts + 1):
            try:
                text, metadata = self.backend.attempt(request)
            except TransientBackendError as exc:
                last = exc
                if attempt < attempts:
                    self.sleeper(backoff_delay_s(attempt, self.rng))
                continue
            latency_ms = (time.monotonic() - start) * 1000.0
            return VlmResponse(raw_text=text, latency_ms=latency_ms, attempt_count=attempt, metadata=metadata)
        raise RetriesExhaustedError(attempts, last if last is not None else GatewayError("unknown"))

    def send_batch(self, requests_list: Sequence[VlmRequest]) -> list[VlmResponse | GatewayError]:
        """Order-preserving batch send with at most max_parallel in flight.

        Per-item failures are embedded in the result list, never raised, and
        never cancel other items.
        """
        if not requests_list:
            raise ValueError("send_batch needs a non-empty request list")

        def one(req: VlmRequest) -> VlmResponse | GatewayError:
            try:
                return self.send(req)
            except GatewayError as exc:
                return exc

        if self.config.max_parallel == 1 or len(requests_list) == 1:
            return [one(req) for req in requests_list]
        with ThreadPoolExecutor(max_workers=self.config.max_parallel) as pool:
            return list(pool.map(one, requests_list))
