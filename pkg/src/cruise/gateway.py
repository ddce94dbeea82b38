"""Prompt templating and uniform clients for chat-completion backends.

Three prompt kinds exist (match, generate, assess), shipped as text
assets. Backends expose a single ``complete(prompt)`` operation; the
HTTP client speaks the local-model chat protocol, while mock and
fixture backends answer deterministically for tests and offline runs.
"""

from __future__ import annotations

import hashlib
import json
import re
import string
import threading
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import requests

PROMPT_PLACEHOLDERS: dict[str, tuple[str, ...]] = {
    "match": ("domain_description", "user_story", "issue"),
    "generate": ("issue", "user_story"),
    "assess": ("user_story", "acceptance_criteria", "new_criterion", "issue"),
}

# Characters stripped from reply edges before token comparison. Covers
# ASCII punctuation plus the curly quotes and dashes chat models emit.
_EDGE_CHARS = string.whitespace + string.punctuation + "“”‘’–—•"

_LABEL_RE = re.compile(r"\b(irrelevant|relevant)\b", re.IGNORECASE)


class PromptValidationError(ValueError):
    pass


class BackendUnavailable(RuntimeError):
    def __init__(self, backend: str, detail: str):
        super().__init__(f"backend {backend!r} unavailable: {detail}")
        self.backend = backend
        self.detail = detail


class FixtureMissing(BackendUnavailable):
    pass


@dataclass(frozen=True)
class PromptInstance:
    kind: str
    rendered: str
    placeholders: Mapping[str, str]


@dataclass(frozen=True)
class BackendReply:
    backend: str
    raw: str  # verbatim reply, recorded before any normalization
    latency_ms: int
    attempt: int


@dataclass(frozen=True)
class BackendConfig:
    name: str
    endpoint: str = ""
    temperature: float = 0.0
    max_inflight: int = 1
    timeout_s: int = 60
    retry_limit: int = 2

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("backend name must be non-empty")
        if self.max_inflight < 1:
            raise ValueError("max_inflight must be at least 1")
        if self.timeout_s < 1:
            raise ValueError("timeout_s must be at least 1")
        if self.retry_limit < 0:
            raise ValueError("retry_limit must not be negative")


def _load_template(kind: str) -> str:
    return resources.files("cruise").joinpath(f"prompts/{kind}.txt").read_text("utf-8")


def render_prompt(kind: str, placeholders: Mapping[str, str]) -> PromptInstance:
    """Fill the template for ``kind``; every mandatory placeholder must be
    present and non-blank (the acceptance_criteria value may be "none")."""
    if kind not in PROMPT_PLACEHOLDERS:
        raise PromptValidationError(f"unknown prompt kind {kind!r}")
    values: dict[str, str] = {}
    for name in PROMPT_PLACEHOLDERS[kind]:
        value = placeholders.get(name)
        if value is None or not value.strip():
            raise PromptValidationError(f"prompt kind {kind!r} requires placeholder {name!r}")
        values[name] = value
    rendered = _load_template(kind).format(**values).rstrip("\n")
    return PromptInstance(kind=kind, rendered=rendered, placeholders=dict(values))


def append_instruction(prompt: PromptInstance, sentence: str) -> PromptInstance:
    """Derive the re-ask variant of a prompt by appending one sentence."""
    return PromptInstance(
        kind=prompt.kind,
        rendered=f"{prompt.rendered}\n{sentence}",
        placeholders=prompt.placeholders,
    )


def parse_binary(raw: str) -> str:
    """Normalize a reply to "yes", "no", or "unparseable".

    Whitespace, punctuation and quote characters are stripped from both
    ends and the rest lowercased; anything but a bare yes/no token is
    unparseable, and the caller decides what that means.
    """
    token = raw.strip(_EDGE_CHARS).lower()
    return token if token in ("yes", "no") else "unparseable"


def parse_label(raw: str) -> tuple[str, str]:
    """Extract the relevance label and the explanation around it.

    The first whole-word "relevant"/"irrelevant" decides; the remaining
    text, with separator characters trimmed, is the explanation.
    """
    found = _LABEL_RE.search(raw)
    if found is None:
        return "unparseable", raw.strip()
    label = found.group(1).lower()
    remainder = (raw[: found.start()] + " " + raw[found.end():]).strip(_EDGE_CHARS)
    return label, remainder


class ChatBackend(Protocol):
    name: str

    def complete(self, prompt: PromptInstance) -> BackendReply: ...


def chat_payload(model: str, prompt: PromptInstance, temperature: float) -> dict:
    """Wire payload for the chat endpoint; tests compare this byte-wise."""
    return {
        "model": model,
        "messages": [{"role": "user", "content": prompt.rendered}],
        "options": {"temperature": temperature},
        "stream": False,
    }


class HttpChatBackend:
    """Client for a chat-completion server at POST {endpoint}/api/chat."""

    def __init__(
        self,
        config: BackendConfig,
        *,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not config.endpoint:
            raise ValueError(f"backend {config.name!r} needs an endpoint URL")
        self.name = config.name
        self.config = config
        self._session = session or requests.Session()
        self._sleep = sleep
        self._inflight = threading.BoundedSemaphore(config.max_inflight)

    def complete(self, prompt: PromptInstance) -> BackendReply:
        url = self.config.endpoint.rstrip("/") + "/api/chat"
        payload = chat_payload(self.name, prompt, self.config.temperature)
        attempts = self.config.retry_limit + 1
        last_error = "no attempt made"
        for attempt in range(1, attempts + 1):
            started = time.monotonic()
            try:
                with self._inflight:
                    response = self._session.post(url, json=payload, timeout=self.config.timeout_s)
            except requests.RequestException as exc:
                last_error = f"transport error: {exc}"
            else:
                if response.status_code == 429 or response.status_code >= 500:
                    last_error = f"HTTP {response.status_code}: {response.text[:500]}"
                elif response.status_code >= 400:
                    raise BackendUnavailable(
                        self.name, f"HTTP {response.status_code}: {response.text[:500]}"
                    )
                else:
                    try:
                        content = response.json()["message"]["content"]
                    except (ValueError, KeyError, TypeError) as exc:
                        raise BackendUnavailable(
                            self.name, f"malformed chat response: {exc}"
                        ) from exc
                    latency_ms = int((time.monotonic() - started) * 1000)
                    return BackendReply(self.name, content, latency_ms, attempt)
            if attempt < attempts:
                self._sleep(min(2.0 ** (attempt - 1), 60.0))
        raise BackendUnavailable(self.name, last_error)


@dataclass(frozen=True)
class MockRule:
    contains: str
    reply: str


class MockChatBackend:
    """Deterministic backend driven by an ordered substring rule table.

    The first rule whose ``contains`` text occurs in the rendered prompt
    wins; otherwise ``default_reply``. ``calls`` counts completions so
    tests can assert idempotence.
    """

    def __init__(self, name: str, rules: Sequence[MockRule] = (), default_reply: str = "no"):
        self.name = name
        self.rules = tuple(rules)
        self.default_reply = default_reply
        self.calls = 0

    def complete(self, prompt: PromptInstance) -> BackendReply:
        self.calls += 1
        reply = self.default_reply
        for rule in self.rules:
            if rule.contains in prompt.rendered:
                reply = rule.reply
                break
        return BackendReply(self.name, reply, 0, 1)


def transcript_digest(backend_name: str, rendered: str) -> str:
    return hashlib.sha256(f"{backend_name}\n{rendered}".encode("utf-8")).hexdigest()


def transcript_path(directory: Path, backend_name: str, rendered: str) -> Path:
    return directory / f"{transcript_digest(backend_name, rendered)[:32]}.json"


class FixtureChatBackend:
    """Replays recorded transcripts keyed by hash(backend, prompt)."""

    def __init__(self, name: str, directory: str | Path):
        self.name = name
        self.directory = Path(directory)
        self.calls = 0

    def complete(self, prompt: PromptInstance) -> BackendReply:
        self.calls += 1
        path = transcript_path(self.directory, self.name, prompt.rendered)
        if not path.exists():
            raise FixtureMissing(
                self.name,
                f"no transcript {path.name} for kind={prompt.kind} "
                f"(set CRUISE_LLM_RECORD=1 with a live endpoint to record)",
            )
        data = json.loads(path.read_text("utf-8"))
        return BackendReply(self.name, data["raw"], 0, 1)


class RecordingChatBackend:
    """Wraps a live backend and writes fixture transcripts as it goes."""

    def __init__(self, inner: ChatBackend, directory: str | Path):
        self.inner = inner
        self.name = inner.name
        self.directory = Path(directory)

    def complete(self, prompt: PromptInstance) -> BackendReply:
        reply = self.inner.complete(prompt)
        self.directory.mkdir(parents=True, exist_ok=True)
        path = transcript_path(self.directory, self.name, prompt.rendered)
        record = {
            "backend": self.name,
            "kind": prompt.kind,
            "prompt_sha256": transcript_digest(self.name, prompt.rendered),
            "raw": reply.raw,
        }
        path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", "utf-8")
        return reply
