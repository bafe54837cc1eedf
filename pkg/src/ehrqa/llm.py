"""Gateway to chat-completion backends: prompt templates, scripted mock, remote HTTP.

Backends expose one method, ``complete(request) -> ChatResponse``, plus
per-role call accounting. The scripted mock replays a rule file and is the
workhorse for all offline tests; the remote backend speaks the common
messages-in/text-out chat-completion HTTP contract.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import httpx
import yaml

from .model import digest, tokenize

ROLE_TAGS = ("table_reviewer", "sql_writer", "answer_synthesizer", "note_qa")

_PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


class GatewayError(Exception):
    """Base class for gateway failures."""


class MissingPlaceholderError(GatewayError):
    def __init__(self, template_name: str, missing: set[str]):
        self.missing = sorted(missing)
        super().__init__(f"template {template_name!r} missing bindings: {', '.join(self.missing)}")


class ScriptExhaustedError(GatewayError):
    """No scripted rule matches the request."""


class TransportError(GatewayError):
    """The remote backend could not be reached or replied malformed."""


@dataclass(frozen=True)
class ChatRequest:
    """One rendered prompt bound for a backend.

    Temperature is pinned to 0 on every pipeline path; passing a nonzero
    value requires the explicit ``experimental`` marker.
    """

    role_tag: str
    rendered_prompt: str
    temperature: float = 0.0
    max_output_tokens: int = 1024
    experimental: bool = False

    def __post_init__(self):
        if self.role_tag not in ROLE_TAGS:
            raise ValueError(f"unknown role_tag {self.role_tag!r}")
        if self.temperature != 0.0 and not self.experimental:
            raise ValueError("temperature must be 0 outside experimental mode")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int
    completion_tokens: int
    latency_ms: float
    cost: float = 0.0

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be non-negative")
        if self.latency_ms < 0:
            raise ValueError("latency_ms must be non-negative")


# ---------------------------------------------------------------------------
# prompt templates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PromptTemplate:
    name: str
    template_text: str
    required_placeholders: frozenset[str]

    @classmethod
    def from_text(cls, name: str, text: str) -> "PromptTemplate":
        found = frozenset(_PLACEHOLDER_RE.findall(text))
        return cls(name=name, template_text=text, required_placeholders=found)


def load_template(name: str) -> PromptTemplate:
    """Load a packaged prompt template by bare name (no extension)."""
    text = resources.files("ehrqa.prompts").joinpath(f"{name}.txt").read_text(encoding="utf-8")
    return PromptTemplate.from_text(name, text)


def render(template: PromptTemplate, bindings: dict[str, str]) -> str:
    """Substitute placeholders verbatim; clinical text is never escaped."""
    missing = template.required_placeholders - set(bindings)
    if missing:
        raise MissingPlaceholderError(template.name, missing)
    return _PLACEHOLDER_RE.sub(lambda m: str(bindings[m.group(1)]), template.template_text)


# SQL prompt per dataset profile; the reviewer/synthesis/note prompts are shared.
SQL_TEMPLATE_BY_PROFILE = {
    "fixture": "sql_ehrsql",
    "ehrsql": "sql_ehrsql",
    "drugehrqa": "sql_drugehrqa",
    "omop": "sql_omop",
}

PROFILES = tuple(SQL_TEMPLATE_BY_PROFILE) + ("ehrnoteqa",)


# ---------------------------------------------------------------------------
# backends
# ---------------------------------------------------------------------------

@dataclass
class ScriptRule:
    """One scripted reply, matched by (role_tag, substring-in-prompt).

    ``uses`` bounds how often the rule may fire; ``None`` means unlimited,
    which keeps repeated identical requests byte-identical. Finite budgets
    let repair-loop scripts emit different replies on successive calls.
    """

    role_tag: str
    substring_pattern: str
    reply_text: str
    latency_ms: float = 0.0
    prompt_tokens: Optional[int] = None
    completion_tokens: Optional[int] = None
    uses: Optional[int] = None

    @classmethod
    def from_dict(cls, d: dict) -> "ScriptRule":
        tokens = d.get("tokens")
        prompt_tokens = d.get("prompt_tokens")
        completion_tokens = d.get("completion_tokens")
        if isinstance(tokens, dict):
            prompt_tokens = tokens.get("prompt", prompt_tokens)
            completion_tokens = tokens.get("completion", completion_tokens)
        elif isinstance(tokens, (list, tuple)) and len(tokens) == 2:
            prompt_tokens, completion_tokens = tokens
        elif isinstance(tokens, int):
            completion_tokens = tokens
        return cls(
            role_tag=d["role_tag"],
            substring_pattern=d["substring_pattern"],
            reply_text=d["reply_text"],
            latency_ms=float(d.get("latency_ms", 0.0)),
            prompt_tokens=prompt_tokens,
            completion_tokens=completion_tokens,
            uses=d.get("uses"),
        )


class ScriptedBackend:
    """Deterministic mock backend driven by an ordered rule list.

    The first rule whose role matches and whose substring pattern occurs in
    the rendered prompt wins; rule consumption is serialized so behavior is
    stable under concurrent calls.
    """

    kind = "scripted"

    def __init__(self, rules: list[ScriptRule], cost_per_1k_tokens: float = 0.0):
        self._rules = list(rules)
        self._remaining = [r.uses for r in self._rules]
        self.cost_per_1k_tokens = cost_per_1k_tokens
        self._lock = threading.Lock()
        self._counts: dict[str, int] = {}

    @classmethod
    def from_file(cls, path: str | Path, cost_per_1k_tokens: float = 0.0) -> "ScriptedBackend":
        raw = Path(path).read_text(encoding="utf-8")
        data = yaml.safe_load(raw) if str(path).endswith((".yaml", ".yml")) else json.loads(raw)
        return cls([ScriptRule.from_dict(d) for d in data], cost_per_1k_tokens)

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            for i, rule in enumerate(self._rules):
                if rule.role_tag != request.role_tag:
                    continue
                if rule.substring_pattern not in request.rendered_prompt:
                    continue
                if self._remaining[i] is not None and self._remaining[i] <= 0:
                    continue
                if self._remaining[i] is not None:
                    self._remaining[i] -= 1
                self._counts[request.role_tag] = self._counts.get(request.role_tag, 0) + 1
                ptok = rule.prompt_tokens if rule.prompt_tokens is not None else len(tokenize(request.rendered_prompt))
                ctok = rule.completion_tokens if rule.completion_tokens is not None else len(tokenize(rule.reply_text))
                cost = (ptok + ctok) / 1000.0 * self.cost_per_1k_tokens
                return ChatResponse(rule.reply_text, ptok, ctok, rule.latency_ms, cost)
        raise ScriptExhaustedError(
            f"no scripted reply for role {request.role_tag!r} (prompt digest {digest(request.rendered_prompt)})"
        )

    def call_count(self, role_tag: str) -> int:
        with self._lock:
            return self._counts.get(role_tag, 0)

    def reset_counts(self) -> None:
        with self._lock:
            self._counts.clear()

    def reset_script(self) -> None:
        """Restore all rule budgets (counts are left alone)."""
        with self._lock:
            self._remaining = [r.uses for r in self._rules]


class RemoteBackend:
    """Chat-completion HTTP backend (messages in, text + token usage out).

    Endpoint and model name are configuration; the credential is read from
    the named environment variable at call time, never stored in config.
    """

    kind = "remote"

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str = "EHRQA_API_KEY",
        cost_per_1k_tokens: float = 0.0,
        timeout_s: float = 60.0,
        transport_retries: int = 0,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.cost_per_1k_tokens = cost_per_1k_tokens
        self.timeout_s = timeout_s
        self.transport_retries = transport_retries
        self._client = httpx.Client(transport=transport, timeout=timeout_s)
        self._lock = threading.Lock()
        self._counts: dict[str, int] = {}

    def complete(self, request: ChatRequest) -> ChatResponse:
        headers = {}
        key = os.environ.get(self.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.rendered_prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        last_error: Exception | None = None
        for _ in range(self.transport_retries + 1):
            started = time.monotonic()
            try:
                resp = self._client.post(f"{self.endpoint}/chat/completions", json=payload, headers=headers)
                resp.raise_for_status()
                body = resp.json()
                text = body["choices"][0]["message"]["content"] or ""
                usage = body.get("usage", {})
                ptok = int(usage.get("prompt_tokens", 0))
                ctok = int(usage.get("completion_tokens", 0))
                latency_ms = (time.monotonic() - started) * 1000.0
                cost = (ptok + ctok) / 1000.0 * self.cost_per_1k_tokens
                with self._lock:
                    self._counts[request.role_tag] = self._counts.get(request.role_tag, 0) + 1
                return ChatResponse(text, ptok, ctok, latency_ms, cost)
            except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
                last_error = exc
        raise TransportError(f"chat backend failed: {last_error}") from last_error

    def call_count(self, role_tag: str) -> int:
        with self._lock:
            return self._counts.get(role_tag, 0)

    def reset_counts(self) -> None:
        with self._lock:
            self._counts.clear()


def complete(request: ChatRequest, backend, recorder=None, tool: str = "chat_completion") -> ChatResponse:
    """Call a backend and record the exchange as one trace step."""
    response = backend.complete(request)
    if recorder is not None:
        recorder.record(
            role=request.role_tag,
            tool=tool,
            input_text=request.rendered_prompt,
            output_text=response.text,
            wall_ms=response.latency_ms,
            prompt_tokens=response.prompt_tokens,
            completion_tokens=response.completion_tokens,
            cost=response.cost,
        )
    return response


def call_count(backend, role_tag: str) -> int:
    """Completions issued for a role since the backend's last counter reset."""
    return backend.call_count(role_tag)
