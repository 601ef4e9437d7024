"""Provider abstraction for every language-model call in the framework.

All completions flow through a :class:`Gateway`, which renders data-file
prompt templates and counts calls. No other module builds provider requests;
tests assert that property, and ablation checks rely on the call counter.

Providers: a deterministic scripted provider for hermetic runs, a
record/replay cassette provider, and a minimal chat-completion HTTP client.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import string
import threading
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Protocol

from .errors import ConfigError, ProviderError, ScriptExhausted, TemplateError

log = logging.getLogger(__name__)

ENV_ENDPOINT = "HONEYCOMB_LLM_ENDPOINT"
ENV_MODEL = "HONEYCOMB_LLM_MODEL"
ENV_API_KEY = "HONEYCOMB_LLM_API_KEY"

TEMPLATE_IDS = ("assessor", "executor", "synthesis",
                "itc_generate", "itc_decompose", "gpt_example_gen")


@dataclass(frozen=True)
class ProviderRequest:
    prompt: str
    temperature: float = 0.0
    max_output_tokens: int = 1024
    stop: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.prompt:
            raise ProviderError("provider request needs a non-empty prompt")
        if self.temperature < 0:
            raise ProviderError(f"temperature must be >= 0, got {self.temperature}")


class Provider(Protocol):
    def complete(self, request: ProviderRequest) -> str: ...


# -- prompt templates -------------------------------------------------------

def _template_text(template_id: str) -> str:
    if template_id not in TEMPLATE_IDS:
        raise TemplateError(f"unknown template id: {template_id!r}")
    ref = resources.files("honeycomb") / "templates" / f"{template_id}.txt"
    return ref.read_text(encoding="utf-8")


def render_prompt(template_id: str, slots: dict[str, str]) -> str:
    """Fill a ``${slot}`` template; a missing slot fails naming the slot."""
    template = string.Template(_template_text(template_id))
    try:
        return template.substitute({k: str(v) for k, v in slots.items()})
    except KeyError as exc:
        raise TemplateError(
            f"template {template_id!r} is missing slot {exc.args[0]!r}") from exc
    except ValueError as exc:
        raise TemplateError(f"template {template_id!r} is malformed: {exc}") from exc


# -- providers --------------------------------------------------------------

class ScriptedProvider:
    """Deterministic provider driven by a response queue or substring map.

    Queue scripts answer calls in order and error out when exhausted (never
    silently recycle). Map scripts answer by the first configured substring
    found in the prompt.
    """

    def __init__(self, responses: list[str] | None = None,
                 by_substring: dict[str, str] | None = None):
        if (responses is None) == (by_substring is None):
            raise ConfigError("scripted provider takes a response queue "
                              "or a substring map, not both")
        self._queue = list(responses) if responses is not None else None
        self._map = dict(by_substring) if by_substring is not None else None
        self._lock = threading.Lock()
        self.calls = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedProvider":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load provider script {path}: {exc}") from exc
        return cls(responses=doc.get("responses"),
                   by_substring=doc.get("by_substring"))

    def complete(self, request: ProviderRequest) -> str:
        with self._lock:
            self.calls += 1
            if self._queue is not None:
                if not self._queue:
                    raise ScriptExhausted(
                        f"scripted provider exhausted after {self.calls - 1} responses")
                return self._queue.pop(0)
            for needle, response in self._map.items():
                if needle in request.prompt:
                    return response
            raise ProviderError("no scripted response matches the prompt "
                                f"(tried {len(self._map)} substrings)")


def _request_key(request: ProviderRequest) -> str:
    canon = json.dumps(
        {"prompt": request.prompt, "temperature": request.temperature,
         "max_output_tokens": request.max_output_tokens,
         "stop": list(request.stop)},
        sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


class ReplayProvider:
    """Serves completions from recorded cassettes; a miss fails loudly."""

    def __init__(self, cassette_dir: str | Path):
        self.cassette_dir = Path(cassette_dir)

    def complete(self, request: ProviderRequest) -> str:
        path = self.cassette_dir / f"llm_{_request_key(request)}.json"
        if not path.exists():
            raise ProviderError(
                f"no recorded completion for this request (expected {path.name}); "
                "re-record the cassette instead of hitting the network")
        return json.loads(path.read_text(encoding="utf-8"))["response"]


class RecordingProvider:
    """Wraps a provider and records each completion as a replay cassette."""

    def __init__(self, cassette_dir: str | Path, inner: Provider):
        self.cassette_dir = Path(cassette_dir)
        self.cassette_dir.mkdir(parents=True, exist_ok=True)
        self.inner = inner

    def complete(self, request: ProviderRequest) -> str:
        response = self.inner.complete(request)
        path = self.cassette_dir / f"llm_{_request_key(request)}.json"
        path.write_text(json.dumps(
            {"request": {"prompt": request.prompt,
                         "temperature": request.temperature,
                         "max_output_tokens": request.max_output_tokens,
                         "stop": list(request.stop)},
             "response": response},
            ensure_ascii=False, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        return response


class RemoteProvider:
    """Minimal chat-completion-shaped HTTPS client.

    Endpoint, model, and credentials come from arguments or the
    HONEYCOMB_LLM_* environment variables; transient failures are retried
    up to a small budget before erroring.
    """

    RETRYABLE_STATUS = (429, 500, 502, 503, 504)

    def __init__(self, endpoint: str | None = None, model: str | None = None,
                 api_key: str | None = None, max_retries: int = 3,
                 timeout: float = 60.0, backoff: float = 1.0):
        self.endpoint = endpoint or os.environ.get(ENV_ENDPOINT)
        self.model = model or os.environ.get(ENV_MODEL)
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_API_KEY)
        if not self.endpoint or not self.model:
            raise ConfigError(
                f"remote provider needs an endpoint and model (flags, config, or "
                f"{ENV_ENDPOINT}/{ENV_MODEL})")
        self.max_retries = max_retries
        self.timeout = timeout
        self.backoff = backoff

    def complete(self, request: ProviderRequest) -> str:
        import requests

        body = {"model": self.model,
                "messages": [{"role": "user", "content": request.prompt}],
                "temperature": request.temperature,
                "max_tokens": request.max_output_tokens}
        if request.stop:
            body["stop"] = list(request.stop)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        last_error = "no attempt made"
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * attempt)
            try:
                resp = requests.post(self.endpoint, json=body, headers=headers,
                                     timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = f"transport error: {exc}"
                continue
            if resp.status_code in self.RETRYABLE_STATUS:
                last_error = f"retryable status {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise ProviderError(
                    f"provider returned {resp.status_code}: {resp.text[:500]}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                raise ProviderError(f"malformed provider response: {exc}") from exc
        raise ProviderError(
            f"provider failed after {self.max_retries + 1} attempts ({last_error})")


def make_provider(spec: str, cassette_dir: str | Path | None = None) -> Provider:
    """Build a provider from a ``remote | scripted:<path> | replay:<dir>`` spec."""
    if spec == "remote":
        provider: Provider = RemoteProvider()
        if cassette_dir:
            provider = RecordingProvider(cassette_dir, provider)
        return provider
    if spec.startswith("scripted:"):
        return ScriptedProvider.from_file(spec.split(":", 1)[1])
    if spec.startswith("replay:"):
        return ReplayProvider(spec.split(":", 1)[1])
    raise ConfigError(f"unknown provider spec {spec!r} "
                      "(expected remote, scripted:<path>, or replay:<dir>)")


# -- the choke point --------------------------------------------------------

@dataclass
class Gateway:
    """Single entry point for completions: template rendering + call counting."""

    provider: Provider
    temperature: float = 0.0
    max_output_tokens: int = 1024
    calls: int = field(default=0, init=False)

    def complete_prompt(self, prompt: str, *, stop: tuple[str, ...] = ()) -> str:
        request = ProviderRequest(prompt=prompt, temperature=self.temperature,
                                  max_output_tokens=self.max_output_tokens,
                                  stop=stop)
        self.calls += 1
        return self.provider.complete(request)

    def run_template(self, template_id: str, slots: dict[str, str],
                     stop: tuple[str, ...] = ()) -> str:
        return self.complete_prompt(render_prompt(template_id, slots), stop=stop)
