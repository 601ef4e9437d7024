"""The built-in general-purpose tools and their network transports.

Each tool fetches a payload through a transport: live HTTP, a recorded
cassette directory for hermetic replay, or a recording wrapper that captures
live payloads into cassettes. Search payloads are capped at five snippets
before rendering, so observations stay bounded.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from pathlib import Path
from typing import Protocol

from .errors import ReplayMiss, ToolHubError
from .tool_hub import KIND_GENERAL, ParamSpec, SemType, ToolRegistry, ToolSpec

log = logging.getLogger(__name__)

MAX_SNIPPETS = 5

GENERAL_TOOL_NAMES = ("google_search", "google_scholar_search", "arxiv_search",
                      "wikipedia_search", "youtube_search", "code_repl")


def canonical_args_key(tool: str, args: dict) -> str:
    canon = json.dumps(args, sort_keys=True, separators=(",", ":"),
                       ensure_ascii=False)
    digest = hashlib.sha256(f"{tool}\n{canon}".encode("utf-8")).hexdigest()[:16]
    return f"{tool}__{digest}"


class ToolTransport(Protocol):
    def fetch(self, tool: str, args: dict) -> object: ...


class ReplayTransport:
    """Serves recorded payloads; an unrecorded call fails loudly."""

    def __init__(self, cassette_dir: str | Path):
        self.cassette_dir = Path(cassette_dir)

    def fetch(self, tool: str, args: dict) -> object:
        path = self.cassette_dir / f"{canonical_args_key(tool, args)}.json"
        if not path.exists():
            raise ReplayMiss(
                f"no cassette for {tool} with args {json.dumps(args, sort_keys=True)} "
                f"(expected {path.name}); record it or fix the fixture")
        return json.loads(path.read_text(encoding="utf-8"))["payload"]


class RecordingTransport:
    """Wraps a live transport and records every payload as a cassette."""

    def __init__(self, cassette_dir: str | Path, live: ToolTransport):
        self.cassette_dir = Path(cassette_dir)
        self.cassette_dir.mkdir(parents=True, exist_ok=True)
        self.live = live

    def fetch(self, tool: str, args: dict) -> object:
        payload = self.live.fetch(tool, args)
        record_cassette(self.cassette_dir, tool, args, payload)
        return payload


def record_cassette(cassette_dir: str | Path, tool: str, args: dict,
                    payload: object) -> Path:
    """Write one cassette file; also used to build test fixtures."""
    path = Path(cassette_dir) / f"{canonical_args_key(tool, args)}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"tool": tool, "args": args, "payload": payload},
                               sort_keys=True, ensure_ascii=False, indent=2) + "\n",
                    encoding="utf-8")
    return path


class LiveTransport:
    """Direct HTTP calls for tools with public endpoints.

    Only the arXiv and Wikipedia APIs are reachable without configured
    search-engine credentials; the other searches need an endpoint in the
    session config and error out otherwise.
    """

    ARXIV_URL = "http://export.arxiv.org/api/query"
    WIKI_URL = "https://en.wikipedia.org/api/rest_v1/page/summary/{title}"

    def __init__(self, endpoints: dict[str, str] | None = None,
                 timeout: float = 20.0):
        self.endpoints = dict(endpoints or {})
        self.timeout = timeout

    def fetch(self, tool: str, args: dict) -> object:
        if tool == "arxiv_search":
            return self._arxiv(args)
        if tool == "wikipedia_search":
            return self._wikipedia(args)
        if tool in ("google_search", "google_scholar_search", "youtube_search"):
            endpoint = self.endpoints.get(tool)
            if not endpoint:
                raise ToolHubError(
                    f"live {tool} needs an endpoint in the tools config; "
                    "use replay cassettes for hermetic runs")
            return self._generic_search(endpoint, args)
        if tool == "code_repl":
            raise ToolHubError("code_repl runs through the compute runtime, "
                               "not a network transport")
        raise ToolHubError(f"no live transport for tool {tool!r}")

    def _generic_search(self, endpoint: str, args: dict) -> object:
        import requests

        resp = requests.get(endpoint, params={"q": args.get("query", "")},
                            timeout=self.timeout)
        resp.raise_for_status()
        doc = resp.json()
        snippets = [{"title": str(r.get("title", "")),
                     "url": str(r.get("url", "")),
                     "snippet": str(r.get("snippet", ""))}
                    for r in doc.get("results", [])]
        return snippets[:MAX_SNIPPETS]

    def _arxiv(self, args: dict) -> object:
        import requests

        limit = min(int(args.get("max_results", MAX_SNIPPETS)), MAX_SNIPPETS)
        resp = requests.get(
            self.ARXIV_URL,
            params={"search_query": f"all:{args.get('query', '')}",
                    "max_results": limit},
            timeout=self.timeout)
        resp.raise_for_status()
        entries = re.findall(r"<entry>(.*?)</entry>", resp.text, re.DOTALL)
        snippets = []
        for entry in entries[:limit]:
            title = re.search(r"<title>(.*?)</title>", entry, re.DOTALL)
            link = re.search(r'<id>(.*?)</id>', entry, re.DOTALL)
            summary = re.search(r"<summary>(.*?)</summary>", entry, re.DOTALL)
            snippets.append({
                "title": " ".join((title.group(1) if title else "").split()),
                "url": (link.group(1).strip() if link else ""),
                "snippet": " ".join((summary.group(1) if summary else "").split())[:500],
            })
        return snippets

    def _wikipedia(self, args: dict) -> object:
        import requests

        title = str(args.get("topic", "")).strip().replace(" ", "_")
        resp = requests.get(self.WIKI_URL.format(title=title), timeout=self.timeout)
        resp.raise_for_status()
        doc = resp.json()
        if args.get("summarize", True):
            return str(doc.get("extract", ""))
        return [{"title": str(doc.get("title", "")),
                 "url": str(doc.get("content_urls", {}).get("desktop", {})
                            .get("page", "")),
                 "snippet": str(doc.get("extract", ""))}]


def render_payload(payload: object) -> str:
    """Turn a transport payload into observation text (snippet cap applied)."""
    if isinstance(payload, str):
        return payload
    if isinstance(payload, (int, float)):
        return repr(payload)
    if isinstance(payload, list):
        lines = []
        for i, snip in enumerate(payload[:MAX_SNIPPETS], start=1):
            title = snip.get("title", "") if isinstance(snip, dict) else str(snip)
            url = snip.get("url", "") if isinstance(snip, dict) else ""
            body = snip.get("snippet", "") if isinstance(snip, dict) else ""
            head = f"{i}. {title}".rstrip()
            if url:
                head += f" ({url})"
            lines.append(head)
            if body:
                lines.append(f"   {body}")
        return "\n".join(lines) if lines else "no results"
    return json.dumps(payload, sort_keys=True, ensure_ascii=False)


def make_general_specs() -> list[ToolSpec]:
    text = SemType.TEXT
    integer = SemType.INTEGER
    boolean = SemType.BOOLEAN
    query = ParamSpec("query", text, description="search terms")
    timeout = ParamSpec("timeout", integer, required=False, default=30,
                        description="request budget in seconds")
    return [
        ToolSpec("google_search", (query, timeout), text,
                 "General web search for up-to-date information on any topic; "
                 "use it for facts, definitions, and current data.",
                 KIND_GENERAL),
        ToolSpec("google_scholar_search", (query, timeout), text,
                 "Scholarly literature search covering papers, citations, and "
                 "authors; use it for published research findings.",
                 KIND_GENERAL),
        ToolSpec("arxiv_search",
                 (query,
                  ParamSpec("max_results", integer, required=False, default=5,
                            description="number of papers to return"),
                  timeout),
                 text,
                 "Searches arXiv preprints and returns paper titles with "
                 "abstracts; use it for recent research articles.",
                 KIND_GENERAL),
        ToolSpec("wikipedia_search",
                 (ParamSpec("topic", text, description="article topic to look up"),
                  ParamSpec("summarize", boolean, required=False, default=True,
                            description="return a condensed summary")),
                 text,
                 "Looks up encyclopedia articles and returns a summary; use it "
                 "for established concepts, materials, and definitions.",
                 KIND_GENERAL),
        ToolSpec("youtube_search", (query, timeout), text,
                 "Video search for lectures, demonstrations, and tutorials "
                 "related to the query.",
                 KIND_GENERAL),
        ToolSpec("code_repl",
                 (ParamSpec("code", text, description="Python snippet to run"),
                  timeout),
                 text,
                 "Runs a short Python snippet in a sandboxed interpreter and "
                 "returns the value of its result variable; use it for "
                 "numeric calculation.",
                 KIND_GENERAL),
    ]


def register_general_tools(registry: ToolRegistry, transport: ToolTransport,
                           compute=None) -> None:
    """Wire the general tools into a registry.

    ``compute`` is an optional compute-runtime client; when given, code_repl
    runs snippets there instead of going through the transport.
    """
    for spec in make_general_specs():
        if spec.name == "code_repl" and compute is not None:
            registry.register_tool(spec, _make_compute_handler(compute))
        else:
            registry.register_tool(spec, _make_transport_handler(transport, spec.name))


def _make_transport_handler(transport: ToolTransport, tool: str):
    def handler(args: dict) -> str:
        return render_payload(transport.fetch(tool, args))
    return handler


def _make_compute_handler(compute):
    from .tool_hub import ToolResult

    def handler(args: dict) -> ToolResult:
        response = compute.eval_snippet(args["code"],
                                        timeout=float(args.get("timeout", 30)))
        if response.status == "ok":
            value = response.result if response.result is not None else response.stdout
            return ToolResult.ok(str(value))
        if response.status == "timeout":
            return ToolResult.timed_out(response.diagnostics or "snippet timed out")
        return ToolResult.error(response.diagnostics or "snippet failed")
    return handler
