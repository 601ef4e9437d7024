"""Wire protocol: one JSON request per line, one JSON response per line.

Every line that arrives gets exactly one response.  Malformed input,
unknown kinds, and failed calculations all come back as ``error``
responses; nothing short of a broken pipe stops the loop.
"""

from __future__ import annotations

import json
import math

from .atomics import AtomicError, AtomicRegistry
from .sandbox import deadline, eval_snippet, serialize_value, SnippetTimeout

PROTOCOL_VERSION = "1"
DEFAULT_TIMEOUT = 30.0
STDOUT_CAP = 10_000

_KINDS = ("snippet", "atomic_call", "list_atomics")


def handshake_line() -> str:
    return json.dumps({"protocol": PROTOCOL_VERSION})


def _response(status: str, result: object = None, stdout: str = "",
              diagnostics: str = "") -> dict:
    return {"status": status,
            "result": result,
            "stdout": stdout[:STDOUT_CAP],
            "diagnostics": diagnostics}


def _error(message: str) -> dict:
    return _response("error", diagnostics=message)


def _timeout_of(request: dict) -> float:
    timeout = request.get("timeout", DEFAULT_TIMEOUT)
    if (isinstance(timeout, bool) or not isinstance(timeout, (int, float))
            or not math.isfinite(timeout) or timeout <= 0):
        raise ValueError(f"timeout must be a positive number, "
                         f"got {timeout!r}")
    return float(timeout)


def _handle_snippet(request: dict) -> dict:
    code = request.get("code")
    if not isinstance(code, str) or not code.strip():
        return _error("snippet request needs a non-empty 'code' string")
    outcome = eval_snippet(code, _timeout_of(request))
    return _response(outcome.status, result=outcome.result,
                     stdout=outcome.stdout, diagnostics=outcome.diagnostics)


def _handle_atomic_call(request: dict, registry: AtomicRegistry) -> dict:
    name = request.get("atomic_name")
    args = request.get("args")
    if not isinstance(name, str) or not name:
        return _error("atomic_call request needs an 'atomic_name' string")
    if not isinstance(args, dict):
        return _error("atomic_call request needs an 'args' object")
    timeout = _timeout_of(request)
    try:
        with deadline(timeout):
            value = registry.call(name, args)
    except AtomicError as exc:
        return _error(str(exc))
    except SnippetTimeout:
        return _response("timeout",
                         diagnostics=f"{name} exceeded {timeout:g}s")
    except Exception as exc:
        return _error(f"{name} raised {type(exc).__name__}: {exc}")
    return _response("ok", result=serialize_value(value))


def handle_line(line: str, registry: AtomicRegistry) -> dict:
    """Turn one raw input line into one response dict.  Never raises."""
    try:
        request = json.loads(line)
    except json.JSONDecodeError as exc:
        return _error(f"malformed request: {exc.msg} at column {exc.colno}")
    if not isinstance(request, dict):
        return _error("request must be a JSON object")
    kind = request.get("kind")
    if kind not in _KINDS:
        return _error(f"unknown request kind {kind!r}; "
                      f"expected one of {', '.join(_KINDS)}")
    try:
        if kind == "snippet":
            return _handle_snippet(request)
        if kind == "atomic_call":
            return _handle_atomic_call(request, registry)
        return _response("ok", result=registry.describe())
    except ValueError as exc:
        return _error(str(exc))
    except Exception as exc:  # totality: a bug answers as an error
        return _error(f"internal failure: {type(exc).__name__}: {exc}")
