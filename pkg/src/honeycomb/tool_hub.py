"""Tool registry: declared specs, argument validation, guarded invocation.

Registered tools are either general-purpose (search engines, a code runner)
or domain atomic functions produced by the tool-construction pipeline. Every
invocation is validated against the declared spec, run under a wall-clock
budget, and reported as a :class:`ToolResult`; handler exceptions never
propagate to the caller.
"""

from __future__ import annotations

import concurrent.futures
import json
import keyword
import logging
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

from .errors import ToolHubError
from .retriever import KIND_TOOL, IndexDoc

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 30.0

KIND_GENERAL = "general"
KIND_DOMAIN_ATOMIC = "domain_atomic"
TOOL_KINDS = (KIND_GENERAL, KIND_DOMAIN_ATOMIC)

STATUS_OK = "ok"
STATUS_ERROR = "error"
STATUS_TIMEOUT = "timeout"


class SemType(str, Enum):
    """Semantic parameter and return types shared with the tool pipeline."""

    TEXT = "text"
    INTEGER = "integer"
    REAL = "real"
    BOOLEAN = "boolean"
    LIST_OF_REAL = "list_of_real"
    RECORD = "record"


# Python annotation spellings accepted when parsing generated signatures.
_TYPE_ALIASES = {
    "str": SemType.TEXT, "string": SemType.TEXT, "text": SemType.TEXT,
    "int": SemType.INTEGER, "integer": SemType.INTEGER,
    "float": SemType.REAL, "real": SemType.REAL, "number": SemType.REAL,
    "bool": SemType.BOOLEAN, "boolean": SemType.BOOLEAN,
    "list[float]": SemType.LIST_OF_REAL, "list[int]": SemType.LIST_OF_REAL,
    "list[real]": SemType.LIST_OF_REAL, "list_of_real": SemType.LIST_OF_REAL,
    "list-of-real": SemType.LIST_OF_REAL,
    "dict": SemType.RECORD, "record": SemType.RECORD, "mapping": SemType.RECORD,
}


def parse_sem_type(text: str) -> SemType:
    key = text.strip().lower().replace(" ", "")
    if key not in _TYPE_ALIASES:
        raise ToolHubError(f"unknown parameter type {text!r}")
    return _TYPE_ALIASES[key]


@dataclass(frozen=True)
class ParamSpec:
    name: str
    type: SemType
    required: bool = True
    default: object = None
    description: str = ""

    def __post_init__(self):
        if not self.name.isidentifier() or keyword.iskeyword(self.name):
            raise ToolHubError(f"invalid parameter name {self.name!r}")
        if self.required and self.default is not None:
            raise ToolHubError(
                f"parameter {self.name!r} is required and may not carry a default")


@dataclass(frozen=True)
class ToolSpec:
    name: str
    params: tuple[ParamSpec, ...]
    returns: SemType
    metadata: str
    kind: str = KIND_GENERAL

    def __post_init__(self):
        if not self.name.isidentifier() or keyword.iskeyword(self.name):
            raise ToolHubError(f"invalid tool name {self.name!r}")
        if self.kind not in TOOL_KINDS:
            raise ToolHubError(f"tool {self.name!r} has unknown kind {self.kind!r}")
        seen = set()
        for p in self.params:
            if p.name in seen:
                raise ToolHubError(f"tool {self.name!r} repeats parameter {p.name!r}")
            seen.add(p.name)

    def signature(self) -> str:
        parts = []
        for p in self.params:
            part = f"{p.name}: {p.type.value}"
            if not p.required and p.default is not None:
                part += f" = {json.dumps(p.default)}"
            parts.append(part)
        return f"{self.name}({', '.join(parts)}) -> {self.returns.value}"


@dataclass(frozen=True)
class ToolResult:
    """Outcome of one invocation.

    ``status == "ok"`` carries a value and empty diagnostics; error and
    timeout results carry non-empty diagnostics and no value.
    """

    status: str
    value: object = None
    diagnostics: str = ""

    def __post_init__(self):
        if self.status not in (STATUS_OK, STATUS_ERROR, STATUS_TIMEOUT):
            raise ToolHubError(f"unknown result status {self.status!r}")
        if self.status == STATUS_OK and self.value is None:
            raise ToolHubError("ok result must carry a value")
        if self.status != STATUS_OK and not self.diagnostics:
            raise ToolHubError(f"{self.status} result must carry diagnostics")
        if self.status != STATUS_OK and self.value is not None:
            raise ToolHubError(f"{self.status} result may not carry a value")

    @classmethod
    def ok(cls, value: object) -> "ToolResult":
        return cls(status=STATUS_OK, value=value)

    @classmethod
    def error(cls, diagnostics: str) -> "ToolResult":
        return cls(status=STATUS_ERROR, diagnostics=diagnostics)

    @classmethod
    def timed_out(cls, diagnostics: str) -> "ToolResult":
        return cls(status=STATUS_TIMEOUT, diagnostics=diagnostics)


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    args: dict
    violations: tuple[str, ...] = ()


def _check_value(param: ParamSpec, value: object) -> tuple[object, str | None]:
    t = param.type
    if t is SemType.TEXT:
        if isinstance(value, str):
            return value, None
    elif t is SemType.INTEGER:
        if isinstance(value, int) and not isinstance(value, bool):
            return value, None
    elif t is SemType.REAL:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value), None
    elif t is SemType.BOOLEAN:
        if isinstance(value, bool):
            return value, None
    elif t is SemType.LIST_OF_REAL:
        if isinstance(value, (list, tuple)) and all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            return [float(v) for v in value], None
    elif t is SemType.RECORD:
        if isinstance(value, dict):
            return value, None
    return None, (f"parameter {param.name!r} expects {t.value}, "
                  f"got {type(value).__name__}")


def validate_args(spec: ToolSpec, args: dict) -> ValidationReport:
    """Check args against the spec, fill defaults, and normalize numerics.

    Validation is idempotent: re-validating the returned args reproduces them.
    """
    violations: list[str] = []
    known = {p.name: p for p in spec.params}
    for name in args:
        if name not in known:
            violations.append(f"unknown parameter {name!r}")
    normalized: dict = {}
    for p in spec.params:
        if p.name in args:
            value, problem = _check_value(p, args[p.name])
            if problem:
                violations.append(problem)
            else:
                normalized[p.name] = value
        elif p.required:
            violations.append(f"missing required parameter {p.name!r}")
        elif p.default is not None:
            value, problem = _check_value(p, p.default)
            if problem:
                violations.append(f"default for {problem}")
            else:
                normalized[p.name] = value
    if violations:
        return ValidationReport(ok=False, args={}, violations=tuple(violations))
    return ValidationReport(ok=True, args=normalized)


Handler = Callable[[dict], object]


class ToolRegistry:
    """Holds tool specs and handlers; all invocation goes through here."""

    def __init__(self, default_timeout: float = DEFAULT_TIMEOUT):
        self.default_timeout = default_timeout
        self._specs: dict[str, ToolSpec] = {}
        self._handlers: dict[str, Handler] = {}
        self._timeouts: dict[str, float] = {}
        self._lock = threading.Lock()
        self.invocation_count = 0

    def register_tool(self, spec: ToolSpec, handler: Handler,
                      timeout: float | None = None) -> None:
        with self._lock:
            if spec.name in self._specs:
                raise ToolHubError(f"tool {spec.name!r} is already registered")
            self._specs[spec.name] = spec
            self._handlers[spec.name] = handler
            if timeout is not None:
                self._timeouts[spec.name] = timeout

    def names(self) -> list[str]:
        return sorted(self._specs)

    def __len__(self) -> int:
        return len(self._specs)

    def get_spec(self, name: str) -> ToolSpec:
        if name not in self._specs:
            raise ToolHubError(f"unknown tool: {name}")
        return self._specs[name]

    def describe_tool(self, name: str) -> str:
        """Render the spec as indexable text: signature, purpose, parameters."""
        spec = self.get_spec(name)
        lines = [spec.signature(), spec.metadata.strip()]
        for p in spec.params:
            if p.description:
                lines.append(f"{p.name}: {p.description}")
        return "\n".join(line for line in lines if line)

    def tool_index_docs(self) -> list[IndexDoc]:
        return [IndexDoc(id=name, text=self.describe_tool(name), kind=KIND_TOOL)
                for name in self.names()]

    def invoke_tool(self, name: str, args: dict,
                    timeout: float | None = None) -> ToolResult:
        """Run a tool under a wall-clock budget; never raises for tool faults."""
        with self._lock:
            self.invocation_count += 1
        if name not in self._specs:
            return ToolResult.error(f"unknown tool: {name}")
        if not isinstance(args, dict):
            return ToolResult.error(
                f"tool arguments must be a JSON object, got {type(args).__name__}")
        report = validate_args(self._specs[name], args)
        if not report.ok:
            return ToolResult.error(
                f"invalid arguments for {name}: " + "; ".join(report.violations))

        budget = self._budget(name, report.args, timeout)
        handler = self._handlers[name]
        # Daemon worker thread: a timed-out handler is abandoned, not killed.
        pool = concurrent.futures.ThreadPoolExecutor(
            max_workers=1, thread_name_prefix=f"tool-{name}")
        try:
            future = pool.submit(handler, report.args)
            try:
                outcome = future.result(timeout=budget)
            except concurrent.futures.TimeoutError:
                future.cancel()
                return ToolResult.timed_out(
                    f"tool {name} exceeded its {budget:g}s budget")
            except Exception as exc:
                return ToolResult.error(f"tool {name} failed: "
                                        f"{type(exc).__name__}: {exc}")
        finally:
            pool.shutdown(wait=False)
        if isinstance(outcome, ToolResult):
            return outcome
        if outcome is None:
            return ToolResult.error(f"tool {name} returned no value")
        return ToolResult.ok(outcome)

    def _budget(self, name: str, args: dict, timeout: float | None) -> float:
        if timeout is not None:
            return timeout
        value = args.get("timeout")
        if isinstance(value, (int, float)) and not isinstance(value, bool) and value > 0:
            return float(value)
        return self._timeouts.get(name, self.default_timeout)


# -- registry file I/O ------------------------------------------------------

def spec_to_record(spec: ToolSpec) -> dict:
    return {
        "name": spec.name,
        "params": [{"name": p.name, "type": p.type.value, "required": p.required,
                    "default": p.default, "description": p.description}
                   for p in spec.params],
        "returns": spec.returns.value,
        "metadata": spec.metadata,
        "kind": spec.kind,
    }


def spec_from_record(record: dict) -> ToolSpec:
    try:
        params = tuple(
            ParamSpec(name=p["name"], type=SemType(p["type"]),
                      required=p.get("required", True), default=p.get("default"),
                      description=p.get("description", ""))
            for p in record.get("params", []))
        return ToolSpec(name=record["name"], params=params,
                        returns=SemType(record["returns"]),
                        metadata=record.get("metadata", ""),
                        kind=record.get("kind", KIND_GENERAL))
    except (KeyError, ValueError) as exc:
        raise ToolHubError(f"malformed tool record: {exc}") from exc


def save_registry_file(path: str | Path, specs: list[ToolSpec]) -> None:
    lines = [json.dumps(spec_to_record(s), sort_keys=True, ensure_ascii=False)
             for s in specs]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""),
                          encoding="utf-8")


def load_registry_file(path: str | Path) -> list[ToolSpec]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ToolHubError(f"cannot read registry file {path}: {exc}") from exc
    specs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            specs.append(spec_from_record(json.loads(line)))
        except (json.JSONDecodeError, ToolHubError) as exc:
            raise ToolHubError(f"{path}:{lineno}: {exc}") from exc
    return specs
