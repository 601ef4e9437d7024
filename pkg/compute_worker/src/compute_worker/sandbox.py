"""Restricted evaluation of arithmetic snippets.

Snippets run in a throwaway namespace that exposes arithmetic, the math
module, and a small builtin whitelist.  Import statements, file and
process access, and attribute probing of private names are rejected
before execution.  A wall-clock alarm bounds how long a snippet may run.
"""

from __future__ import annotations

import ast
import math
import signal
from dataclasses import dataclass, field


class SandboxViolation(Exception):
    """Snippet uses a construct the sandbox does not allow."""


class SnippetTimeout(Exception):
    """Snippet exceeded its wall-clock budget."""


# Builtins reachable from snippets.  Everything else (open, exec, eval,
# __import__, getattr, ...) is simply absent from the namespace, and the
# AST check below rejects the names outright so failures are explicit.
_SAFE_BUILTINS = {
    "abs": abs, "all": all, "any": any, "bool": bool, "divmod": divmod,
    "enumerate": enumerate, "float": float, "int": int, "len": len,
    "list": list, "max": max, "min": min, "pow": pow, "range": range,
    "repr": repr, "round": round, "set": set, "sorted": sorted,
    "str": str, "sum": sum, "tuple": tuple, "zip": zip,
    "True": True, "False": False, "None": None,
}

_DENIED_NAMES = frozenset({
    "open", "exec", "eval", "compile", "__import__", "input", "breakpoint",
    "globals", "locals", "vars", "dir", "getattr", "setattr", "delattr",
    "hasattr", "type", "super", "object", "memoryview", "bytearray",
    "bytes", "exit", "quit", "help",
})

_DENIED_NODES = (ast.Global, ast.Nonlocal, ast.Delete,
                 ast.AsyncFunctionDef, ast.Await, ast.AsyncFor, ast.AsyncWith)


def check_source(tree: ast.AST, allow_imports_of: frozenset = frozenset()) -> None:
    """Reject constructs outside the sandbox before anything executes."""
    for node in ast.walk(tree):
        if isinstance(node, (ast.Import, ast.ImportFrom)):
            if isinstance(node, ast.ImportFrom):
                modules = [node.module or ""]
            else:
                modules = [alias.name for alias in node.names]
            for module in modules:
                if module not in allow_imports_of:
                    raise SandboxViolation(
                        f"import of {module or '<relative>'!r} is not allowed")
            continue
        if isinstance(node, _DENIED_NODES):
            raise SandboxViolation(
                f"{type(node).__name__} statements are not allowed")
        if isinstance(node, ast.Name) and node.id in _DENIED_NAMES:
            raise SandboxViolation(f"{node.id!r} is not available")
        if isinstance(node, ast.Attribute) and node.attr.startswith("_"):
            raise SandboxViolation(
                f"access to private attribute {node.attr!r} is not allowed")


def _capture_print(buffer: list):
    def _print(*values, sep: str = " ", end: str = "\n") -> None:
        buffer.append(sep.join(str(v) for v in values) + end)
    return _print


def _math_only_import(name, globals=None, locals=None, fromlist=(), level=0):
    # Runtime twin of the AST allowance: only the math module resolves.
    if name == "math" and level == 0:
        return math
    raise ImportError(f"import of {name!r} is not allowed")


def base_namespace(stdout_buffer: list, allow_math_import: bool = False) -> dict:
    """Fresh globals for one evaluation; nothing survives between calls."""
    builtins = dict(_SAFE_BUILTINS)
    builtins["print"] = _capture_print(stdout_buffer)
    if allow_math_import:
        builtins["__import__"] = _math_only_import
    env = {"__builtins__": builtins, "math": math}
    # Common math names are usable without the module prefix.
    for name in ("sqrt", "sin", "cos", "tan", "log", "log10", "log2", "exp",
                 "floor", "ceil", "pi", "e", "inf", "nan", "fabs", "degrees",
                 "radians", "atan", "asin", "acos", "hypot", "factorial"):
        env[name] = getattr(math, name)
    return env


def _raise_timeout(signum, frame):
    raise SnippetTimeout()


class deadline:
    """Context manager raising SnippetTimeout after ``seconds`` wall-clock.

    Relies on SIGALRM, so evaluation must stay on the main thread; the
    worker is single-threaded by design.
    """

    def __init__(self, seconds: float) -> None:
        self.seconds = seconds

    def __enter__(self):
        self._previous = signal.signal(signal.SIGALRM, _raise_timeout)
        signal.setitimer(signal.ITIMER_REAL, self.seconds)
        return self

    def __exit__(self, exc_type, exc, tb):
        signal.setitimer(signal.ITIMER_REAL, 0.0)
        signal.signal(signal.SIGALRM, self._previous)
        return False


@dataclass
class Evaluation:
    """Outcome of one snippet run."""

    status: str
    result: object = None
    stdout: str = ""
    diagnostics: str = ""


def serialize_value(value: object) -> object:
    """Clamp arbitrary Python values to the number-or-text wire range."""
    if value is None or isinstance(value, (bool, int, float, str)):
        return value
    return str(value)


def eval_snippet(code: str, timeout: float) -> Evaluation:
    """Run one snippet and report its value.

    The value is an explicitly assigned ``result`` variable when present,
    otherwise the value of a trailing expression.  A snippet that yields
    neither is an error rather than a silent None.
    """
    stdout_buffer: list = []
    try:
        tree = ast.parse(code, mode="exec")
        check_source(tree)
    except SyntaxError as exc:
        return Evaluation("error", diagnostics=f"syntax error: {exc.msg} "
                                               f"(line {exc.lineno})")
    except SandboxViolation as exc:
        return Evaluation("error", diagnostics=str(exc))

    trailing = None
    body = tree.body
    if body and isinstance(body[-1], ast.Expr):
        trailing = ast.Expression(body[-1].value)
        ast.copy_location(trailing, body[-1])
        body = body[:-1]

    env = base_namespace(stdout_buffer)
    module = ast.Module(body=body, type_ignores=[])
    try:
        with deadline(timeout):
            exec(compile(module, "<snippet>", "exec"), env)
            trailing_value = (eval(compile(trailing, "<snippet>", "eval"), env)
                              if trailing is not None else None)
    except SnippetTimeout:
        return Evaluation("timeout", stdout="".join(stdout_buffer),
                          diagnostics=f"snippet exceeded {timeout:g}s")
    except BaseException as exc:  # totality: any failure becomes a response
        return Evaluation("error", stdout="".join(stdout_buffer),
                          diagnostics=f"{type(exc).__name__}: {exc}")

    if "result" in env:
        value = env["result"]
    elif trailing is not None:
        value = trailing_value
    else:
        return Evaluation(
            "error", stdout="".join(stdout_buffer),
            diagnostics="snippet produced no result; end with an expression "
                        "or assign to a variable named result")
    return Evaluation("ok", result=serialize_value(value),
                      stdout="".join(stdout_buffer))
