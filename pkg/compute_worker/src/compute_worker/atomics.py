"""Named calculation functions the worker can run on request.

An atomic is a single-purpose function with a typed signature.  A seed
set ships with the worker; more arrive as a JSON bundle of source
records, each compiled inside the snippet sandbox (the one extra grant
is ``import math``, which generated calculation code leans on).
"""

from __future__ import annotations

import ast
import json
from dataclasses import dataclass
from pathlib import Path

from .sandbox import SandboxViolation, base_namespace, check_source

# Mirrors the type names used by bundle signatures on the wire.
_SCALAR_TYPES = ("text", "integer", "real", "boolean", "list_of_real", "record")

_LOADER_IMPORTS = frozenset({"math"})


class AtomicError(Exception):
    """Bundle loading or call validation failed."""


@dataclass(frozen=True)
class Atomic:
    """One callable calculation plus the signature it is validated against."""

    name: str
    params: tuple          # ((name, type), ...) in declaration order
    returns: str
    fn: object
    provenance: tuple = ()

    def signature(self) -> str:
        args = ", ".join(f"{n}: {t}" for n, t in self.params)
        return f"{self.name}({args}) -> {self.returns}"


def _coerce(value: object, expected: str, param: str, atomic: str) -> object:
    """Check one argument against its declared type; int widens to real."""
    if expected == "real":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise AtomicError(f"{atomic}: parameter {param!r} expects a real "
                              f"number, got {type(value).__name__}")
        return float(value)
    if expected == "integer":
        if isinstance(value, bool) or not isinstance(value, int):
            raise AtomicError(f"{atomic}: parameter {param!r} expects an "
                              f"integer, got {type(value).__name__}")
        return value
    if expected == "text":
        if not isinstance(value, str):
            raise AtomicError(f"{atomic}: parameter {param!r} expects text, "
                              f"got {type(value).__name__}")
        return value
    if expected == "boolean":
        if not isinstance(value, bool):
            raise AtomicError(f"{atomic}: parameter {param!r} expects a "
                              f"boolean, got {type(value).__name__}")
        return value
    if expected == "list_of_real":
        if (not isinstance(value, list)
                or any(isinstance(v, bool) or not isinstance(v, (int, float))
                       for v in value)):
            raise AtomicError(f"{atomic}: parameter {param!r} expects a list "
                              f"of real numbers")
        return [float(v) for v in value]
    if expected == "record":
        if not isinstance(value, dict):
            raise AtomicError(f"{atomic}: parameter {param!r} expects an "
                              f"object, got {type(value).__name__}")
        return value
    raise AtomicError(f"{atomic}: parameter {param!r} has unknown type "
                      f"{expected!r}")


class AtomicRegistry:
    """Lookup table of atomics; call paths validate args before executing."""

    def __init__(self) -> None:
        self._atomics: dict = {}

    def add(self, atomic: Atomic) -> None:
        # First definition of a signature wins; later bundles cannot
        # silently replace a seed calculation.
        if atomic.name in self._atomics:
            return
        self._atomics[atomic.name] = atomic

    def names(self) -> list:
        return sorted(self._atomics)

    def describe(self) -> list:
        """Stable listing of every atomic with its signature."""
        return [{"name": a.name, "signature": a.signature()}
                for a in (self._atomics[n] for n in self.names())]

    def validate_args(self, name: str, args: dict) -> dict:
        if name not in self._atomics:
            raise AtomicError(f"unknown atomic {name!r}; "
                              f"known: {', '.join(self.names()) or '(none)'}")
        atomic = self._atomics[name]
        declared = {n for n, _ in atomic.params}
        unknown = sorted(set(args) - declared)
        if unknown:
            raise AtomicError(f"{name}: unexpected argument(s) "
                              f"{', '.join(unknown)}")
        missing = [n for n, _ in atomic.params if n not in args]
        if missing:
            raise AtomicError(f"{name}: missing argument(s) "
                              f"{', '.join(missing)}")
        return {n: _coerce(args[n], t, n, name) for n, t in atomic.params}

    def call(self, name: str, args: dict) -> object:
        checked = self.validate_args(name, args)
        return self._atomics[name].fn(**checked)


def compile_atomic(record: dict) -> Atomic:
    """Build one atomic from a bundle record; the code runs sandboxed."""
    try:
        name = record["name"]
        params = tuple((p["name"], p["type"]) for p in record["params"])
        returns = record["returns"]
        code = record["code"]
    except (KeyError, TypeError) as exc:
        raise AtomicError(f"malformed atomic record: missing {exc}")
    for _, ptype in params:
        if ptype not in _SCALAR_TYPES:
            raise AtomicError(f"{name}: unsupported parameter type {ptype!r}")

    try:
        tree = ast.parse(code, mode="exec")
        check_source(tree, allow_imports_of=_LOADER_IMPORTS)
    except SyntaxError as exc:
        raise AtomicError(f"{name}: code does not parse: {exc.msg}")
    except SandboxViolation as exc:
        raise AtomicError(f"{name}: {exc}")

    env = base_namespace([], allow_math_import=True)
    try:
        exec(compile(tree, f"<atomic {name}>", "exec"), env)
    except Exception as exc:
        raise AtomicError(f"{name}: code failed to load: "
                          f"{type(exc).__name__}: {exc}")
    fn = env.get(name)
    if not callable(fn):
        raise AtomicError(f"{name}: code does not define a function "
                          f"named {name!r}")
    return Atomic(name=name, params=params, returns=returns, fn=fn,
                  provenance=tuple(record.get("provenance", ())))


def load_bundle(registry: AtomicRegistry, path: Path) -> int:
    """Add every atomic from a bundle file; returns how many were added."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise AtomicError(f"cannot read bundle {path}: {exc}")
    records = doc.get("atomics") if isinstance(doc, dict) else None
    if not isinstance(records, list):
        raise AtomicError(f"bundle {path} lacks an 'atomics' list")
    before = len(registry.names())
    for record in records:
        registry.add(compile_atomic(record))
    return len(registry.names()) - before


# The seed set covers the handful of calculations the agent reaches for
# constantly; each goes through the same compile path as bundle records.
_SEED_RECORDS = (
    {"name": "mass_flow_rate",
     "params": [{"name": "density", "type": "real"},
                {"name": "area", "type": "real"},
                {"name": "velocity", "type": "real"}],
     "returns": "real",
     "code": ("def mass_flow_rate(density, area, velocity):\n"
              "    return density * area * velocity\n")},
    {"name": "density",
     "params": [{"name": "mass", "type": "real"},
                {"name": "volume", "type": "real"}],
     "returns": "real",
     "code": ("def density(mass, volume):\n"
              "    return mass / volume\n")},
    {"name": "celsius_to_kelvin",
     "params": [{"name": "celsius", "type": "real"}],
     "returns": "real",
     "code": ("def celsius_to_kelvin(celsius):\n"
              "    return celsius + 273.15\n")},
    {"name": "kelvin_to_celsius",
     "params": [{"name": "kelvin", "type": "real"}],
     "returns": "real",
     "code": ("def kelvin_to_celsius(kelvin):\n"
              "    return kelvin - 273.15\n")},
    {"name": "ev_to_joule",
     "params": [{"name": "electron_volts", "type": "real"}],
     "returns": "real",
     "code": ("def ev_to_joule(electron_volts):\n"
              "    return electron_volts * 1.602176634e-19\n")},
    {"name": "angstrom_to_meter",
     "params": [{"name": "angstroms", "type": "real"}],
     "returns": "real",
     "code": ("def angstrom_to_meter(angstroms):\n"
              "    return angstroms * 1e-10\n")},
)


def seed_registry() -> AtomicRegistry:
    registry = AtomicRegistry()
    for record in _SEED_RECORDS:
        registry.add(compile_atomic(record))
    return registry
