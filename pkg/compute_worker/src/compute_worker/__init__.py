"""Stdio calculation worker: sandboxed snippets and named atomics."""

from .atomics import Atomic, AtomicError, AtomicRegistry, load_bundle, seed_registry
from .protocol import PROTOCOL_VERSION, handle_line, handshake_line
from .sandbox import eval_snippet

__all__ = [
    "Atomic",
    "AtomicError",
    "AtomicRegistry",
    "PROTOCOL_VERSION",
    "eval_snippet",
    "handle_line",
    "handshake_line",
    "load_bundle",
    "seed_registry",
]
