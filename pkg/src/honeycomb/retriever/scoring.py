"""Scoring backend selection: compiled kernel when available, numpy fallback.

Import-time choice; ``BACKEND`` names the active implementation so callers
and the benchmark can report which one ran.
"""

from __future__ import annotations

try:
    from . import _scoring_cy as _backend
    BACKEND = "cython"
except ImportError:  # extension not compiled on this install
    from . import _scoring_py as _backend
    BACKEND = "python"

bm25_accumulate = _backend.bm25_accumulate
