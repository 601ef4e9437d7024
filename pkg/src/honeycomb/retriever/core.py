"""Two-stage retrieval: BM25 candidate generation, dense rerank to top-k."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

from ..errors import RetrieverError
from ..knowledge_base import KbEntry
from .embedding import EmbeddingProvider, cosine
from .index import (
    KIND_KB,
    KIND_TOOL,
    STAGE_RERANKED,
    IndexDoc,
    LexicalIndex,
    RetrievalHit,
    bm25_search,
    build_index,
)

SOURCE_KB = "kb"
SOURCE_TOOLS = "tools"


@dataclass(frozen=True)
class RetrieverConfig:
    """First-stage width, final top-k, and BM25 shape parameters."""

    n_first_stage: int = 50
    k_final: int = 3
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self):
        if self.n_first_stage < 1 or self.k_final < 1:
            raise RetrieverError("n_first_stage and k_final must be positive")
        if self.k_final > self.n_first_stage:
            raise RetrieverError(
                f"k_final ({self.k_final}) must not exceed "
                f"n_first_stage ({self.n_first_stage})")
        if self.k1 <= 0:
            raise RetrieverError(f"k1 must be > 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise RetrieverError(f"b must be in [0, 1], got {self.b}")


@dataclass
class RetrievalContext:
    kb_hits: list[RetrievalHit] = field(default_factory=list)
    tool_hits: list[RetrievalHit] = field(default_factory=list)


def rerank(provider: EmbeddingProvider, query: str, hits: list[RetrievalHit],
           k: int, text_of: Callable[[str], str]) -> list[RetrievalHit]:
    """Re-score candidate hits by embedding cosine against the query.

    Returns exactly min(k, len(hits)) hits, cosine-descending with ties
    broken by ascending id. Provider failures propagate wrapped with context.
    """
    if not hits:
        raise RetrieverError("rerank requires at least one candidate hit")
    if k < 1:
        raise RetrieverError(f"result count must be >= 1, got {k}")
    try:
        qv = provider.embed(query)
        rescored = [
            RetrievalHit(target_id=h.target_id, target_kind=h.target_kind,
                         stage=STAGE_RERANKED,
                         score=cosine(qv, provider.embed(text_of(h.target_id))))
            for h in hits
        ]
    except RetrieverError:
        raise
    except Exception as exc:
        raise RetrieverError(f"embedding provider failed while reranking "
                             f"{len(hits)} candidates: {exc}") from exc
    rescored.sort(key=lambda h: (-h.score, h.target_id))
    return rescored[:k]


def rank_texts(provider: EmbeddingProvider, query: str,
               items: list[tuple[str, str]], k: int) -> list[tuple[str, str, float]]:
    """Cosine-rank arbitrary (label, text) items against a query, keep top k.

    Used by answer consolidation, where candidates are not index-backed.
    """
    if k < 1:
        raise RetrieverError(f"result count must be >= 1, got {k}")
    qv = provider.embed(query)
    scored = [(label, text, cosine(qv, provider.embed(text)))
              for label, text in items]
    scored.sort(key=lambda item: (-item[2], item[0]))
    return scored[:k]


def kb_index_docs(entries: Iterable[KbEntry]) -> list[IndexDoc]:
    """KB entries as index documents: key and value concatenated, sorted by id."""
    docs = [IndexDoc(id=e.id, text=f"{e.key} {e.value}".strip(), kind=KIND_KB)
            for e in entries if e.id]
    docs.sort(key=lambda d: d.id)
    return docs


class Retriever:
    """Holds the per-source lexical indexes and runs the two-stage pipeline.

    Indexes are immutable snapshots; rebuild to pick up store changes.
    Instances count their retrievals so ablation tests can prove gating.
    """

    def __init__(self, embedder: EmbeddingProvider,
                 config: RetrieverConfig | None = None):
        self.embedder = embedder
        self.config = config or RetrieverConfig()
        self.kb_index: LexicalIndex | None = None
        self.tool_index: LexicalIndex | None = None
        self.retrieval_count = 0

    def build_kb_index(self, entries: Iterable[KbEntry]) -> None:
        docs = kb_index_docs(entries)
        self.kb_index = build_index(docs) if docs else None

    def build_tool_index(self, tool_docs: list[IndexDoc]) -> None:
        self.tool_index = build_index(tool_docs) if tool_docs else None

    def _search_one(self, index: LexicalIndex | None, query: str) -> list[RetrievalHit]:
        if index is None:
            return []
        self.retrieval_count += 1
        cfg = self.config
        first = bm25_search(index, query, cfg.n_first_stage, k1=cfg.k1, b=cfg.b)
        if not first:
            return []
        return rerank(self.embedder, query, first, cfg.k_final, index.text_of)

    def retrieve_context(self, query: str,
                         sources: Iterable[str] = (SOURCE_KB, SOURCE_TOOLS),
                         ) -> RetrievalContext:
        """Run both stages for each enabled source; disabled sources stay empty."""
        enabled = set(sources)
        unknown = enabled - {SOURCE_KB, SOURCE_TOOLS}
        if unknown:
            raise RetrieverError(f"unknown retrieval sources: {sorted(unknown)}")
        ctx = RetrievalContext()
        if SOURCE_KB in enabled:
            ctx.kb_hits = self._search_one(self.kb_index, query)
        if SOURCE_TOOLS in enabled:
            ctx.tool_hits = self._search_one(self.tool_index, query)
        return ctx


__all__ = [
    "KIND_KB", "KIND_TOOL", "SOURCE_KB", "SOURCE_TOOLS",
    "RetrieverConfig", "RetrievalContext", "Retriever", "RetrievalHit",
    "IndexDoc", "LexicalIndex", "bm25_search", "build_index", "rerank",
    "rank_texts", "kb_index_docs",
]
