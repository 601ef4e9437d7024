"""Two-stage retriever: lexical BM25 first stage, dense cosine rerank."""

from .core import (
    KIND_KB,
    KIND_TOOL,
    SOURCE_KB,
    SOURCE_TOOLS,
    IndexDoc,
    LexicalIndex,
    RetrievalContext,
    RetrievalHit,
    Retriever,
    RetrieverConfig,
    bm25_search,
    build_index,
    kb_index_docs,
    rank_texts,
    rerank,
)
from .embedding import EmbeddingProvider, HashEmbedder, RemoteEmbedder, cosine
from .index import STAGE_LEXICAL, STAGE_RERANKED, tokenize
from .scoring import BACKEND as SCORING_BACKEND

__all__ = [
    "KIND_KB", "KIND_TOOL", "SOURCE_KB", "SOURCE_TOOLS",
    "STAGE_LEXICAL", "STAGE_RERANKED", "SCORING_BACKEND",
    "IndexDoc", "LexicalIndex", "RetrievalContext", "RetrievalHit",
    "Retriever", "RetrieverConfig", "EmbeddingProvider", "HashEmbedder",
    "RemoteEmbedder", "bm25_search", "build_index", "cosine", "kb_index_docs",
    "rank_texts", "rerank", "tokenize",
]
