"""Lexical first stage: tokenization, index build, BM25 search."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from ..errors import RetrieverError
from .scoring import bm25_accumulate

# Unicode alphanumeric runs; underscore and punctuation split tokens.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

KIND_KB = "kb_entry"
KIND_TOOL = "tool"
STAGE_LEXICAL = "lexical"
STAGE_RERANKED = "reranked"


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs, dropping empties."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class IndexDoc:
    """One indexable document: a stable id, its text, and what it points at."""

    id: str
    text: str
    kind: str = KIND_KB


@dataclass(frozen=True)
class RetrievalHit:
    target_id: str
    target_kind: str
    stage: str
    score: float


class LexicalIndex:
    """Immutable term statistics over a document set.

    Holds document frequencies, flattened per-term postings (doc index +
    term frequency), document lengths, and the id map back to the source
    documents. Build once, search from any thread.
    """

    def __init__(self, docs: list[IndexDoc]):
        if not docs:
            raise RetrieverError("cannot build an index over zero documents")
        self.ids: tuple[str, ...] = tuple(d.id for d in docs)
        self.kinds: tuple[str, ...] = tuple(d.kind for d in docs)
        self.texts: tuple[str, ...] = tuple(d.text for d in docs)
        self._pos = {doc_id: i for i, doc_id in enumerate(self.ids)}
        if len(self._pos) != len(self.ids):
            raise RetrieverError("duplicate document ids in index input")
        self.n_docs = len(docs)

        token_lists = [tokenize(t) for t in self.texts]
        self.doc_len = np.array([len(t) for t in token_lists], dtype=np.float64)
        self.avgdl = float(self.doc_len.mean())

        self.vocab: dict[str, int] = {}
        counts_per_term: list[list[tuple[int, float]]] = []
        for pos, tokens in enumerate(token_lists):
            seen: dict[str, int] = {}
            for tok in tokens:
                seen[tok] = seen.get(tok, 0) + 1
            for tok, tf in seen.items():
                tid = self.vocab.setdefault(tok, len(counts_per_term))
                if tid == len(counts_per_term):
                    counts_per_term.append([])
                counts_per_term[tid].append((pos, float(tf)))
        self.df = np.array([len(p) for p in counts_per_term], dtype=np.int64)
        self._post_docs = [np.array([d for d, _ in p], dtype=np.int32)
                           for p in counts_per_term]
        self._post_tfs = [np.array([tf for _, tf in p], dtype=np.float64)
                          for p in counts_per_term]

    def text_of(self, doc_id: str) -> str:
        return self.texts[self._pos[doc_id]]

    def kind_of(self, doc_id: str) -> str:
        return self.kinds[self._pos[doc_id]]

    def idf(self, term: str) -> float:
        """Non-negative IDF: ln((D - df + 0.5) / (df + 0.5) + 1), floored at 0."""
        tid = self.vocab.get(term)
        if tid is None:
            return 0.0
        df = float(self.df[tid])
        return max(0.0, math.log((self.n_docs - df + 0.5) / (df + 0.5) + 1.0))


def build_index(docs: list[IndexDoc]) -> LexicalIndex:
    return LexicalIndex(docs)


def bm25_search(index: LexicalIndex, query: str, n: int,
                k1: float = 1.2, b: float = 0.75) -> list[RetrievalHit]:
    """Top-n BM25 scores for documents sharing at least one query term.

    Standard BM25 sum over the query's terms (with multiplicity); ordering is
    score-descending with ties broken by ascending document id.
    """
    if n < 1:
        raise RetrieverError(f"result count must be >= 1, got {n}")
    terms = [t for t in tokenize(query) if t in index.vocab]
    if not terms:
        return []

    tids = [index.vocab[t] for t in terms]
    starts = np.zeros(len(tids) + 1, dtype=np.int64)
    for i, tid in enumerate(tids):
        starts[i + 1] = starts[i] + len(index._post_docs[tid])
    posting_docs = np.concatenate([index._post_docs[tid] for tid in tids])
    posting_tfs = np.concatenate([index._post_tfs[tid] for tid in tids])
    idf = np.array([index.idf(t) for t in terms], dtype=np.float64)

    scores = np.zeros(index.n_docs, dtype=np.float64)
    touched = np.zeros(index.n_docs, dtype=np.uint8)
    bm25_accumulate(starts, posting_docs, posting_tfs, idf,
                    index.doc_len, index.avgdl, k1, b, scores, touched)

    hits = [RetrievalHit(target_id=index.ids[pos], target_kind=index.kinds[pos],
                         stage=STAGE_LEXICAL, score=float(scores[pos]))
            for pos in np.nonzero(touched)[0]]
    hits.sort(key=lambda h: (-h.score, h.target_id))
    return hits[:n]
