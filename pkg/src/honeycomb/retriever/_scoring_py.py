"""Pure-Python/numpy BM25 scoring kernel (fallback backend).

Must stay numerically identical to the compiled twin in ``_scoring_cy.pyx``:
same expression shape, same accumulation order (per query term, postings in
index order), all doubles.
"""

from __future__ import annotations

import numpy as np


def bm25_accumulate(term_starts: np.ndarray, posting_docs: np.ndarray,
                    posting_tfs: np.ndarray, idf: np.ndarray,
                    doc_len: np.ndarray, avgdl: float, k1: float, b: float,
                    scores: np.ndarray, touched: np.ndarray) -> None:
    """Accumulate per-document BM25 contributions of each query term.

    ``term_starts`` delimits each query term's slice of the flattened posting
    arrays; ``scores`` and ``touched`` are zeroed output buffers sized to the
    document count.
    """
    for qi in range(len(idf)):
        lo = term_starts[qi]
        hi = term_starts[qi + 1]
        if lo == hi:
            continue
        docs = posting_docs[lo:hi]
        tfs = posting_tfs[lo:hi]
        dl = doc_len[docs]
        w = idf[qi]
        scores[docs] += w * (tfs * (k1 + 1.0)) / (tfs + k1 * (1.0 - b + b * dl / avgdl))
        touched[docs] = 1
