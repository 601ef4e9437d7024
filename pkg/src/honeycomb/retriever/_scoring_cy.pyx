# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled BM25 scoring kernel.

Numerically identical to ``_scoring_py.bm25_accumulate``: same expression
shape and accumulation order, IEEE doubles throughout.
"""


def bm25_accumulate(long long[::1] term_starts, int[::1] posting_docs,
                    double[::1] posting_tfs, double[::1] idf,
                    double[::1] doc_len, double avgdl, double k1, double b,
                    double[::1] scores, unsigned char[::1] touched):
    cdef Py_ssize_t nq = idf.shape[0]
    cdef Py_ssize_t qi, p, lo, hi
    cdef int d
    cdef double w, tf
    for qi in range(nq):
        lo = term_starts[qi]
        hi = term_starts[qi + 1]
        w = idf[qi]
        for p in range(lo, hi):
            d = posting_docs[p]
            tf = posting_tfs[p]
            scores[d] += w * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * doc_len[d] / avgdl))
            touched[d] = 1
