"""Benchmark the compiled BM25 kernel against the pure-Python fallback.

Builds one synthetic index, prepares the flattened posting arrays for a
batch of queries, then times each backend over identical inputs and checks
that their outputs agree bitwise.

    python3 benchmarks/bench_scoring.py [--docs 5000] [--queries 200] [--repeat 5]
"""

from __future__ import annotations

import argparse
import random
import time

import numpy as np

from honeycomb.retriever import IndexDoc, build_index, tokenize
from honeycomb.retriever import _scoring_py
from honeycomb.retriever.scoring import BACKEND

try:
    from honeycomb.retriever import _scoring_cy
except ImportError:
    _scoring_cy = None

VOCAB = ("alloy oxide phase steel copper lattice strain stress grain creep "
         "fatigue anneal quench density viscosity thermal electron bandgap "
         "ceramic polymer crystal defect diffusion sinter weld melt tensile "
         "shear modulus hardness ductile brittle carbide nitride perovskite "
         "dislocation vacancy austenite martensite ferrite pearlite").split()


def build_workload(n_docs: int, n_queries: int, seed: int):
    rng = random.Random(seed)
    docs = [IndexDoc(id=f"d-{i:06d}",
                     text=" ".join(rng.choices(VOCAB, k=rng.randint(20, 200))))
            for i in range(n_docs)]
    index = build_index(docs)
    calls = []
    for _ in range(n_queries):
        query = " ".join(rng.choices(VOCAB, k=rng.randint(2, 6)))
        terms = [t for t in tokenize(query) if t in index.vocab]
        if not terms:
            continue
        tids = [index.vocab[t] for t in terms]
        starts = np.zeros(len(tids) + 1, dtype=np.int64)
        for i, tid in enumerate(tids):
            starts[i + 1] = starts[i] + len(index._post_docs[tid])
        posting_docs = np.concatenate([index._post_docs[t] for t in tids])
        posting_tfs = np.concatenate([index._post_tfs[t] for t in tids])
        idf = np.array([index.idf(t) for t in terms], dtype=np.float64)
        calls.append((starts, posting_docs, posting_tfs, idf))
    return index, calls


def run_backend(kernel, index, calls, k1=1.2, b=0.75):
    outputs = []
    start = time.perf_counter()
    for starts, posting_docs, posting_tfs, idf in calls:
        scores = np.zeros(index.n_docs, dtype=np.float64)
        touched = np.zeros(index.n_docs, dtype=np.uint8)
        kernel(starts, posting_docs, posting_tfs, idf,
               index.doc_len, index.avgdl, k1, b, scores, touched)
        outputs.append((scores, touched))
    return time.perf_counter() - start, outputs


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--docs", type=int, default=5000)
    parser.add_argument("--queries", type=int, default=200)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    print(f"active backend at import: {BACKEND}")
    index, calls = build_workload(args.docs, args.queries, args.seed)
    print(f"index: {index.n_docs} docs, {len(index.vocab)} terms; "
          f"{len(calls)} scoring calls per pass")

    backends = [("python", _scoring_py.bm25_accumulate)]
    if _scoring_cy is not None:
        backends.append(("cython", _scoring_cy.bm25_accumulate))
    else:
        print("compiled kernel unavailable; timing the fallback only")

    timings: dict[str, float] = {}
    reference = None
    for name, kernel in backends:
        best = float("inf")
        outputs = None
        for _ in range(args.repeat):
            elapsed, outputs = run_backend(kernel, index, calls)
            best = min(best, elapsed)
        timings[name] = best
        per_call = best / max(len(calls), 1) * 1e6
        print(f"{name:>7}: best of {args.repeat} passes "
              f"{best * 1e3:8.2f} ms  ({per_call:7.1f} us/call)")
        if reference is None:
            reference = outputs
        else:
            for (s_ref, t_ref), (s_got, t_got) in zip(reference, outputs):
                assert np.array_equal(s_ref, s_got), "backends disagree on scores"
                assert np.array_equal(t_ref, t_got), "backends disagree on touched"
            print("bitwise agreement between backends: yes")

    if len(timings) == 2:
        print(f"speedup (python / cython): "
              f"{timings['python'] / timings['cython']:.2f}x")


if __name__ == "__main__":
    main()
