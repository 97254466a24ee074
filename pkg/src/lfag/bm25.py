"""Okapi BM25 over an immutable document list.

One implementation backs entity soft-matching, local retrieval, and the
fixture search index. Scores can be normalized into [0, 1] by the per-query
saturation bound (the supremum of the score as term frequencies grow), which
is what the match-scoring and retrieval layers store as relevance.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

from .textutils import tokenize

DEFAULT_K1 = 1.5
DEFAULT_B = 0.75


class Bm25Index:
    """BM25 statistics for a fixed document collection.

    IDF uses the +1-smoothed form ``ln(1 + (N - df + 0.5) / (df + 0.5))`` so
    it is never negative; terms absent from the collection get the df=0 value.
    """

    def __init__(self, documents: Sequence[str], k1: float = DEFAULT_K1, b: float = DEFAULT_B):
        self.k1 = k1
        self.b = b
        self.doc_tokens = [tokenize(doc) for doc in documents]
        self.term_freqs = [Counter(toks) for toks in self.doc_tokens]
        self.doc_lens = [len(toks) for toks in self.doc_tokens]
        self.size = len(self.doc_tokens)
        self.avgdl = (sum(self.doc_lens) / self.size) if self.size else 0.0
        self._df: Counter[str] = Counter()
        for tf in self.term_freqs:
            for term in tf:
                self._df[term] += 1

    def idf(self, term: str) -> float:
        df = self._df.get(term, 0)
        return math.log(1.0 + (self.size - df + 0.5) / (df + 0.5))

    def score_tokens(self, query_tokens: Sequence[str], doc_index: int) -> float:
        tf = self.term_freqs[doc_index]
        dl = self.doc_lens[doc_index]
        length_norm = 1.0 - self.b + (self.b * dl / self.avgdl if self.avgdl > 0 else 0.0)
        total = 0.0
        for term in query_tokens:
            freq = tf.get(term, 0)
            if freq == 0:
                continue
            total += self.idf(term) * freq * (self.k1 + 1.0) / (freq + self.k1 * length_norm)
        return total

    def scores(self, query: str) -> list[float]:
        toks = tokenize(query)
        return [self.score_tokens(toks, i) for i in range(self.size)]

    def saturation_bound(self, query_tokens: Sequence[str]) -> float:
        """Upper bound of the score over any document: sum of idf * (k1 + 1)
        over query tokens (with multiplicity)."""
        return sum(self.idf(term) * (self.k1 + 1.0) for term in query_tokens)

    def normalized_scores(self, query: str) -> list[float]:
        """Scores divided by the saturation bound, clamped into [0, 1].
        A query with no usable tokens scores 0 everywhere."""
        toks = tokenize(query)
        bound = self.saturation_bound(toks)
        if bound <= 0.0:
            return [0.0] * self.size
        out = []
        for i in range(self.size):
            value = self.score_tokens(toks, i) / bound
            out.append(min(1.0, max(0.0, value)))
        return out

    def best_normalized(self, query: str) -> float:
        scores = self.normalized_scores(query)
        return max(scores) if scores else 0.0
