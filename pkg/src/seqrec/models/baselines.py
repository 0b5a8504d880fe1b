from __future__ import annotations

import numpy as np

from .base import ItemIndex, Ranker


def _session_tokens(dataset, index):
    for s in dataset.sessions():
        yield index.tokens(s.items)


class PopRanker(Ranker):
    """Static ranking by purchase count in the training split."""

    kind = "pop"

    def __init__(self, index, counts, max_len=1 << 30):
        super().__init__(index, max_len)
        self.counts = np.asarray(counts, dtype=np.float64)

    def score_tokens(self, prefixes, heroes=None):
        return np.tile(self.counts, (len(prefixes), 1))


def pop_fit(train, index=None, max_len=1 << 30) -> PopRanker:
    index = index or ItemIndex.from_vocab(train.vocab)
    counts = np.zeros(len(index) + 1)
    for tok in _session_tokens(train, index):
        np.add.at(counts, tok, 1.0)
    if not train.matches:
        raise ValueError("empty training split")
    return PopRanker(index, counts[1:], max_len)


class MarkovRanker(Ranker):
    """First-order transition probabilities from the last purchased item.

    Items with zero transition probability follow the positive ones in
    popularity order; a last item never seen as a predecessor falls back to
    the popularity ranking entirely.
    """

    kind = "markov"

    def __init__(self, index, counts, pop_counts, max_len=1 << 30):
        super().__init__(index, max_len)
        self.counts = np.asarray(counts, dtype=np.float64)
        self.pop_counts = np.asarray(pop_counts, dtype=np.float64)
        totals = self.counts.sum(axis=1, keepdims=True)
        self.seen = totals[:, 0] > 0
        self.transitions = np.divide(self.counts, totals, out=np.zeros_like(self.counts), where=totals > 0)
        # popularity as a sub-unit tiebreak below every positive probability
        self._pop_tiebreak = self.pop_counts / (self.pop_counts.max() + 1.0)

    def score_tokens(self, prefixes, heroes=None):
        last = np.array([p[-1] for p in prefixes]) - 1
        rows = self.transitions[last]
        # positive probabilities map to (1, 2]; the zero tail keeps popularity in [0, 1)
        return np.where(rows > 0, 1.0 + rows, self._pop_tiebreak[None, :])


def markov_fit(train, index=None, max_len=1 << 30) -> MarkovRanker:
    index = index or ItemIndex.from_vocab(train.vocab)
    n = len(index)
    counts = np.zeros((n, n))
    pop = np.zeros(n + 1)
    for tok in _session_tokens(train, index):
        np.add.at(pop, tok, 1.0)
        if len(tok) > 1:
            np.add.at(counts, (tok[:-1] - 1, tok[1:] - 1), 1.0)
    if not train.matches:
        raise ValueError("empty training split")
    return MarkovRanker(index, counts, pop[1:], max_len)
