"""Ranker contract shared by all recommenders.

Models work on a dense token space: token 0 is padding, tokens ``1..n`` are
the purchasable items in ascending id order, and ``n + 1`` is the mask token
(BERT4Rec only).  A ranker returns one score per item token; ranking orders
by score descending, then item id ascending.
"""
from __future__ import annotations

import numpy as np

PAD = 0

KINDS = ("pop", "markov", "lr", "mlp", "gru", "narm", "sasrec", "bert4rec")
NEURAL_KINDS = ("lr", "mlp", "gru", "narm", "sasrec", "bert4rec")


class ItemIndex:
    """Bidirectional map between item ids and tokens ``1..n``."""

    def __init__(self, item_ids):
        self.item_ids = np.array(sorted(int(i) for i in item_ids), dtype=np.int64)
        if len(self.item_ids) == 0:
            raise ValueError("no items")
        if len(np.unique(self.item_ids)) != len(self.item_ids):
            raise ValueError("duplicate item ids")
        self._lookup = np.zeros(int(self.item_ids.max()) + 1, dtype=np.int64)
        self._lookup[self.item_ids] = np.arange(1, len(self.item_ids) + 1)

    def __len__(self):
        return len(self.item_ids)

    @classmethod
    def from_vocab(cls, vocab):
        return cls(vocab.purchasable_ids())

    def tokens(self, items) -> np.ndarray:
        items = np.asarray(items, dtype=np.int64)
        if items.size and (items.min() < 1 or items.max() >= len(self._lookup)):
            raise KeyError("item id outside the ranking space")
        tok = self._lookup[items]
        if items.size and tok.min() == 0:
            raise KeyError("item id outside the ranking space")
        return tok

    def items(self, tokens) -> np.ndarray:
        return self.item_ids[np.asarray(tokens, dtype=np.int64) - 1]


def rank_order(scores, item_ids) -> np.ndarray:
    """Indices sorting ``scores`` descending with ties broken by ascending id."""
    return np.lexsort((item_ids, -np.asarray(scores, dtype=np.float64)))


def target_rank(scores, target_index, item_ids) -> int:
    """1-based rank of ``target_index`` under :func:`rank_order`, without sorting."""
    s = scores[target_index]
    ahead = np.count_nonzero(scores > s)
    tied = np.count_nonzero((scores == s) & (item_ids < item_ids[target_index]))
    return int(ahead + tied + 1)


def target_ranks(scores, target_indices, item_ids) -> np.ndarray:
    """Vectorized :func:`target_rank` over rows of a score matrix."""
    scores = np.asarray(scores, dtype=np.float64)
    rows = np.arange(len(target_indices))
    s = scores[rows, target_indices][:, None]
    ahead = (scores > s).sum(axis=1)
    tied = ((scores == s) & (item_ids[None, :] < item_ids[target_indices][:, None])).sum(axis=1)
    return ahead + tied + 1


def pad_left(seqs, length=None) -> tuple[np.ndarray, np.ndarray]:
    """Left-pad token sequences with 0; returns ``(tokens, mask)``."""
    length = max(len(s) for s in seqs) if length is None else length
    tokens = np.zeros((len(seqs), length), dtype=np.int64)
    for row, s in enumerate(seqs):
        if len(s):
            tokens[row, length - len(s):] = s
    return tokens, tokens != PAD


def multi_hot(prefix_tokens, n_items) -> np.ndarray:
    """Binary set encoding of a prefix: entry ``t - 1`` is 1 iff token ``t`` occurs."""
    prefix_tokens = np.asarray(prefix_tokens, dtype=np.int64)
    if prefix_tokens.size == 0:
        raise ValueError("empty prefix")
    v = np.zeros(n_items)
    v[prefix_tokens - 1] = 1.0
    return v


def multi_hot_batch(tokens, n_items) -> np.ndarray:
    """Multi-hot rows from a padded token matrix (padding ignored)."""
    v = np.zeros((tokens.shape[0], n_items + 1))
    np.put_along_axis(v, tokens, 1.0, axis=1)
    return v[:, 1:]


class Ranker:
    """Scores every item token for a session prefix."""

    kind = "base"

    def __init__(self, index: ItemIndex, max_len: int):
        self.index = index
        self.max_len = int(max_len)

    @property
    def item_ids(self):
        return self.index.item_ids

    @property
    def n_items(self):
        return len(self.index)

    def score_tokens(self, prefixes, heroes=None) -> np.ndarray:
        """``(B, n)`` scores for already-truncated token prefixes."""
        raise NotImplementedError

    def truncate(self, prefix_tokens):
        return prefix_tokens[-self.max_len:]

    def scores(self, prefix_items, hero_id=None) -> np.ndarray:
        if not len(prefix_items):
            raise ValueError("empty prefix")
        tok = self.truncate(self.index.tokens(prefix_items))
        heroes = None if hero_id is None else np.array([hero_id])
        return self.score_tokens([tok], heroes)[0]

    def rank(self, prefix_items, hero_id=None) -> list:
        """Item ids ordered by (score desc, id asc)."""
        s = self.scores(prefix_items, hero_id)
        return self.item_ids[rank_order(s, self.item_ids)].tolist()
