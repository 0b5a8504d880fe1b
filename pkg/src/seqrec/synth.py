"""Synthetic match corpora with planted sequential purchase structure.

Every hero owns a first-order transition matrix over items; a session is a
random walk through its hero's matrix.  Rows are ``softmax(sharpness * z)``
for Gaussian ``z``, so ``sharpness = 0`` gives uniform rows and large values
give near-deterministic ones.  Optionally a second-order component mixes in
a row indexed by the item bought two steps earlier.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .models.base import ItemIndex, Ranker
from .dataset import (
    DEFAULT_MODE, Dataset, HeroEntry, HeroVocab, ItemEntry, ItemVocab, MatchRecord, Session,
)

RNG_ALGORITHM = "numpy.random.Philox"
START_EPOCH = 1_587_000_000


@dataclass(frozen=True)
class SynthSpec:
    n_matches: int = 1000
    n_items: int = 50
    n_heroes: int = 10
    transition_sharpness: float = 3.0
    consumable_rate: float = 0.1
    mean_ls: float = 12.0
    std_ls: float = 4.0
    mean_duration_s: float = 2400.0
    std_duration_s: float = 480.0
    seed: int = 0
    # weight of a corpus-wide component shared by all heroes' transition logits
    shared_weight: float = 0.0
    # probability mass given to the row of the item bought two steps back
    second_order_weight: float = 0.0
    consumable_repeat: float = 0.3
    game_mode: str = DEFAULT_MODE

    def validate(self):
        if self.n_items < 3:
            raise ValueError("n_items must be at least 3")
        if self.n_matches < 1 or self.n_heroes < 1:
            raise ValueError("n_matches and n_heroes must be positive")
        if self.transition_sharpness < 0:
            raise ValueError("transition_sharpness must be >= 0")
        for name in ("consumable_rate", "shared_weight", "second_order_weight", "consumable_repeat"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("mean_ls", "std_ls", "mean_duration_s", "std_duration_s"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if 3 * self.mean_ls < 2:
            raise ValueError("mean_ls too small for sessions of length >= 2")


@dataclass
class SynthOracle:
    """Generating distributions; ``transitions[h][a - 1, b - 1] = P(b | a)`` for hero ``h``."""

    item_ids: np.ndarray
    transitions: dict
    initial: dict
    second_order: dict
    second_order_weight: float

    def row(self, hero_id, last_item):
        return self.transitions[hero_id][last_item - 1]

    def to_json(self) -> dict:
        return {
            "item_ids": self.item_ids.tolist(),
            "second_order_weight": self.second_order_weight,
            "transitions": {str(h): m.tolist() for h, m in sorted(self.transitions.items())},
            "initial": {str(h): v.tolist() for h, v in sorted(self.initial.items())},
            "second_order": {str(h): m.tolist() for h, m in sorted(self.second_order.items())},
        }

    @classmethod
    def from_json(cls, obj) -> "SynthOracle":
        def conv(d):
            return {int(h): np.array(v, dtype=np.float64) for h, v in d.items()}
        return cls(np.array(obj["item_ids"], dtype=np.int64), conv(obj["transitions"]),
                   conv(obj["initial"]), conv(obj["second_order"]), obj["second_order_weight"])


def _softmax_rows(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _sample(rng, p):
    # inverse CDF on one uniform; avoids Generator.choice's per-call overhead
    c = np.cumsum(p)
    return min(int(np.searchsorted(c, rng.random() * c[-1], side="right")), len(p) - 1)


def generate(spec: SynthSpec):
    """Build a corpus and its generating oracle; deterministic in ``spec.seed``."""
    spec.validate()
    rng = np.random.Generator(np.random.Philox(spec.seed))
    n = spec.n_items
    alpha = spec.transition_sharpness

    n_cons = int(round(spec.consumable_rate * n))
    consumable = np.zeros(n, dtype=bool)
    consumable[rng.permutation(n)[:n_cons]] = True
    vocab = ItemVocab(tuple(ItemEntry(k + 1, f"item_{k + 1}", True, bool(consumable[k])) for k in range(n)))
    heroes = HeroVocab(tuple(HeroEntry(h + 1, f"hero_{h + 1}") for h in range(spec.n_heroes)))

    w = spec.shared_weight
    shared = rng.standard_normal((n, n))
    shared2 = rng.standard_normal((n, n))
    transitions, initial, second = {}, {}, {}
    for h in range(1, spec.n_heroes + 1):
        z = np.sqrt(w) * shared + np.sqrt(1 - w) * rng.standard_normal((n, n))
        rows = _softmax_rows(alpha * z)
        rows[consumable] *= 1 - spec.consumable_repeat
        rows[consumable, np.flatnonzero(consumable)] += spec.consumable_repeat
        transitions[h] = rows
        z2 = np.sqrt(w) * shared2 + np.sqrt(1 - w) * rng.standard_normal((n, n))
        second[h] = _softmax_rows(alpha * z2)
        start = alpha * rng.standard_normal(n) + np.where(consumable, np.log(3.0), 0.0)
        initial[h] = _softmax_rows(start)

    beta = spec.second_order_weight
    matches = []
    start_time = START_EPOCH
    for mid in range(1, spec.n_matches + 1):
        start_time += int(rng.integers(1, 121))
        duration = int(max(300, round(rng.normal(spec.mean_duration_s, spec.std_duration_s))))
        picks = (rng.permutation(spec.n_heroes)[:10] + 1 if spec.n_heroes >= 10
                 else rng.integers(1, spec.n_heroes + 1, size=10))
        sessions = []
        for slot in range(10):
            hero = int(picks[slot])
            length = int(np.clip(round(rng.normal(spec.mean_ls, spec.std_ls)), 2, int(3 * spec.mean_ls)))
            items = [_sample(rng, initial[hero])]
            while len(items) < length:
                p = transitions[hero][items[-1]]
                if beta and len(items) >= 2:
                    p = (1 - beta) * p + beta * second[hero][items[-2]]
                items.append(_sample(rng, p))
            times = np.sort(rng.integers(0, duration + 1, size=length))
            sessions.append(Session(slot, hero, "radiant" if slot < 5 else "dire",
                                    tuple(i + 1 for i in items), tuple(int(t) for t in times)))
        matches.append(MatchRecord(mid, start_time, duration, spec.game_mode, False, tuple(sessions)))

    oracle = SynthOracle(np.arange(1, n + 1), transitions, initial, second, beta)
    return Dataset(vocab, heroes, tuple(matches)), oracle


def oracle_rank(oracle: SynthOracle, session_prefix, hero_id):
    """Items ordered by the true next-item probability given the last purchase (ties by id)."""
    if not len(session_prefix):
        raise ValueError("empty prefix")
    row = oracle.row(hero_id, session_prefix[-1])
    order = np.lexsort((oracle.item_ids, -row))
    return oracle.item_ids[order].tolist()


def save_synth(directory, spec: SynthSpec, dataset, oracle):
    """Write the corpus files, ``oracle.json`` and ``synth_meta.json``."""
    from .dataset import save_corpus

    d = Path(directory)
    save_corpus(d, dataset)
    (d / "oracle.json").write_text(json.dumps(oracle.to_json(), sort_keys=True))
    meta = {"spec": asdict(spec), "rng_algorithm": RNG_ALGORITHM, "seed": spec.seed}
    (d / "synth_meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2))
    return d


class OracleRanker(Ranker):
    """Scores items by the generating transition row of the session's hero."""

    kind = "oracle"

    def __init__(self, oracle: SynthOracle, max_len=1 << 30):
        super().__init__(ItemIndex(oracle.item_ids), max_len)
        self.oracle = oracle

    def score_tokens(self, prefixes, heroes=None):
        if heroes is None:
            raise ValueError("the oracle needs the hero of each prefix")
        out = np.empty((len(prefixes), self.n_items))
        for row, (p, h) in enumerate(zip(prefixes, heroes)):
            out[row] = self.oracle.row(int(h), int(self.index.items([p[-1]])[0]))
        return out
