"""Immutable data model for match corpora."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np


class DataError(ValueError):
    """Invalid or unusable data (bad file contents, empty results)."""


class ItemEntry(NamedTuple):
    item_id: int
    name: str
    purchasable: bool
    consumable: bool


class HeroEntry(NamedTuple):
    hero_id: int
    name: str


class Purchase(NamedTuple):
    item_id: int
    t_s: float


@dataclass(frozen=True)
class ItemVocab:
    entries: tuple[ItemEntry, ...]

    def __post_init__(self):
        ids = [e.item_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate item ids in vocabulary")
        if any(i < 1 for i in ids):
            raise DataError("item ids must be >= 1 (0 is reserved for padding)")
        if not any(e.purchasable for e in self.entries):
            raise DataError("vocabulary has no purchasable item")

    def __contains__(self, item_id):
        return item_id in self._by_id

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, item_id) -> ItemEntry:
        return self._by_id[item_id]

    @property
    def _by_id(self):
        cache = self.__dict__.get("_cache")
        if cache is None:
            cache = {e.item_id: e for e in self.entries}
            object.__setattr__(self, "_cache", cache)
        return cache

    def purchasable_ids(self) -> np.ndarray:
        """Sorted ids of purchasable items: the ranking space of every model."""
        return np.array(sorted(e.item_id for e in self.entries if e.purchasable), dtype=np.int64)

    def is_purchasable(self, item_id) -> bool:
        e = self._by_id.get(item_id)
        return e is not None and e.purchasable


@dataclass(frozen=True)
class HeroVocab:
    entries: tuple[HeroEntry, ...]

    def __post_init__(self):
        ids = [e.hero_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate hero ids in vocabulary")

    def __contains__(self, hero_id):
        ids = self.__dict__.get("_ids")
        if ids is None:
            ids = frozenset(e.hero_id for e in self.entries)
            object.__setattr__(self, "_ids", ids)
        return hero_id in ids

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True)
class Session:
    """One player's purchases in one match, ordered by time."""

    player_slot: int
    hero_id: int
    team: str
    items: tuple[int, ...]
    times: tuple[float, ...]

    @property
    def purchases(self) -> tuple[Purchase, ...]:
        return tuple(Purchase(i, t) for i, t in zip(self.items, self.times))

    def __len__(self):
        return len(self.items)


@dataclass(frozen=True)
class MatchRecord:
    match_id: int
    start_time: int
    duration_s: int
    game_mode: str
    abandoned: bool
    sessions: tuple[Session, ...]
    # validation findings from ingestion; non-empty means the match is invalid
    issues: tuple[str, ...] = ()

    @property
    def valid(self) -> bool:
        return not self.issues


@dataclass(frozen=True)
class Dataset:
    vocab: ItemVocab
    heroes: HeroVocab
    matches: tuple[MatchRecord, ...]
    # preprocessing parameters already applied, as (mode_filter, trim_q)
    processed_with: tuple | None = field(default=None, compare=False)

    def __len__(self):
        return len(self.matches)

    def sessions(self):
        for m in self.matches:
            yield from m.sessions

    @property
    def n_sessions(self) -> int:
        return sum(len(m.sessions) for m in self.matches)

    def with_matches(self, matches, processed_with=None) -> "Dataset":
        return Dataset(self.vocab, self.heroes, tuple(matches), processed_with)


@dataclass(frozen=True)
class SplitSpec:
    train_frac: Fraction
    val_frac: Fraction
    test_frac: Fraction

    def __post_init__(self):
        for name in ("train_frac", "val_frac", "test_frac"):
            object.__setattr__(self, name, Fraction(str(getattr(self, name))))
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f <= 0 for f in fracs):
            raise ValueError("split fractions must be positive")
        if sum(fracs) != 1:
            raise ValueError(f"split fractions sum to {sum(fracs)}, not 1")


DOTA350K_SPLIT = SplitSpec(Fraction(94, 100), Fraction(1, 100), Fraction(5, 100))
OPENDOTA_SPLIT = SplitSpec(Fraction(90, 100), Fraction(5, 100), Fraction(5, 100))


@dataclass(frozen=True)
class DatasetStats:
    n_matches: int
    n_sessions: int
    n_items_observed: int
    n_heroes_observed: int
    mean_ls: float
    std_ls: float
    item_freq: dict
    hero_freq: dict

    def to_json(self) -> dict:
        return {
            "n_matches": self.n_matches,
            "n_sessions": self.n_sessions,
            "n_items_observed": self.n_items_observed,
            "n_heroes_observed": self.n_heroes_observed,
            "mean_ls": self.mean_ls,
            "std_ls": self.std_ls,
            "item_freq": {str(k): v for k, v in sorted(self.item_freq.items())},
            "hero_freq": {str(k): v for k, v in sorted(self.hero_freq.items())},
        }
