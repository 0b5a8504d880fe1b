from __future__ import annotations

import math
from dataclasses import dataclass

from .model import DataError, Dataset, SplitSpec

DEFAULT_MODE = "ranked_all_pick"
DEFAULT_TRIM_Q = 0.025


@dataclass(frozen=True)
class FilterCounts:
    """How many matches each preprocessing stage removed."""

    input: int
    wrong_mode: int
    abandoned: int
    invalid_items: int
    short_sessions: int
    duration_trim: int
    output: int


def _sort_by_start(matches):
    # stable: identical start times keep input order
    return sorted(matches, key=lambda m: m.start_time)


def preprocess(d: Dataset, mode_filter=DEFAULT_MODE, trim_q=DEFAULT_TRIM_Q, report=None):
    """Filter a raw dataset into a training corpus.

    Stages, in order: keep ``mode_filter`` matches; drop abandoned matches;
    drop matches with unknown, non-purchasable or otherwise invalid purchases;
    drop every match containing a session shorter than two purchases; drop
    ``floor(n * trim_q)`` matches from each end of the duration ordering.
    Matches with fewer than ten sessions stay.  The result is ordered by
    start time.

    Re-applying the same parameters to its own output is a no-op.
    ``report``, if a list, receives a :class:`FilterCounts`.
    """
    if not 0 <= trim_q < 0.5:
        raise ValueError("trim_q must lie in [0, 0.5)")
    params = (mode_filter, float(trim_q))
    if d.processed_with == params:
        return d

    ms = list(d.matches)
    n0 = len(ms)
    ms = [m for m in ms if m.game_mode == mode_filter]
    n1 = len(ms)
    ms = [m for m in ms if not m.abandoned]
    n2 = len(ms)
    ms = [m for m in ms if m.valid and all(d.vocab.is_purchasable(i) for s in m.sessions for i in s.items)]
    n3 = len(ms)
    ms = [m for m in ms if all(len(s) >= 2 for s in m.sessions)]
    n4 = len(ms)

    cut = math.floor(n4 * trim_q)
    if cut:
        order = sorted(range(n4), key=lambda i: ms[i].duration_s)
        keep = set(order[cut:n4 - cut])
        ms = [m for i, m in enumerate(ms) if i in keep]
    n5 = len(ms)
    if not ms:
        raise DataError("empty dataset after preprocessing")
    if report is not None:
        report.append(FilterCounts(n0, n0 - n1, n1 - n2, n2 - n3, n3 - n4, n4 - n5, n5))
    return d.with_matches(_sort_by_start(ms), processed_with=params)


def split_chronological(d: Dataset, spec: SplitSpec):
    """Split by whole matches at ``floor(n*train)`` and ``floor(n*(train+val))``."""
    starts = [m.start_time for m in d.matches]
    if any(a > b for a, b in zip(starts, starts[1:])):
        raise DataError("dataset must be sorted by start_time before splitting")
    n = len(d.matches)
    a = math.floor(n * spec.train_frac)
    b = math.floor(n * (spec.train_frac + spec.val_frac))
    parts = (d.matches[:a], d.matches[a:b], d.matches[b:])
    for name, part in zip(("train", "validation", "test"), parts):
        if not part:
            raise DataError(f"{name} split is empty ({n} matches)")
    return tuple(d.with_matches(p, processed_with=d.processed_with) for p in parts)
