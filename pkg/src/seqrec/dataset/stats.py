from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .model import DataError, Dataset, DatasetStats


def compute_stats(d: Dataset) -> DatasetStats:
    """Corpus counts and session-length moments (population std)."""
    if not d.matches:
        raise DataError("empty dataset")
    lengths = np.array([len(s) for s in d.sessions()], dtype=np.float64)
    item_freq = Counter(i for s in d.sessions() for i in s.items)
    hero_freq = Counter(s.hero_id for s in d.sessions())
    return DatasetStats(
        n_matches=len(d.matches),
        n_sessions=len(lengths),
        n_items_observed=len(item_freq),
        n_heroes_observed=len(hero_freq),
        mean_ls=float(lengths.mean()) if len(lengths) else 0.0,
        std_ls=float(lengths.std()) if len(lengths) else 0.0,
        item_freq=dict(item_freq),
        hero_freq=dict(hero_freq),
    )


def frequency_ranking(freq: dict, ids) -> list:
    """``ids`` ordered by descending count, ties by ascending id."""
    return sorted(ids, key=lambda i: (-freq.get(i, 0), i))


def kendall_tau(rank_a, rank_b) -> float:
    """Kendall's tau-a between two tie-free rankings of the same ids."""
    rank_a, rank_b = list(rank_a), list(rank_b)
    if len(set(rank_a)) != len(rank_a) or len(set(rank_b)) != len(rank_b):
        raise ValueError("rankings must not repeat ids")
    if set(rank_a) != set(rank_b):
        raise ValueError("rankings cover different id sets")
    n = len(rank_a)
    if n < 2:
        return 1.0
    pos_b = {item: k for k, item in enumerate(rank_b)}
    y = np.array([pos_b[i] for i in rank_a])
    # rank_a order is 0..n-1, so a pair (i<j) is concordant iff y[i] < y[j]
    upper = np.triu(np.sign(y[None, :] - y[:, None]), k=1)
    return float(upper.sum()) / (n * (n - 1) / 2)


@dataclass(frozen=True)
class Representativeness:
    tau_items: float
    tau_heroes: float
    all_items_present: bool
    all_heroes_present: bool


def validate_split_representativeness(whole: Dataset, part: Dataset) -> Representativeness:
    """Compare frequency rankings of a subset against the whole corpus."""
    w, p = compute_stats(whole), compute_stats(part)
    items = sorted(w.item_freq)
    heroes = sorted(w.hero_freq)
    return Representativeness(
        tau_items=kendall_tau(frequency_ranking(w.item_freq, items), frequency_ranking(p.item_freq, items)),
        tau_heroes=kendall_tau(frequency_ranking(w.hero_freq, heroes), frequency_ranking(p.hero_freq, heroes)),
        all_items_present=set(items) <= set(p.item_freq),
        all_heroes_present=set(heroes) <= set(p.hero_freq),
    )


def rolling_mean(values, window):
    """Centered rolling mean; windows shrink at the edges so length is kept."""
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    v = np.asarray(values, dtype=np.float64)
    if window == 1 or v.size == 0:
        return v.copy()
    half = window // 2
    csum = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.arange(v.size)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, v.size)
    return (csum[hi] - csum[lo]) / (hi - lo)


SERIES = ("item_purchase_time", "match_duration", "session_length")


def plot_data(d: Dataset, series, bin_s=60, window_bins=5, item_id=None):
    """Binned, normalized distribution for one plot series.

    ``item_purchase_time`` (needs ``item_id``) and ``match_duration`` bin in
    seconds and apply a centered rolling mean; ``session_length`` is a plain
    normalized histogram with bins of ``bin_s`` purchases.
    Returns a list of ``(bin_start, value)`` rows.
    """
    if bin_s <= 0:
        raise ValueError("bin_s must be positive")
    if series == "item_purchase_time":
        if item_id is None:
            raise ValueError("item_purchase_time needs an item_id")
        events = [t for s in d.sessions() for i, t in zip(s.items, s.times) if i == item_id]
    elif series == "match_duration":
        events = [m.duration_s for m in d.matches]
    elif series == "session_length":
        events = [len(s) for s in d.sessions()]
    else:
        raise ValueError(f"unknown series {series!r}")
    if not events:
        raise DataError("no events")

    bins = np.floor(np.asarray(events, dtype=np.float64) / bin_s).astype(np.int64)
    first = min(0, int(bins.min()))
    counts = np.bincount(bins - first)
    values = counts / len(events)
    if series != "session_length":
        values = rolling_mean(values, window_bins)
    return [((first + k) * bin_s, float(v)) for k, v in enumerate(values)]


def plot_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin_start_s", "value"])
    for start, value in rows:
        w.writerow([start, repr(value)])
    return buf.getvalue()
